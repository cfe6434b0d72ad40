use alloc::vec;
use alloc::vec::Vec;

use super::{AutodiffError, Scalar, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operations accepted by [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Relu,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryOp {
    Neg,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Relu,
    Square,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryOp, Var, Var),
    Unary(UnaryOp, Var),
    Scale(Var, T),
    Clamp(Var, T, T),
    Sum(Var),
    SumCols(Var),
    LogSumExp(Var),
    Slice(Var, usize),
    Concat(Vec<Var>),
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    /// Accumulated gradient, only kept for leaves.
    grad: Option<Tensor<T>>,
}

/// Tape of tensor operations supporting reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the tape is already a
/// topological order of the computation and backward simply walks it in
/// reverse.
#[derive(Clone, Debug, Default)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn broadcast_index(i: usize, j: usize, rows: usize, cols: usize) -> usize {
    let r = if rows == 1 { 0 } else { i };
    let c = if cols == 1 { 0 } else { j };
    r * cols + c
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; no gradient is tracked for it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// Accumulated gradient of a leaf, or `None` if backward never reached it.
    pub fn grad(&self, var: Var) -> Option<&Tensor<T>> {
        self.nodes[var.0].grad.as_ref()
    }

    /// Gradient of a leaf, zero-filled when backward never reached it.
    pub fn grad_or_zeros(&self, var: Var) -> Tensor<T> {
        match &self.nodes[var.0].grad {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[var.0].value.shape()),
        }
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(AutodiffError::Shape {
                op: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            T::zero(),
            &mut out,
        );
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn elementwise(&mut self, op: Elementwise, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(AutodiffError::Arity {
                op: "elementwise",
                expected: arity,
                got: inputs.len(),
            });
        }
        match op {
            Elementwise::Add => self.add(inputs[0], inputs[1]),
            Elementwise::Sub => self.sub(inputs[0], inputs[1]),
            Elementwise::Mul => self.mul(inputs[0], inputs[1]),
            Elementwise::Tanh => self.tanh(inputs[0]),
            Elementwise::Sigmoid => self.sigmoid(inputs[0]),
            Elementwise::Exp => self.exp(inputs[0]),
            Elementwise::Log => self.log(inputs[0]),
            Elementwise::Relu => self.relu(inputs[0]),
            Elementwise::Square => self.square(inputs[0]),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(BinaryOp::Mul, a, b)
    }

    /// Binary op with broadcasting of size-1 rows and columns (which covers
    /// scalars, bias rows and per-row columns).
    fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let ta = self.value(a);
        let tb = self.value(b);
        let (r1, c1) = ta.dims2()?;
        let (r2, c2) = tb.dims2()?;
        let dim = |x: usize, y: usize| -> Option<usize> {
            if x == y || y == 1 {
                Some(x)
            } else if x == 1 {
                Some(y)
            } else {
                None
            }
        };
        let (rows, cols) = match (dim(r1, r2), dim(c1, c2)) {
            (Some(r), Some(c)) => (r, c),
            _ => {
                return Err(AutodiffError::Shape {
                    op: "elementwise",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                })
            }
        };
        let f = |x: T, y: T| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
        };
        let data: Vec<T> = if ta.same_shape(tb) {
            ta.data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect()
        } else {
            let (da, db) = (ta.data(), tb.data());
            let mut out = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for j in 0..cols {
                    out.push(f(
                        da[broadcast_index(i, j, r1, c1)],
                        db[broadcast_index(i, j, r2, c2)],
                    ));
                }
            }
            out
        };
        let shape = if (r1, c1) == (rows, cols) {
            ta.shape().to_vec()
        } else if (r2, c2) == (rows, cols) {
            tb.shape().to_vec()
        } else {
            vec![rows, cols]
        };
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if op == UnaryOp::Log {
            if let Some(&bad) = x.data().iter().find(|&&v| v <= T::zero()) {
                return Err(AutodiffError::Domain {
                    op: "log",
                    value: bad.as_f64(),
                });
            }
        }
        let value = x.map(|v| match op {
            UnaryOp::Neg => -v,
            UnaryOp::Tanh => v.tanh(),
            UnaryOp::Sigmoid => sigmoid(v),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Log => v.ln(),
            UnaryOp::Relu => {
                if v > T::zero() {
                    v
                } else {
                    T::zero()
                }
            }
            UnaryOp::Square => v * v,
        });
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Unary(op, a), rg))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(UnaryOp::Relu, a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(UnaryOp::Square, a)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Scale(a, factor), rg))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Result<Var, AutodiffError> {
        let value = self.value(a).map(|v| v.max(lo).min(hi));
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Clamp(a, lo, hi), rg))
    }

    /// Sum of all elements, as a `1 x 1` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let total = self
            .value(a)
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::scalar(total), Op::Sum(a), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let n = self.value(a).len();
        let s = self.sum(a)?;
        self.scale(s, T::one() / T::from_f64(n as f64))
    }

    /// Row sums: `m x n -> m x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        let (rows, cols) = x.dims2()?;
        let data = x
            .data()
            .chunks(cols)
            .map(|row| row.iter().fold(T::zero(), |acc, &v| acc + v))
            .collect();
        let value = Tensor::new(vec![rows, 1], data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::SumCols(a), rg))
    }

    /// Numerically stable row-wise log-sum-exp: `m x n -> m x 1`.
    ///
    /// For a rank 1 input this is the scalar `max(x) + ln sum exp(x - max(x))`.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        let (rows, cols) = x.dims2()?;
        let data = x.data().chunks(cols).map(logsumexp_slice).collect();
        let value = Tensor::new(vec![rows, 1], data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::LogSumExp(a), rg))
    }

    /// Column range `[start, end)` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        let (rows, cols) = x.dims2()?;
        if start >= end || end > cols {
            return Err(AutodiffError::Shape {
                op: "slice_cols",
                lhs: x.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for row in x.data().chunks(cols) {
            data.extend_from_slice(&row[start..end]);
        }
        let value = Tensor::new(vec![rows, end - start], data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Slice(a, start), rg))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = *parts.first().ok_or(AutodiffError::Arity {
            op: "concat_cols",
            expected: 1,
            got: 0,
        })?;
        let (rows, _) = self.value(first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(AutodiffError::Shape {
                    op: "concat_cols",
                    lhs: self.value(first).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        let value = self.value(a).clone().reshaped(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Reverse pass from a scalar loss. Gradients of trainable leaves are
    /// added to whatever they already hold; call [`Graph::zero_grad`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: root.value.shape().to_vec(),
            });
        }
        if !root.requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(root.value.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    let leaf = &mut self.nodes[idx];
                    match &mut leaf.grad {
                        Some(acc) => acc.add_assign(&g),
                        None => leaf.grad = Some(g),
                    }
                }
                op => {
                    let contributions = self.local_backward(op, &node.value, &g)?;
                    for (var, contrib) in contributions {
                        if !self.nodes[var.0].requires_grad {
                            continue;
                        }
                        match &mut grads[var.0] {
                            Some(acc) => acc.add_assign(&contrib),
                            slot @ None => *slot = Some(contrib),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn local_backward(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: &Tensor<T>,
    ) -> Result<Vec<(Var, Tensor<T>)>, AutodiffError> {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut res = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(a).dims2()?;
                let (_, n) = val(b).dims2()?;
                if wants(a) {
                    let mut ga = vec![T::zero(); m * k];
                    T::gemm(
                        m,
                        n,
                        k,
                        g.data(),
                        false,
                        val(b).data(),
                        true,
                        T::zero(),
                        &mut ga,
                    );
                    res.push((a, Tensor::new(val(a).shape().to_vec(), ga)?));
                }
                if wants(b) {
                    let mut gb = vec![T::zero(); k * n];
                    T::gemm(
                        k,
                        m,
                        n,
                        val(a).data(),
                        true,
                        g.data(),
                        false,
                        T::zero(),
                        &mut gb,
                    );
                    res.push((b, Tensor::new(val(b).shape().to_vec(), gb)?));
                }
            }
            Op::Binary(bop, a, b) => {
                let (rows, cols) = out.dims2()?;
                for (side, this, other) in [(0, a, b), (1, b, a)] {
                    if !wants(this) {
                        continue;
                    }
                    let t = val(this);
                    let o = val(other);
                    let (tr, tc) = t.dims2()?;
                    let (or, oc) = o.dims2()?;
                    let sign = if bop == BinaryOp::Sub && side == 1 {
                        -T::one()
                    } else {
                        T::one()
                    };
                    let mut acc = vec![T::zero(); t.len()];
                    let gd = g.data();
                    if tr == rows && tc == cols && t.same_shape(o) {
                        for (i, slot) in acc.iter_mut().enumerate() {
                            *slot = match bop {
                                BinaryOp::Mul => gd[i] * o.data()[i],
                                _ => gd[i] * sign,
                            };
                        }
                    } else {
                        for i in 0..rows {
                            for j in 0..cols {
                                let gi = gd[i * cols + j];
                                let local = match bop {
                                    BinaryOp::Mul => o.data()[broadcast_index(i, j, or, oc)],
                                    _ => sign,
                                };
                                acc[broadcast_index(i, j, tr, tc)] += gi * local;
                            }
                        }
                    }
                    res.push((this, Tensor::new(t.shape().to_vec(), acc)?));
                }
            }
            Op::Unary(uop, a) => {
                let x = val(a).data();
                let y = out.data();
                let gd = g.data();
                let two = T::from_f64(2.0);
                let data = (0..x.len())
                    .map(|i| {
                        let d = match uop {
                            UnaryOp::Neg => -T::one(),
                            UnaryOp::Tanh => T::one() - y[i] * y[i],
                            UnaryOp::Sigmoid => y[i] * (T::one() - y[i]),
                            UnaryOp::Exp => y[i],
                            UnaryOp::Log => T::one() / x[i],
                            UnaryOp::Relu => {
                                if x[i] > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            UnaryOp::Square => two * x[i],
                        };
                        gd[i] * d
                    })
                    .collect();
                res.push((a, Tensor::new(val(a).shape().to_vec(), data)?));
            }
            Op::Scale(a, factor) => {
                res.push((a, g.map(|v| v * factor).reshaped(val(a).shape().to_vec())?));
            }
            Op::Clamp(a, lo, hi) => {
                let x = val(a).data();
                let data = g
                    .data()
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi >= lo && xi <= hi { gi } else { T::zero() })
                    .collect();
                res.push((a, Tensor::new(val(a).shape().to_vec(), data)?));
            }
            Op::Sum(a) => {
                res.push((a, Tensor::filled(val(a).shape(), g.data()[0])));
            }
            Op::SumCols(a) => {
                let (_, cols) = val(a).dims2()?;
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&gi| core::iter::repeat_n(gi, cols))
                    .collect();
                res.push((a, Tensor::new(val(a).shape().to_vec(), data)?));
            }
            Op::LogSumExp(a) => {
                let x = val(a);
                let (_, cols) = x.dims2()?;
                let mut data = Vec::with_capacity(x.len());
                for (i, row) in x.data().chunks(cols).enumerate() {
                    let lse = out.data()[i];
                    let gi = g.data()[i];
                    data.extend(row.iter().map(|&v| gi * (v - lse).exp()));
                }
                res.push((a, Tensor::new(x.shape().to_vec(), data)?));
            }
            Op::Slice(a, start) => {
                let (rows, cols) = val(a).dims2()?;
                let (_, w) = out.dims2()?;
                let mut data = vec![T::zero(); rows * cols];
                for i in 0..rows {
                    data[i * cols + start..i * cols + start + w]
                        .copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                res.push((a, Tensor::new(val(a).shape().to_vec(), data)?));
            }
            Op::Concat(ref parts) => {
                let (rows, total) = out.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = val(p).dims2()?;
                    if wants(p) {
                        let mut data = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            data.extend_from_slice(
                                &g.data()[i * total + offset..i * total + offset + w],
                            );
                        }
                        res.push((p, Tensor::new(val(p).shape().to_vec(), data)?));
                    }
                    offset += w;
                }
            }
            Op::Reshape(a) => {
                res.push((a, g.clone().reshaped(val(a).shape().to_vec())?));
            }
        }
        Ok(res)
    }
}

pub(crate) fn logsumexp_slice<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + s.ln()
}
