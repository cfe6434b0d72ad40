use alloc::vec::Vec;

use super::{AutodiffError, ParamSet, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Holds one pair of moment tensors per parameter.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar = f32> {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = |t: &Tensor<T>| Tensor::zeros(t.shape());
        Self {
            config,
            step: 0,
            first: params.tensors().iter().map(zeros).collect(),
            second: params.tensors().iter().map(zeros).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient rejects the whole update
    /// and leaves parameters and moments untouched.
    pub fn step(
        &mut self,
        params: &mut ParamSet<T>,
        grads: &[Tensor<T>],
    ) -> Result<(), AutodiffError> {
        if grads.len() != params.len() || grads.len() != self.first.len() {
            return Err(AutodiffError::Arity {
                op: "adam_step",
                expected: params.len(),
                got: grads.len(),
            });
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if !p.same_shape(g) {
                return Err(AutodiffError::Shape {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(AutodiffError::NonFiniteGradient { name: name.into() });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::one();
        let correction1 = T::from_f64(1.0 - libm::pow(c.beta1, t as f64));
        let correction2 = T::from_f64(1.0 - libm::pow(c.beta2, t as f64));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);

        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
