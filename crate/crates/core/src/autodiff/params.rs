use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{AutodiffError, Graph, Scalar, Tensor, Var};

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T: Scalar = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Appends a tensor; replaces it if the name is already present.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        let name = name.into();
        match self.position(&name) {
            Some(i) => self.tensors[i] = tensor,
            None => {
                self.names.push(name);
                self.tensors.push(tensor);
            }
        }
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>, AutodiffError> {
        self.get(name).ok_or_else(|| AutodiffError::UnknownParam {
            name: name.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Loads every tensor into `graph` as a trainable leaf, in order.
    pub fn load_into(&self, graph: &mut Graph<T>) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| graph.param(t.clone()))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Tensors whose names start with `prefix`, with the prefix stripped.
    pub fn with_prefix_stripped(&self, prefix: &str) -> Self {
        let mut out = Self::new();
        for (name, t) in self.iter() {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.insert(rest, t.clone());
            }
        }
        out
    }

    /// Appends every tensor of `other` under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Self) {
        for (name, t) in other.iter() {
            let mut full = String::with_capacity(prefix.len() + name.len());
            full.push_str(prefix);
            full.push_str(name);
            self.insert(full, t.clone());
        }
    }
}
