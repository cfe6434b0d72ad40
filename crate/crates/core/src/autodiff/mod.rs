//! Reverse-mode differentiation over dense row-major tensors, plus Adam.
//!
//! A [`Graph`] is a single-owner tape. Parameters live outside the graph in a
//! [`ParamSet`]; each training step loads them as leaves, runs forward and
//! backward, and hands the leaf gradients to [`Adam`].

mod adam;
mod gradcheck;
mod graph;
mod params;
mod scalar;
mod tensor;

use alloc::string::String;
use alloc::vec::Vec;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::max_gradient_error;
pub use graph::{Elementwise, Graph, Var};
pub use params::ParamSet;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub(crate) use graph::{logsumexp_slice, sigmoid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid tensor shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op} expects {expected} input(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("domain error in {op}: input {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("unknown parameter `{name}`")]
    UnknownParam { name: String },
}
