//! Learned world model: a VAE that compresses rasters into latent vectors and
//! a recurrent mixture-density network that predicts the next latent, the
//! reward and the terminal flag from the current latent and action.
//!
//! Both networks exist in two forms that share one [`ParamSet`]:
//! graph builders (generic over [`Scalar`]) used for training and gradient
//! checks, and allocation-light `f32` inference used by the planner.

mod gmm;
mod mdrnn;
mod vae;

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{AutodiffError, ParamSet, Scalar, Tensor};

pub use gmm::{
    expected_next_latent, gmm_nll, gmm_nll_graph, mdrnn_loss, sample_next_latent, GmmParams,
    StepPrediction,
};
pub use mdrnn::{Mdrnn, MdrnnConfig, MdrnnHeads, MdrnnVars, WorldModelState};
pub use vae::{vae_kl, vae_loss, vae_sample, LatentGaussian, Vae, VaeConfig, VaeOutputs, VaeVars};

/// Bounds applied to every log-sigma head before exponentiation.
pub const LOG_SIGMA_MIN: f32 = -5.0;
pub const LOG_SIGMA_MAX: f32 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldModelError {
    #[error("{what}: expected length {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f32),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Uniform(-s, s) with `s = 1 / sqrt(fan_in)`, for weight and bias alike.
pub(crate) fn init_linear<R: Rng + ?Sized>(
    params: &mut ParamSet,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let s = 1.0 / libm::sqrtf(fan_in as f32);
    let dist = Uniform::new_inclusive(-s, s).expect("finite bounds");
    let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| dist.sample(rng)).collect() };
    let w = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out)).expect("shape");
    let b = Tensor::matrix(1, fan_out, draw(fan_out)).expect("shape");
    params.insert(alloc::format!("{name}.w"), w);
    params.insert(alloc::format!("{name}.b"), b);
}

pub(crate) fn check_param_shapes(
    params: &ParamSet,
    expected: &[(&str, [usize; 2])],
) -> Result<(), WorldModelError> {
    for (name, shape) in expected {
        let t = params.require(name)?;
        if t.shape() != shape {
            return Err(WorldModelError::ParamShape {
                name: (*name).into(),
                expected: shape.to_vec(),
                got: t.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// `out = x * w + b` for a single row `x`, with `w` stored `in x out`.
pub(crate) fn dense(x: &[f32], w: &Tensor, b: &Tensor, out: &mut Vec<f32>) {
    let cols = b.len();
    out.clear();
    out.extend_from_slice(b.data());
    for (xi, wrow) in x.iter().zip(w.data().chunks_exact(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(wrow) {
            *o += xi * wv;
        }
    }
}

pub(crate) fn relu_in_place(v: &mut [f32]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

pub(crate) fn clamp_log_sigma(v: f32) -> f32 {
    v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)
}

pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v)
}
