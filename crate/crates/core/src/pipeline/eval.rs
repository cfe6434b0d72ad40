use alloc::vec::Vec;

use super::train::EncodedEpisode;
use crate::worldmodel::{gmm_nll, GmmParams, Mdrnn, WorldModelError};

/// Mean and sample standard deviation; the deviation of fewer than two
/// values is zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// NLL of `z_next` under a unit-variance Gaussian centred at `z`: the
/// score of a model that predicts no change.
pub fn persistence_nll(z: &[f32], z_next: &[f32]) -> Result<f64, WorldModelError> {
    let g = GmmParams {
        pi: alloc::vec![1.0],
        mu: z.to_vec(),
        sigma: alloc::vec![1.0; z.len()],
        latent_dim: z.len(),
    };
    gmm_nll(&g, z_next)
}

/// Held-out quality of a trained model against simple baselines.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelMetrics {
    /// Mean next-latent NLL over steps that have a next latent.
    pub gmm_nll: f64,
    /// Same, under the persistence baseline.
    pub persistence_nll: f64,
    pub reward_mse: f64,
    /// Variance of the held-out rewards, the MSE of predicting their mean.
    pub reward_variance: f64,
    /// Mean terminal BCE.
    pub terminal_bce: f64,
    pub steps: usize,
}

/// Teacher-forced one-step metrics of `mdrnn` on `episodes`.
pub fn model_metrics(
    mdrnn: &Mdrnn,
    episodes: &[EncodedEpisode],
) -> Result<ModelMetrics, WorldModelError> {
    let mut m = ModelMetrics::default();
    let mut latent_steps = 0usize;
    let mut rewards = Vec::new();
    for e in episodes {
        let mut state = mdrnn.initial_state();
        for t in 0..e.len() {
            let (pred, next) = mdrnn.step(e.latent(t), &e.actions[t], &state)?;
            state = next;
            let r = e.rewards[t] as f64;
            rewards.push(r);
            let d = r - pred.reward_mean as f64;
            m.reward_mse += d * d;
            let p = (pred.terminal_p as f64).clamp(1e-7, 1.0 - 1e-7);
            m.terminal_bce -= if e.terminals[t] {
                libm::log(p)
            } else {
                libm::log(1.0 - p)
            };
            if t + 1 < e.len() {
                m.gmm_nll += gmm_nll(&pred.gmm, e.latent(t + 1))?;
                m.persistence_nll += persistence_nll(e.latent(t), e.latent(t + 1))?;
                latent_steps += 1;
            }
        }
    }
    let n = rewards.len().max(1) as f64;
    let ln = latent_steps.max(1) as f64;
    m.steps = rewards.len();
    m.reward_mse /= n;
    m.terminal_bce /= n;
    m.gmm_nll /= ln;
    m.persistence_nll /= ln;
    let mean = rewards.iter().sum::<f64>() / n;
    m.reward_variance = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(m)
}
