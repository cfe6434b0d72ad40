use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{lit, WorldModelError};
use crate::autodiff::{Graph, Scalar, Tensor, Var};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian mixture over the latent space. `mu` and `sigma` are
/// `K x L`, row `k` belonging to component `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmParams {
    pub pi: Vec<f32>,
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
    pub latent_dim: usize,
}

impl GmmParams {
    pub fn mixtures(&self) -> usize {
        self.pi.len()
    }

    pub fn component_mu(&self, k: usize) -> &[f32] {
        &self.mu[k * self.latent_dim..(k + 1) * self.latent_dim]
    }

    pub fn component_sigma(&self, k: usize) -> &[f32] {
        &self.sigma[k * self.latent_dim..(k + 1) * self.latent_dim]
    }

    /// Index of the largest mixture weight, lowest index on ties.
    pub fn most_likely(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.pi.iter().enumerate() {
            if p > self.pi[best] {
                best = k;
            }
        }
        best
    }
}

/// One world-model step: next-latent mixture, reward mean and terminal
/// probability.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPrediction {
    pub gmm: GmmParams,
    pub reward_mean: f32,
    pub terminal_p: f32,
}

/// Negative log-likelihood of `z` under the mixture, evaluated in `f64`
/// with a log-sum-exp over components.
pub fn gmm_nll(g: &GmmParams, z: &[f32]) -> Result<f64, WorldModelError> {
    let l = g.latent_dim;
    if z.len() != l {
        return Err(WorldModelError::Length {
            what: "latent",
            expected: l,
            got: z.len(),
        });
    }
    if let Some(&bad) = g.sigma.iter().find(|&&s| s.is_nan() || s <= 0.0) {
        return Err(WorldModelError::NonPositiveSigma(bad));
    }
    let mut logs = Vec::with_capacity(g.mixtures());
    for k in 0..g.mixtures() {
        let mut acc = libm::log(g.pi[k] as f64);
        for ((&zi, &m), &s) in z.iter().zip(g.component_mu(k)).zip(g.component_sigma(k)) {
            let (s, d) = (s as f64, (zi - m) as f64);
            acc += -0.5 * (d / s) * (d / s) - libm::log(s) - 0.5 * LN_2PI;
        }
        logs.push(acc);
    }
    Ok(-crate::autodiff::logsumexp_slice(&logs))
}

/// Per-row mixture NLL on a graph.
///
/// `pi_logits` is `B x K` (unnormalised), `mu` and `log_sigma` are
/// `B x (K*L)` laid out component-major, `z` is `B x L`. Returns `B x 1`.
pub fn gmm_nll_graph<T: Scalar>(
    g: &mut Graph<T>,
    pi_logits: Var,
    mu: Var,
    log_sigma: Var,
    z: Var,
) -> Result<Var, WorldModelError> {
    let (batch, k) = g.value(pi_logits).dims2()?;
    let (_, l) = g.value(z).dims2()?;

    let norm = g.logsumexp(pi_logits)?;
    let log_pi = g.sub(pi_logits, norm)?;

    let copies: Vec<Var> = (0..k).map(|_| z).collect();
    let z_rep = g.concat_cols(&copies)?;
    let diff = g.sub(z_rep, mu)?;
    let neg_ls = g.neg(log_sigma)?;
    let inv_sigma = g.exp(neg_ls)?;
    let scaled = g.mul(diff, inv_sigma)?;
    let sq = g.square(scaled)?;
    let half_sq = g.scale(sq, lit(-0.5))?;
    let per_dim = g.sub(half_sq, log_sigma)?;
    let per_dim = g.reshape(per_dim, alloc::vec![batch * k, l])?;
    let per_comp = g.sum_cols(per_dim)?;
    let per_comp = g.reshape(per_comp, alloc::vec![batch, k])?;
    let constant = g.input(Tensor::scalar(lit::<T>(-0.5 * LN_2PI * l as f64)));
    let per_comp = g.add(per_comp, constant)?;
    let joint = g.add(per_comp, log_pi)?;
    let ll = g.logsumexp(joint)?;
    Ok(g.neg(ll)?)
}

/// `(r - reward_mean)^2 + BCE(tau, terminal_p) + GMM-NLL(z_next)`, unweighted.
pub fn mdrnn_loss(
    pred: &StepPrediction,
    z_next: &[f32],
    reward: f32,
    terminal: bool,
) -> Result<f64, WorldModelError> {
    let mse = {
        let d = (reward - pred.reward_mean) as f64;
        d * d
    };
    let p = (pred.terminal_p as f64).clamp(1e-7, 1.0 - 1e-7);
    let bce = if terminal {
        -libm::log(p)
    } else {
        -libm::log(1.0 - p)
    };
    Ok(mse + bce + gmm_nll(&pred.gmm, z_next)?)
}

/// Picks a component from `pi`, then samples it.
pub fn sample_next_latent<R: Rng + ?Sized>(g: &GmmParams, rng: &mut R) -> Vec<f32> {
    let u: f32 = rng.random();
    let mut k = g.mixtures() - 1;
    let mut acc = 0.0;
    for (i, &p) in g.pi.iter().enumerate() {
        acc += p;
        if u < acc {
            k = i;
            break;
        }
    }
    g.component_mu(k)
        .iter()
        .zip(g.component_sigma(k))
        .map(|(&m, &s)| {
            let eps: f32 = StandardNormal.sample(rng);
            m + s * eps
        })
        .collect()
}

/// Mean of the most likely component.
pub fn expected_next_latent(g: &GmmParams) -> Vec<f32> {
    g.component_mu(g.most_likely()).to_vec()
}
