use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rollout::Rollout;
use crate::autodiff::{Adam, AdamConfig, Graph, Tensor, Var};
use crate::worldmodel::{Mdrnn, Vae, WorldModelError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-4,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdrnnTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Episodes per minibatch.
    pub batch_size: usize,
    /// Steps per truncated backpropagation window.
    pub bptt_len: usize,
    pub seed: u64,
}

impl Default for MdrnnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            batch_size: 16,
            bptt_len: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training data is empty")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] WorldModelError),
}

impl From<crate::autodiff::AutodiffError> for TrainError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        Self::Model(e.into())
    }
}

/// Trains `vae` on every observation of `rollouts` and returns the mean
/// per-sample loss of each epoch.
pub fn train_vae<'a>(
    vae: &mut Vae,
    rollouts: impl IntoIterator<Item = &'a Rollout>,
    config: &VaeTrainConfig,
) -> Result<Vec<f32>, TrainError> {
    let d = vae.config().obs_dim;
    let l = vae.config().latent_dim;
    let kl_weight = vae.config().kl_weight;
    let mut data: Vec<f32> = Vec::new();
    for r in rollouts {
        if r.obs_dim != d {
            return Err(WorldModelError::Length {
                what: "observation",
                expected: d,
                got: r.obs_dim,
            }
            .into());
        }
        data.extend_from_slice(&r.observations);
    }
    let n = data.len() / d;
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), vae.params());
    let batch = config.batch_size.max(1);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut rows = Vec::with_capacity(batch * d);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for chunk in order.chunks(batch) {
            rows.clear();
            for &i in chunk {
                rows.extend_from_slice(&data[i * d..(i + 1) * d]);
            }
            let noise: Vec<f32> = (0..chunk.len() * l)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let mut g = Graph::<f32>::new();
            let vars = vae.load(&mut g);
            let obs = g.input(Tensor::matrix(chunk.len(), d, rows.clone())?);
            let eps = g.input(Tensor::matrix(chunk.len(), l, noise)?);
            let out = Vae::forward_graph(&vars, &mut g, obs, eps)?;
            let loss = Vae::loss_graph(&mut g, obs, &out, kl_weight)?;
            total += g.value(loss).data()[0] as f64 * chunk.len() as f64;
            g.backward(loss)?;
            let grads: Vec<Tensor> = vars.all().iter().map(|&v| g.grad_or_zeros(v)).collect();
            adam.step(vae.params_mut(), &grads)?;
        }
        losses.push((total / n as f64) as f32);
    }
    Ok(losses)
}

/// Rollout mapped through the encoder mean.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedEpisode {
    pub latent_dim: usize,
    /// `len() x latent_dim`, row-major.
    pub z: Vec<f32>,
    pub actions: Vec<[f32; 3]>,
    pub rewards: Vec<f32>,
    pub terminals: Vec<bool>,
}

impl EncodedEpisode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn latent(&self, t: usize) -> &[f32] {
        &self.z[t * self.latent_dim..(t + 1) * self.latent_dim]
    }
}

pub fn encode_rollout(vae: &Vae, rollout: &Rollout) -> Result<EncodedEpisode, WorldModelError> {
    let l = vae.config().latent_dim;
    let mut z = Vec::with_capacity(rollout.len() * l);
    for t in 0..rollout.len() {
        z.extend_from_slice(&vae.encode(rollout.observation(t))?.mu);
    }
    Ok(EncodedEpisode {
        latent_dim: l,
        z,
        actions: rollout.actions.clone(),
        rewards: rollout.rewards.clone(),
        terminals: rollout.terminals.clone(),
    })
}

pub fn encode_rollouts<'a>(
    vae: &Vae,
    rollouts: impl IntoIterator<Item = &'a Rollout>,
) -> Result<Vec<EncodedEpisode>, WorldModelError> {
    rollouts
        .into_iter()
        .map(|r| encode_rollout(vae, r))
        .collect()
}

/// Teacher-forced truncated BPTT over minibatches of episodes. The recurrent
/// state carries across windows of one episode without gradient. Returns the
/// mean per-step loss of each epoch.
pub fn train_mdrnn(
    mdrnn: &mut Mdrnn,
    episodes: &[EncodedEpisode],
    config: &MdrnnTrainConfig,
) -> Result<Vec<f32>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), mdrnn.params());
    let mut order: Vec<usize> = (0..episodes.len())
        .filter(|&i| !episodes[i].is_empty())
        .collect();
    let total_steps: usize = order.iter().map(|&i| episodes[i].len()).sum();
    if total_steps == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&EncodedEpisode> = chunk.iter().map(|&i| &episodes[i]).collect();
            total += train_batch(mdrnn, &mut adam, &batch, config.bptt_len.max(1))?;
        }
        losses.push((total / total_steps as f64) as f32);
    }
    Ok(losses)
}

/// One pass of TBPTT over a batch; returns the summed loss.
fn train_batch(
    mdrnn: &mut Mdrnn,
    adam: &mut Adam,
    batch: &[&EncodedEpisode],
    bptt: usize,
) -> Result<f64, WorldModelError> {
    let cfg = *mdrnn.config();
    let (b, l, a, hd) = (batch.len(), cfg.latent_dim, cfg.action_dim, cfg.hidden_dim);
    let horizon = batch.iter().map(|e| e.len()).max().unwrap_or(0);
    let mut h = Tensor::zeros(&[b, hd]);
    let mut c = Tensor::zeros(&[b, hd]);
    let mut total = 0.0f64;
    let mut start = 0;
    while start < horizon {
        let end = (start + bptt).min(horizon);
        let mut g = Graph::<f32>::new();
        let vars = mdrnn.load(&mut g);
        let mut hv = g.input(h.clone());
        let mut cv = g.input(c.clone());
        let mut step_losses: Vec<Var> = Vec::with_capacity(end - start);
        let mut real = 0usize;
        for t in start..end {
            let mut x = vec![0.0f32; b * (l + a)];
            let mut z_next = vec![0.0f32; b * l];
            let mut reward = vec![0.0f32; b];
            let mut terminal = vec![0.0f32; b];
            let mut mask = vec![0.0f32; b];
            let mut latent_mask = vec![0.0f32; b];
            for (i, e) in batch.iter().enumerate() {
                if t >= e.len() {
                    continue;
                }
                let row = &mut x[i * (l + a)..(i + 1) * (l + a)];
                row[..l].copy_from_slice(e.latent(t));
                row[l..].copy_from_slice(&e.actions[t][..a]);
                reward[i] = e.rewards[t];
                terminal[i] = if e.terminals[t] { 1.0 } else { 0.0 };
                mask[i] = 1.0;
                real += 1;
                if t + 1 < e.len() {
                    z_next[i * l..(i + 1) * l].copy_from_slice(e.latent(t + 1));
                    latent_mask[i] = 1.0;
                }
            }
            let xv = g.input(Tensor::matrix(b, l + a, x)?);
            let (hn, cn) = Mdrnn::cell_graph(&cfg, &vars, &mut g, xv, hv, cv)?;
            hv = hn;
            cv = cn;
            let heads = Mdrnn::heads_graph(&cfg, &vars, &mut g, hv)?;
            let col = |g: &mut Graph<f32>, v: Vec<f32>| -> Result<Var, WorldModelError> {
                Ok(g.input(Tensor::matrix(b, 1, v)?))
            };
            let zn = g.input(Tensor::matrix(b, l, z_next)?);
            let r = col(&mut g, reward)?;
            let tau = col(&mut g, terminal)?;
            let m = col(&mut g, mask)?;
            let lm = col(&mut g, latent_mask)?;
            step_losses.push(Mdrnn::step_loss_graph(&mut g, &heads, zn, r, tau, m, lm)?);
        }
        let summed = g.concat_cols(&step_losses)?;
        let summed = g.sum(summed)?;
        total += g.value(summed).data()[0] as f64;
        let loss = g.scale(summed, 1.0 / real.max(1) as f32)?;
        g.backward(loss)?;
        let grads: Vec<Tensor> = vars.all().iter().map(|&v| g.grad_or_zeros(v)).collect();
        adam.step(mdrnn.params_mut(), &grads)?;
        h = g.value(hv).clone();
        c = g.value(cv).clone();
        start = end;
    }
    Ok(total)
}
