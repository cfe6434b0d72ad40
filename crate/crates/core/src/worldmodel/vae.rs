use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_param_shapes, clamp_log_sigma, dense, init_linear, lit, relu_in_place};
use super::{WorldModelError, LOG_SIGMA_MAX, LOG_SIGMA_MIN};
use crate::autodiff::{Graph, ParamSet, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaeConfig {
    pub obs_dim: usize,
    pub latent_dim: usize,
    /// Widths of the two hidden layers; the decoder mirrors them.
    pub hidden: [usize; 2],
    /// Weight of the KL term.
    pub kl_weight: f32,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            obs_dim: crate::env::OBS_DIM,
            latent_dim: 8,
            hidden: [256, 128],
            kl_weight: 1.0,
        }
    }
}

/// Diagonal Gaussian posterior over the latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGaussian {
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
}

const NAMES: [&str; 14] = [
    "enc1.w", "enc1.b", "enc2.w", "enc2.b", "mu.w", "mu.b", "logsig.w", "logsig.b", "dec1.w",
    "dec1.b", "dec2.w", "dec2.b", "dec3.w", "dec3.b",
];

/// MLP variational autoencoder over flattened rasters.
#[derive(Clone, Debug, PartialEq)]
pub struct Vae {
    config: VaeConfig,
    params: ParamSet,
}

/// Graph handles for every VAE parameter, in [`Vae::params`] order.
#[derive(Clone, Copy, Debug)]
pub struct VaeVars {
    vars: [Var; 14],
}

impl VaeVars {
    pub fn from_slice(vars: &[Var]) -> Self {
        let mut out = [vars[0]; 14];
        out.copy_from_slice(&vars[..14]);
        Self { vars: out }
    }

    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VaeOutputs {
    pub mu: Var,
    /// Already clamped to `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
    pub log_sigma: Var,
    pub z: Var,
    pub recon: Var,
}

impl Vae {
    fn layout(config: &VaeConfig) -> [(&'static str, [usize; 2]); 14] {
        let (d, l, [h1, h2]) = (config.obs_dim, config.latent_dim, config.hidden);
        [
            (NAMES[0], [d, h1]),
            (NAMES[1], [1, h1]),
            (NAMES[2], [h1, h2]),
            (NAMES[3], [1, h2]),
            (NAMES[4], [h2, l]),
            (NAMES[5], [1, l]),
            (NAMES[6], [h2, l]),
            (NAMES[7], [1, l]),
            (NAMES[8], [l, h2]),
            (NAMES[9], [1, h2]),
            (NAMES[10], [h2, h1]),
            (NAMES[11], [1, h1]),
            (NAMES[12], [h1, d]),
            (NAMES[13], [1, d]),
        ]
    }

    pub fn new<R: Rng + ?Sized>(config: VaeConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        for pair in Self::layout(&config).chunks(2) {
            let (name, [fan_in, fan_out]) = pair[0];
            init_linear(
                &mut params,
                name.trim_end_matches(".w"),
                fan_in,
                fan_out,
                rng,
            );
        }
        Self { config, params }
    }

    /// Every weight and bias zero.
    pub fn zeroed(config: VaeConfig) -> Self {
        let mut params = ParamSet::new();
        for (name, shape) in Self::layout(&config) {
            params.insert(name, Tensor::zeros(&shape));
        }
        Self { config, params }
    }

    /// Rebuilds a VAE from stored tensors, inferring the dimensions.
    pub fn from_params(params: ParamSet, kl_weight: f32) -> Result<Self, WorldModelError> {
        let enc1 = params.require("enc1.w")?;
        let enc2 = params.require("enc2.w")?;
        let mu = params.require("mu.w")?;
        let dims = |t: &Tensor| t.dims2().map_err(WorldModelError::from);
        let (d, h1) = dims(enc1)?;
        let (_, h2) = dims(enc2)?;
        let (_, l) = dims(mu)?;
        let config = VaeConfig {
            obs_dim: d,
            latent_dim: l,
            hidden: [h1, h2],
            kl_weight,
        };
        check_param_shapes(&params, &Self::layout(&config))?;
        let mut ordered = ParamSet::new();
        for name in NAMES {
            ordered.insert(name, params.require(name)?.clone());
        }
        Ok(Self {
            config,
            params: ordered,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn p(&self, i: usize) -> &Tensor {
        &self.params.tensors()[i]
    }

    pub fn encode(&self, obs: &[f32]) -> Result<LatentGaussian, WorldModelError> {
        if obs.len() != self.config.obs_dim {
            return Err(WorldModelError::Length {
                what: "observation",
                expected: self.config.obs_dim,
                got: obs.len(),
            });
        }
        let mut h1 = Vec::new();
        let mut h2 = Vec::new();
        dense(obs, self.p(0), self.p(1), &mut h1);
        relu_in_place(&mut h1);
        dense(&h1, self.p(2), self.p(3), &mut h2);
        relu_in_place(&mut h2);
        let mut mu = Vec::new();
        let mut log_sigma = Vec::new();
        dense(&h2, self.p(4), self.p(5), &mut mu);
        dense(&h2, self.p(6), self.p(7), &mut log_sigma);
        let sigma = log_sigma
            .iter()
            .map(|&v| libm::expf(clamp_log_sigma(v)))
            .collect();
        Ok(LatentGaussian { mu, sigma })
    }

    pub fn decode(&self, z: &[f32]) -> Result<Vec<f32>, WorldModelError> {
        if z.len() != self.config.latent_dim {
            return Err(WorldModelError::Length {
                what: "latent",
                expected: self.config.latent_dim,
                got: z.len(),
            });
        }
        let mut h1 = Vec::new();
        let mut h2 = Vec::new();
        let mut out = Vec::new();
        dense(z, self.p(8), self.p(9), &mut h1);
        relu_in_place(&mut h1);
        dense(&h1, self.p(10), self.p(11), &mut h2);
        relu_in_place(&mut h2);
        dense(&h2, self.p(12), self.p(13), &mut out);
        for v in &mut out {
            *v = crate::autodiff::sigmoid(*v);
        }
        Ok(out)
    }

    /// Batched forward pass on a graph. `obs` is `B x D`, `noise` is `B x L`
    /// standard-normal draws used for the reparameterised sample.
    pub fn forward_graph<T: Scalar>(
        vars: &VaeVars,
        g: &mut Graph<T>,
        obs: Var,
        noise: Var,
    ) -> Result<VaeOutputs, WorldModelError> {
        let v = &vars.vars;
        let linear = |g: &mut Graph<T>, x: Var, w: Var, b: Var| -> Result<Var, WorldModelError> {
            let y = g.matmul(x, w)?;
            Ok(g.add(y, b)?)
        };
        let h = linear(g, obs, v[0], v[1])?;
        let h = g.relu(h)?;
        let h = linear(g, h, v[2], v[3])?;
        let h = g.relu(h)?;
        let mu = linear(g, h, v[4], v[5])?;
        let raw = linear(g, h, v[6], v[7])?;
        let log_sigma = g.clamp(raw, lit(LOG_SIGMA_MIN as f64), lit(LOG_SIGMA_MAX as f64))?;
        let sigma = g.exp(log_sigma)?;
        let spread = g.mul(sigma, noise)?;
        let z = g.add(mu, spread)?;
        let d = linear(g, z, v[8], v[9])?;
        let d = g.relu(d)?;
        let d = linear(g, d, v[10], v[11])?;
        let d = g.relu(d)?;
        let d = linear(g, d, v[12], v[13])?;
        let recon = g.sigmoid(d)?;
        Ok(VaeOutputs {
            mu,
            log_sigma,
            z,
            recon,
        })
    }

    /// Batch mean of `sum (obs - recon)^2 + kl_weight * KL`.
    pub fn loss_graph<T: Scalar>(
        g: &mut Graph<T>,
        obs: Var,
        out: &VaeOutputs,
        kl_weight: f32,
    ) -> Result<Var, WorldModelError> {
        let (batch, _) = g.value(obs).dims2()?;
        let diff = g.sub(obs, out.recon)?;
        let sq = g.square(diff)?;
        let recon_err = g.sum(sq)?;

        let one = g.input(Tensor::scalar(T::one()));
        let two_ls = g.scale(out.log_sigma, lit(2.0))?;
        let var = g.exp(two_ls)?;
        let mu2 = g.square(out.mu)?;
        let t = g.add(two_ls, one)?;
        let t = g.sub(t, mu2)?;
        let t = g.sub(t, var)?;
        let s = g.sum(t)?;
        let kl = g.scale(s, lit(-0.5 * kl_weight as f64))?;

        let total = g.add(recon_err, kl)?;
        Ok(g.scale(total, lit(1.0 / batch as f64))?)
    }

    /// Loads the parameters into `g` as trainable leaves.
    pub fn load<T: Scalar>(&self, g: &mut Graph<T>) -> VaeVars {
        let vars: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|t| g.param(t.cast()))
            .collect();
        VaeVars::from_slice(&vars)
    }
}

/// `KL(N(mu, sigma) || N(0, I))` for a diagonal Gaussian.
pub fn vae_kl(g: &LatentGaussian) -> f32 {
    let s: f64 =
        g.mu.iter()
            .zip(&g.sigma)
            .map(|(&m, &s)| {
                let (m, s) = (m as f64, s as f64);
                1.0 + libm::log(s * s) - m * m - s * s
            })
            .sum();
    (-0.5 * s) as f32
}

/// Squared reconstruction error plus `kl_weight` times the KL term.
pub fn vae_loss(
    obs: &[f32],
    recon: &[f32],
    g: &LatentGaussian,
    kl_weight: f32,
) -> Result<f32, WorldModelError> {
    if obs.len() != recon.len() {
        return Err(WorldModelError::Length {
            what: "reconstruction",
            expected: obs.len(),
            got: recon.len(),
        });
    }
    let err: f64 = obs
        .iter()
        .zip(recon)
        .map(|(&o, &r)| {
            let d = (o - r) as f64;
            d * d
        })
        .sum();
    Ok(err as f32 + kl_weight * vae_kl(g))
}

/// Reparameterised draw `mu + sigma * eps`, `eps ~ N(0, I)`.
pub fn vae_sample<R: Rng + ?Sized>(g: &LatentGaussian, rng: &mut R) -> Vec<f32> {
    let mut z = vec![0.0; g.mu.len()];
    for ((out, &m), &s) in z.iter_mut().zip(&g.mu).zip(&g.sigma) {
        let eps: f32 = StandardNormal.sample(rng);
        *out = m + s * eps;
    }
    z
}
