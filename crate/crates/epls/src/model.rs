use std::path::Path;

use epls_core::autodiff::ParamSet;
use epls_core::env::Action;
use epls_core::pipeline::{derive_seed, Stream};
use epls_core::worldmodel::{Mdrnn, Vae, WorldModelError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::format::{load_checkpoint, save_checkpoint, FormatError};

const VAE_PREFIX: &str = "vae.";
const MDRNN_PREFIX: &str = "mdrnn.";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("checkpoint has no `{0}` tensors")]
    Missing(&'static str),
    #[error("invalid checkpoint: {0}")]
    Invalid(#[from] WorldModelError),
}

/// Freshly initialised VAE for `config`, seeded from the master seed.
pub fn init_vae(config: &Config) -> Vae {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, Stream::Model, 0));
    Vae::new(config.vae_config(), &mut rng)
}

pub fn init_mdrnn(config: &Config) -> Mdrnn {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, Stream::Model, 1));
    Mdrnn::new(config.mdrnn_config(), &mut rng)
}

pub fn vae_params(vae: &Vae) -> ParamSet {
    let mut p = ParamSet::new();
    p.extend_prefixed(VAE_PREFIX, vae.params());
    p
}

/// Extracts the VAE from a checkpoint holding at least the `vae.` tensors.
pub fn vae_from_params(params: &ParamSet, kl_weight: f32) -> Result<Vae, ModelError> {
    let inner = params.with_prefix_stripped(VAE_PREFIX);
    if inner.is_empty() {
        return Err(ModelError::Missing("vae"));
    }
    Ok(Vae::from_params(inner, kl_weight)?)
}

pub fn load_vae(path: &Path, kl_weight: f32) -> Result<Vae, ModelError> {
    vae_from_params(&load_checkpoint(path)?, kl_weight)
}

/// VAE and MDN-RNN, stored together in one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldModel {
    pub vae: Vae,
    pub mdrnn: Mdrnn,
}

impl WorldModel {
    pub fn init(config: &Config) -> Self {
        Self {
            vae: init_vae(config),
            mdrnn: init_mdrnn(config),
        }
    }

    pub fn to_params(&self) -> ParamSet {
        let mut p = vae_params(&self.vae);
        p.extend_prefixed(MDRNN_PREFIX, self.mdrnn.params());
        p
    }

    pub fn from_params(params: &ParamSet, kl_weight: f32) -> Result<Self, ModelError> {
        let vae = vae_from_params(params, kl_weight)?;
        let inner = params.with_prefix_stripped(MDRNN_PREFIX);
        if inner.is_empty() {
            return Err(ModelError::Missing("mdrnn"));
        }
        let mdrnn = Mdrnn::from_params(inner, Action::DIM)?;
        if mdrnn.config().latent_dim != vae.config().latent_dim {
            return Err(ModelError::Invalid(WorldModelError::Length {
                what: "mdrnn latent",
                expected: vae.config().latent_dim,
                got: mdrnn.config().latent_dim,
            }));
        }
        Ok(Self { vae, mdrnn })
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        save_checkpoint(path, &self.to_params())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_params(&load_checkpoint(path)?, 1.0)
    }
}
