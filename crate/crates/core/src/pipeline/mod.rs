//! Data collection, world-model training and policy evaluation.
//!
//! Everything here is deterministic given its seeds; persistence, timing
//! and orchestration of full experiments live in the `epls` crate.

mod eval;
mod policy;
mod rollout;
mod seeds;
mod train;

pub use eval::{mean_std, model_metrics, persistence_nll, ModelMetrics};
pub use policy::{
    collect_rollouts, eval_track_seeds, evaluate_policy, run_episode, BrownianPolicy,
    EpisodeOutcome, Policy, UniformPolicy,
};
pub use rollout::{PolicyTag, ReplayBuffer, Rollout};
pub use seeds::{derive_seed, Stream};
pub use train::{
    encode_rollout, encode_rollouts, train_mdrnn, train_vae, EncodedEpisode, MdrnnTrainConfig,
    TrainError, VaeTrainConfig,
};
