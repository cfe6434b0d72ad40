//! Flat `key=value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys are rejected and missing keys keep their defaults.
//! [`Config::to_text`] renders every resolved key in a fixed order, so the
//! echo in reports is itself a valid config file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use epls_core::env::{EnvConfig, EnvSpec, TrackConfig};
use epls_core::pipeline::{BrownianPolicy, MdrnnTrainConfig, VaeTrainConfig};
use epls_core::planner::{LatentPropagation, PlannerConfig};
use epls_core::worldmodel::{MdrnnConfig, VaeConfig};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Read { path: String, message: String },
}

/// Random data-collection policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomPolicyKind {
    /// Clipped Gaussian random walk in action space.
    Brownian,
    /// Independent uniform actions.
    Uniform,
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! numeric_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                <$t>::from_str(s).map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

numeric_value!(u32, u64, usize, f32, f64);

impl ConfigValue for LatentPropagation {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "most_likely" => Ok(Self::MostLikely),
            "sampled" => Ok(Self::Sampled),
            _ => Err("expected most_likely or sampled".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            Self::MostLikely => "most_likely",
            Self::Sampled => "sampled",
        }
        .into()
    }
}

impl ConfigValue for RandomPolicyKind {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "brownian" => Ok(Self::Brownian),
            "uniform" => Ok(Self::Uniform),
            _ => Err("expected brownian or uniform".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            Self::Brownian => "brownian",
            Self::Uniform => "uniform",
        }
        .into()
    }
}

macro_rules! config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr, )*) => {
        /// Every tunable of an experiment, with desk-scale defaults.
        #[derive(Clone, Debug, PartialEq)]
        pub struct Config {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl Config {
            /// Recognised keys in echo order.
            pub const KEYS: &'static [&'static str] = &[$( stringify!($field) ),*];

            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $( stringify!($field) => {
                        self.$field = ConfigValue::parse_value(value).map_err(|reason| {
                            ConfigError::Value {
                                key: key.into(),
                                value: value.into(),
                                reason,
                            }
                        })?;
                    } )*
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                Ok(())
            }

            /// `(key, value)` pairs in [`Config::KEYS`] order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$( (stringify!($field), self.$field.render()) ),*]
            }
        }
    };
}

config! {
    /// Master seed; every random stream is derived from it.
    seed: u64 = 0,

    tiles: usize = 100,
    tile_length: f32 = 0.12,
    max_curvature: f32 = 0.2,
    curvature_step: f32 = 0.08,
    smoothing: f32 = 0.7,
    turn_bias: f32 = 0.0,
    straight_start: usize = 4,
    dt: f32 = 0.1,
    v_max: f32 = 2.0,
    accel_max: f32 = 1.0,
    brake_max: f32 = 2.0,
    drag: f32 = 0.05,
    turn_rate_max: f32 = 1.0,
    half_width: f32 = 0.5,
    max_steps: u32 = 200,

    latent_dim: usize = 8,
    vae_hidden1: usize = 256,
    vae_hidden2: usize = 128,
    kl_weight: f32 = 1.0,
    rnn_hidden: usize = 64,
    mixtures: usize = 3,

    random_policy: RandomPolicyKind = RandomPolicyKind::Brownian,
    brownian_sigma: f32 = BrownianPolicy::DEFAULT_SIGMA,
    collect_episodes: usize = 200,
    collect_steps: usize = 100,

    vae_epochs: usize = 20,
    vae_lr: f64 = 1e-4,
    vae_batch: usize = 32,
    mdrnn_epochs: usize = 30,
    mdrnn_lr: f64 = 1e-3,
    mdrnn_batch: usize = 16,
    bptt_len: usize = 32,

    horizon: usize = 20,
    generations: usize = 10,
    mutation_prob: f32 = 0.3,
    mutation_scale: f32 = 0.3,
    terminal_threshold: f32 = 0.5,
    propagation: LatentPropagation = LatentPropagation::MostLikely,

    eval_tracks: usize = 20,
    iterations: usize = 3,
    iteration_rollouts: usize = 50,
    buffer_capacity: usize = 500,
}

impl Config {
    /// Applies `key = value` lines on top of the defaults and validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Every resolved key as `key = value` lines.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.tiles < 10 {
            return fail("tiles must be at least 10");
        }
        if !(self.tile_length > 0.0) || !(self.half_width > 0.0) || !(self.v_max > 0.0) {
            return fail("tile_length, half_width and v_max must be positive");
        }
        if !(self.dt > 0.0) {
            return fail("dt must be positive");
        }
        if self.max_steps == 0 {
            return fail("max_steps must be at least 1");
        }
        if self.latent_dim == 0 || self.rnn_hidden == 0 || self.mixtures == 0 {
            return fail("latent_dim, rnn_hidden and mixtures must be at least 1");
        }
        if self.vae_hidden1 == 0 || self.vae_hidden2 == 0 {
            return fail("VAE hidden widths must be at least 1");
        }
        if self.horizon == 0 || self.generations == 0 {
            return fail("horizon and generations must be at least 1");
        }
        if !(self.mutation_prob > 0.0 && self.mutation_prob <= 1.0) {
            return fail("mutation_prob must lie in (0, 1]");
        }
        if !(self.mutation_scale > 0.0) {
            return fail("mutation_scale must be positive");
        }
        if self.collect_episodes == 0 || self.collect_steps == 0 {
            return fail("collect_episodes and collect_steps must be at least 1");
        }
        if self.eval_tracks == 0 {
            return fail("eval_tracks must be at least 1");
        }
        if self.vae_batch == 0 || self.mdrnn_batch == 0 || self.bptt_len == 0 {
            return fail("batch sizes and bptt_len must be at least 1");
        }
        if !(self.vae_lr > 0.0) || !(self.mdrnn_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        Ok(())
    }

    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec {
            track: TrackConfig {
                tiles: self.tiles,
                tile_length: self.tile_length,
                max_curvature: self.max_curvature,
                curvature_step: self.curvature_step,
                smoothing: self.smoothing,
                turn_bias: self.turn_bias,
                straight_start: self.straight_start,
            },
            car: EnvConfig {
                dt: self.dt,
                v_max: self.v_max,
                accel_max: self.accel_max,
                brake_max: self.brake_max,
                drag: self.drag,
                turn_rate_max: self.turn_rate_max,
                half_width: self.half_width,
                max_steps: self.max_steps,
            },
        }
    }

    pub fn vae_config(&self) -> VaeConfig {
        VaeConfig {
            obs_dim: epls_core::env::OBS_DIM,
            latent_dim: self.latent_dim,
            hidden: [self.vae_hidden1, self.vae_hidden2],
            kl_weight: self.kl_weight,
        }
    }

    pub fn mdrnn_config(&self) -> MdrnnConfig {
        MdrnnConfig {
            latent_dim: self.latent_dim,
            action_dim: epls_core::env::Action::DIM,
            hidden_dim: self.rnn_hidden,
            mixtures: self.mixtures,
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            horizon: self.horizon,
            generations: self.generations,
            mutation_prob: self.mutation_prob,
            mutation_scale: self.mutation_scale,
            terminal_threshold: self.terminal_threshold,
            propagation: self.propagation,
        }
    }

    pub fn vae_train_config(&self, seed: u64) -> VaeTrainConfig {
        VaeTrainConfig {
            epochs: self.vae_epochs,
            lr: self.vae_lr,
            batch_size: self.vae_batch,
            seed,
        }
    }

    pub fn mdrnn_train_config(&self, seed: u64) -> MdrnnTrainConfig {
        MdrnnTrainConfig {
            epochs: self.mdrnn_epochs,
            lr: self.mdrnn_lr,
            batch_size: self.mdrnn_batch,
            bptt_len: self.bptt_len,
            seed,
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
