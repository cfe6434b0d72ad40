use alloc::vec::Vec;

use rand::Rng;

use crate::env::{Action, CarState, Env};
use crate::worldmodel::{
    expected_next_latent, sample_next_latent, Mdrnn, WorldModelError, WorldModelState,
};

/// One simulated step.
#[derive(Clone, Debug, PartialEq)]
pub struct SimStep<S> {
    pub state: S,
    pub reward: f32,
    pub terminal_p: f32,
}

/// Dynamics a plan can be rolled out in.
pub trait Simulator {
    type State: Clone;

    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &Action,
        rng: &mut R,
    ) -> SimStep<Self::State>;
}

/// How the next latent is chosen from the predicted mixture.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LatentPropagation {
    /// Mean of the most likely component. Deterministic.
    #[default]
    MostLikely,
    /// A draw from the full mixture.
    Sampled,
}

/// Latent vector plus recurrent state, with dimensions checked against the
/// model they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    z: Vec<f32>,
    rnn: WorldModelState,
}

impl LatentState {
    pub fn new(model: &Mdrnn, z: Vec<f32>, rnn: WorldModelState) -> Result<Self, WorldModelError> {
        let c = model.config();
        let checks = [
            ("latent", c.latent_dim, z.len()),
            ("hidden state", c.hidden_dim, rnn.h.len()),
            ("cell state", c.hidden_dim, rnn.c.len()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(WorldModelError::Length {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(Self { z, rnn })
    }

    pub fn z(&self) -> &[f32] {
        &self.z
    }

    pub fn rnn(&self) -> &WorldModelState {
        &self.rnn
    }
}

/// Rolls plans out inside the learned model.
#[derive(Clone, Copy, Debug)]
pub struct LatentSimulator<'m> {
    pub model: &'m Mdrnn,
    pub propagation: LatentPropagation,
}

impl Simulator for LatentSimulator<'_> {
    type State = LatentState;

    fn step<R: Rng + ?Sized>(
        &self,
        state: &LatentState,
        action: &Action,
        rng: &mut R,
    ) -> SimStep<LatentState> {
        let (pred, rnn) = self
            .model
            .step(&state.z, &action.to_array(), &state.rnn)
            .expect("latent state dimensions are checked on construction");
        let z = match self.propagation {
            LatentPropagation::MostLikely => expected_next_latent(&pred.gmm),
            LatentPropagation::Sampled => sample_next_latent(&pred.gmm, rng),
        };
        SimStep {
            state: LatentState { z, rnn },
            reward: pred.reward_mean,
            terminal_p: pred.terminal_p,
        }
    }
}

/// Rolls plans out in the true environment.
#[derive(Clone, Copy, Debug)]
pub struct OracleSimulator<'e> {
    pub env: &'e Env,
}

impl Simulator for OracleSimulator<'_> {
    type State = CarState;

    fn step<R: Rng + ?Sized>(
        &self,
        state: &CarState,
        action: &Action,
        _rng: &mut R,
    ) -> SimStep<CarState> {
        match self.env.transition(state, *action) {
            Ok(t) => SimStep {
                state: t.state,
                reward: t.reward,
                terminal_p: if t.terminal { 1.0 } else { 0.0 },
            },
            Err(_) => SimStep {
                state: state.clone(),
                reward: 0.0,
                terminal_p: 1.0,
            },
        }
    }
}
