use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    random_plan, rmhc, shift_buffer, LatentSimulator, LatentState, OracleSimulator, Plan,
    PlanEvaluation, PlannerConfig, Simulator,
};
use crate::env::{Action, CarState, Env};
use crate::worldmodel::{Mdrnn, Vae, WorldModelError, WorldModelState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("act called before begin_episode")]
    NotStarted,
    #[error(transparent)]
    Model(#[from] WorldModelError),
}

/// RMHC with a shift-buffered incumbent carried across real steps.
#[derive(Clone, Debug)]
pub struct RollingPlanner {
    config: PlannerConfig,
    rng: ChaCha8Rng,
    buffer: Option<Plan>,
    last: Option<(Plan, PlanEvaluation)>,
}

impl RollingPlanner {
    pub fn new(config: PlannerConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer: None,
            last: None,
        }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    /// Restarts the random stream used for initial plans and mutations.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Forgets the buffered plan; the next search starts from a random one.
    pub fn reset(&mut self) {
        self.buffer = None;
        self.last = None;
    }

    /// Buffered plan the next search will start from.
    pub fn buffered(&self) -> Option<&Plan> {
        self.buffer.as_ref()
    }

    /// Best plan and its evaluation from the most recent search.
    pub fn last_search(&self) -> Option<&(Plan, PlanEvaluation)> {
        self.last.as_ref()
    }

    /// Searches from `start` and returns the first action of the best plan.
    pub fn act<S: Simulator>(&mut self, sim: &S, start: &S::State) -> Action {
        let horizon = self.config.horizon.max(1);
        let initial = match self.buffer.take() {
            Some(p) if p.horizon() == horizon => p,
            _ => random_plan(horizon, &mut self.rng),
        };
        let climb = rmhc(sim, start, &self.config, &mut self.rng, initial);
        let action = climb.best.first();
        self.buffer = Some(shift_buffer(&climb.best, &mut self.rng));
        self.last = Some((climb.best, climb.evaluation));
        action
    }
}

/// Plans in the learned latent space from encoded observations.
#[derive(Clone, Debug)]
pub struct LatentPlanningAgent<'m> {
    vae: &'m Vae,
    mdrnn: &'m Mdrnn,
    planner: RollingPlanner,
    state: Option<WorldModelState>,
}

impl<'m> LatentPlanningAgent<'m> {
    pub fn new(vae: &'m Vae, mdrnn: &'m Mdrnn, config: PlannerConfig, seed: u64) -> Self {
        Self {
            vae,
            mdrnn,
            planner: RollingPlanner::new(config, seed),
            state: None,
        }
    }

    /// Zeroes the recurrent state and clears the plan buffer.
    pub fn begin_episode(&mut self) {
        self.state = Some(self.mdrnn.initial_state());
        self.planner.reset();
    }

    pub fn planner(&self) -> &RollingPlanner {
        &self.planner
    }

    pub fn planner_mut(&mut self) -> &mut RollingPlanner {
        &mut self.planner
    }

    /// Recurrent state of the real trajectory; `None` before the episode.
    pub fn recurrent_state(&self) -> Option<&WorldModelState> {
        self.state.as_ref()
    }

    /// Encodes `obs` to its posterior mean, plans from the current recurrent
    /// state, then advances that state with the chosen action.
    pub fn act(&mut self, obs: &[f32]) -> Result<Action, PlannerError> {
        let rnn = self.state.as_ref().ok_or(PlannerError::NotStarted)?;
        let z = self.vae.encode(obs)?.mu;
        let start = LatentState::new(self.mdrnn, z, rnn.clone())?;
        let sim = LatentSimulator {
            model: self.mdrnn,
            propagation: self.planner.config.propagation,
        };
        let action = self.planner.act(&sim, &start);
        let (_, next) = self
            .mdrnn
            .step(start.z(), &action.to_array(), start.rnn())?;
        self.state = Some(next);
        Ok(action)
    }
}

/// Plans with the ground-truth dynamics; an upper reference for the learned
/// agent.
#[derive(Clone, Debug)]
pub struct OraclePlanningAgent {
    planner: RollingPlanner,
}

impl OraclePlanningAgent {
    pub fn new(config: PlannerConfig, seed: u64) -> Self {
        Self {
            planner: RollingPlanner::new(config, seed),
        }
    }

    pub fn begin_episode(&mut self) {
        self.planner.reset();
    }

    pub fn planner(&self) -> &RollingPlanner {
        &self.planner
    }

    pub fn planner_mut(&mut self) -> &mut RollingPlanner {
        &mut self.planner
    }

    pub fn act(&mut self, env: &Env, state: &CarState) -> Action {
        self.planner.act(&OracleSimulator { env }, state)
    }
}
