use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rollout::{PolicyTag, Rollout};
use super::seeds::{derive_seed, Stream};
use crate::env::{Action, CarState, Env, EnvSpec, Observation, OBS_DIM};
use crate::planner::{random_action, LatentPlanningAgent, OraclePlanningAgent, PlannerError};

/// Anything that can drive the car for an episode.
pub trait Policy {
    fn tag(&self) -> PolicyTag;

    /// Called before the first step of every episode with that episode's seed.
    fn begin_episode(&mut self, seed: u64);

    fn act(
        &mut self,
        env: &Env,
        state: &CarState,
        obs: &Observation,
    ) -> Result<Action, PlannerError>;
}

/// Independent uniform actions every step.
#[derive(Clone, Debug)]
pub struct UniformPolicy {
    rng: ChaCha8Rng,
}

impl UniformPolicy {
    pub fn new() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Default for UniformPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for UniformPolicy {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Random
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, _: &Env, _: &CarState, _: &Observation) -> Result<Action, PlannerError> {
        Ok(random_action(&mut self.rng))
    }
}

/// Random walk in action space: a uniform first action, then clipped
/// Gaussian increments of `sigma` per component each step.
#[derive(Clone, Debug)]
pub struct BrownianPolicy {
    sigma: f32,
    rng: ChaCha8Rng,
    current: Option<[f32; 3]>,
}

impl BrownianPolicy {
    pub const DEFAULT_SIGMA: f32 = 0.14;

    pub fn new(sigma: f32) -> Self {
        Self {
            sigma,
            rng: ChaCha8Rng::seed_from_u64(0),
            current: None,
        }
    }
}

impl Default for BrownianPolicy {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SIGMA)
    }
}

impl Policy for BrownianPolicy {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Random
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.current = None;
    }

    fn act(&mut self, _: &Env, _: &CarState, _: &Observation) -> Result<Action, PlannerError> {
        let next = match self.current {
            None => random_action(&mut self.rng).to_array(),
            Some(mut a) => {
                for (i, v) in a.iter_mut().enumerate() {
                    let n: f32 = StandardNormal.sample(&mut self.rng);
                    *v = (*v + self.sigma * n).clamp(Action::LOWER[i], Action::UPPER[i]);
                }
                a
            }
        };
        self.current = Some(next);
        Ok(Action::from_array(next))
    }
}

impl Policy for LatentPlanningAgent<'_> {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Plan
    }

    fn begin_episode(&mut self, seed: u64) {
        self.planner_mut().reseed(seed);
        LatentPlanningAgent::begin_episode(self);
    }

    fn act(&mut self, _: &Env, _: &CarState, obs: &Observation) -> Result<Action, PlannerError> {
        LatentPlanningAgent::act(self, obs.as_slice())
    }
}

impl Policy for OraclePlanningAgent {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Oracle
    }

    fn begin_episode(&mut self, seed: u64) {
        self.planner_mut().reseed(seed);
        OraclePlanningAgent::begin_episode(self);
    }

    fn act(
        &mut self,
        env: &Env,
        state: &CarState,
        _: &Observation,
    ) -> Result<Action, PlannerError> {
        Ok(OraclePlanningAgent::act(self, env, state))
    }
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn tag(&self) -> PolicyTag {
        (**self).tag()
    }

    fn begin_episode(&mut self, seed: u64) {
        (**self).begin_episode(seed)
    }

    fn act(
        &mut self,
        env: &Env,
        state: &CarState,
        obs: &Observation,
    ) -> Result<Action, PlannerError> {
        (**self).act(env, state, obs)
    }
}

/// Summary of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    /// Sum of rewards, accumulated in `f64`.
    pub total_reward: f64,
    pub steps: usize,
    pub tiles: usize,
    pub final_state: CarState,
    pub rollout: Option<Rollout>,
}

/// Runs `policy` on `env` until a terminal step or `max_steps`, optionally
/// recording every transition.
pub fn run_episode<P: Policy + ?Sized>(
    env: &Env,
    policy: &mut P,
    seed: u64,
    max_steps: usize,
    record: bool,
) -> Result<EpisodeOutcome, PlannerError> {
    policy.begin_episode(seed);
    let (mut state, mut obs) = env.reset();
    let mut rollout = record.then(|| Rollout::new(OBS_DIM, policy.tag()));
    let mut total = 0.0f64;
    let mut steps = 0;
    while steps < max_steps {
        let action = policy.act(env, &state, &obs)?;
        let step = env
            .step(&state, action)
            .expect("the loop stops at the first terminal step");
        if let Some(r) = rollout.as_mut() {
            r.push(obs.as_slice(), action, step.reward, step.terminal);
        }
        total += step.reward as f64;
        steps += 1;
        state = step.state;
        obs = step.observation;
        if step.terminal {
            break;
        }
    }
    Ok(EpisodeOutcome {
        total_reward: total,
        steps,
        tiles: state.visited_count,
        final_state: state,
        rollout,
    })
}

/// Records `episodes` rollouts of at most `steps` steps. Episode `i` runs on
/// the track seeded `seed + i`; policy randomness comes from a separate
/// derived stream, so different policies collected with the same seed see
/// the same tracks.
pub fn collect_rollouts<P: Policy + ?Sized>(
    spec: &EnvSpec,
    policy: &mut P,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Result<alloc::vec::Vec<Rollout>, PlannerError> {
    (0..episodes as u64)
        .map(|i| {
            let env = spec.build(seed.wrapping_add(i));
            let out = run_episode(
                &env,
                policy,
                derive_seed(seed, Stream::CollectPolicy, i),
                steps,
                true,
            )?;
            Ok(out.rollout.expect("recording was requested"))
        })
        .collect()
}

/// Total reward of `policy` on each track seed. The same track seeds and
/// episode seeds give paired scores across policies.
pub fn evaluate_policy<P: Policy + ?Sized>(
    spec: &EnvSpec,
    policy: &mut P,
    track_seeds: &[u64],
    episode_seed: u64,
    max_steps: usize,
) -> Result<alloc::vec::Vec<f64>, PlannerError> {
    track_seeds
        .iter()
        .enumerate()
        .map(|(i, &ts)| {
            let env = spec.build(ts);
            let seed = derive_seed(episode_seed, Stream::EvalPolicy, i as u64);
            Ok(run_episode(&env, policy, seed, max_steps, false)?.total_reward)
        })
        .collect()
}

/// Track seeds for evaluation under `master`.
pub fn eval_track_seeds(master: u64, count: usize) -> alloc::vec::Vec<u64> {
    (0..count as u64)
        .map(|i| derive_seed(master, Stream::EvalTrack, i))
        .collect()
}
