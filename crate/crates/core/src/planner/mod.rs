//! Random Mutation Hill Climbing over fixed-horizon action sequences.
//!
//! Plans are scored by rolling them out in a [`Simulator`]: the learned
//! latent model for the agent proper, or the ground-truth environment for the
//! oracle baseline. Between real steps the incumbent plan is shift-buffered
//! so search resumes from the previous solution.

mod agent;
mod simulator;

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::Action;

pub use agent::{LatentPlanningAgent, OraclePlanningAgent, PlannerError, RollingPlanner};
pub use simulator::{
    LatentPropagation, LatentSimulator, LatentState, OracleSimulator, SimStep, Simulator,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub generations: usize,
    /// Per-component mutation probability.
    pub mutation_prob: f32,
    /// Mutation noise as a fraction of each component's range.
    pub mutation_scale: f32,
    /// A simulated step with terminal probability above this ends the rollout.
    pub terminal_threshold: f32,
    pub propagation: LatentPropagation,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            generations: 10,
            mutation_prob: 0.3,
            mutation_scale: 0.3,
            terminal_threshold: 0.5,
            propagation: LatentPropagation::MostLikely,
        }
    }
}

/// Horizon-length action sequence; never empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    actions: Vec<Action>,
}

impl Plan {
    /// `None` for an empty sequence. Actions are clamped to bounds.
    pub fn new(actions: Vec<Action>) -> Option<Self> {
        if actions.is_empty() {
            return None;
        }
        let actions = actions
            .into_iter()
            .map(|a| Action::from_array(a.to_array()))
            .collect();
        Some(Self { actions })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn first(&self) -> Action {
        self.actions[0]
    }
}

/// Outcome of rolling a plan out in a simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEvaluation {
    /// Undiscounted sum of `rewards`.
    pub fitness: f32,
    /// Predicted reward of each simulated step up to and including the
    /// cutoff step.
    pub rewards: Vec<f32>,
    /// Number of simulated steps that count: the index of the first step whose
    /// terminal probability exceeds the threshold, plus one, or the horizon.
    pub cutoff: usize,
}

/// Anything hill climbing can rank.
pub trait Scored {
    fn score(&self) -> f32;
}

impl Scored for f32 {
    fn score(&self) -> f32 {
        *self
    }
}

impl Scored for PlanEvaluation {
    fn score(&self) -> f32 {
        self.fitness
    }
}

pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    let mut v = [0.0f32; 3];
    for (i, slot) in v.iter_mut().enumerate() {
        *slot = rng.random_range(Action::LOWER[i]..=Action::UPPER[i]);
    }
    Action::from_array(v)
}

/// Uniform random plan. Panics if `horizon` is zero.
pub fn random_plan<R: Rng + ?Sized>(horizon: usize, rng: &mut R) -> Plan {
    assert!(horizon >= 1, "plan horizon must be at least 1");
    Plan {
        actions: (0..horizon).map(|_| random_action(rng)).collect(),
    }
}

/// Gaussian perturbation of each component with probability `prob`, scaled
/// by `scale` times the component's range and clamped. At least one
/// component always changes position in the draw: if no coin fires, one
/// component is chosen uniformly and perturbed.
pub fn mutate<R: Rng + ?Sized>(plan: &Plan, rng: &mut R, prob: f32, scale: f32) -> Plan {
    let mut actions = plan.actions.clone();
    let mut fired = false;
    for a in actions.iter_mut() {
        let mut v = a.to_array();
        for (i, slot) in v.iter_mut().enumerate() {
            if rng.random::<f32>() < prob {
                *slot = perturb(*slot, i, scale, rng);
                fired = true;
            }
        }
        *a = Action::from_array(v);
    }
    if !fired {
        let idx = rng.random_range(0..actions.len() * Action::DIM);
        let (t, i) = (idx / Action::DIM, idx % Action::DIM);
        let mut v = actions[t].to_array();
        v[i] = perturb(v[i], i, scale, rng);
        actions[t] = Action::from_array(v);
    }
    Plan { actions }
}

fn perturb<R: Rng + ?Sized>(value: f32, component: usize, scale: f32, rng: &mut R) -> f32 {
    let range = Action::UPPER[component] - Action::LOWER[component];
    let n: f32 = StandardNormal.sample(rng);
    (value + n * scale * range).clamp(Action::LOWER[component], Action::UPPER[component])
}

/// Drops the first action and appends a fresh uniform one.
pub fn shift_buffer<R: Rng + ?Sized>(plan: &Plan, rng: &mut R) -> Plan {
    let mut actions = Vec::with_capacity(plan.horizon());
    actions.extend_from_slice(&plan.actions[1..]);
    actions.push(random_action(rng));
    Plan { actions }
}

/// Rolls `plan` out from a copy of `start`.
pub fn evaluate_plan<S: Simulator, R: Rng + ?Sized>(
    sim: &S,
    start: &S::State,
    plan: &Plan,
    terminal_threshold: f32,
    rng: &mut R,
) -> PlanEvaluation {
    let mut state = start.clone();
    let mut rewards = Vec::with_capacity(plan.horizon());
    let mut fitness = 0.0f32;
    for action in &plan.actions {
        let step = sim.step(&state, action, rng);
        rewards.push(step.reward);
        fitness += step.reward;
        if step.terminal_p > terminal_threshold {
            break;
        }
        state = step.state;
    }
    PlanEvaluation {
        fitness,
        cutoff: rewards.len(),
        rewards,
    }
}

/// Result of a hill-climbing run.
#[derive(Clone, Debug, PartialEq)]
pub struct Climb<P, E> {
    pub best: P,
    pub evaluation: E,
    /// Incumbent score after the initial evaluation and after every
    /// generation (`generations + 1` entries).
    pub trace: Vec<f32>,
}

/// (1+1) hill climbing: each generation mutates the incumbent and keeps the
/// challenger when it scores at least as well.
pub fn hill_climb<P, E, R, M, F>(
    initial: P,
    generations: usize,
    rng: &mut R,
    mut mutate: M,
    mut evaluate: F,
) -> Climb<P, E>
where
    E: Scored,
    R: Rng + ?Sized,
    M: FnMut(&P, &mut R) -> P,
    F: FnMut(&P, &mut R) -> E,
{
    let mut evaluation = evaluate(&initial, rng);
    let mut best = initial;
    let mut trace = Vec::with_capacity(generations + 1);
    trace.push(evaluation.score());
    for _ in 0..generations {
        let challenger = mutate(&best, rng);
        let score = evaluate(&challenger, rng);
        if score.score() >= evaluation.score() {
            best = challenger;
            evaluation = score;
        }
        trace.push(evaluation.score());
    }
    Climb {
        best,
        evaluation,
        trace,
    }
}

/// RMHC over plans evaluated in `sim` from `start`.
pub fn rmhc<S: Simulator, R: Rng + ?Sized>(
    sim: &S,
    start: &S::State,
    config: &PlannerConfig,
    rng: &mut R,
    initial: Plan,
) -> Climb<Plan, PlanEvaluation> {
    let (prob, scale, threshold) = (
        config.mutation_prob,
        config.mutation_scale,
        config.terminal_threshold,
    );
    hill_climb(
        initial,
        config.generations,
        rng,
        |p, r| mutate(p, r, prob, scale),
        |p, r| evaluate_plan(sim, start, p, threshold, r),
    )
}
