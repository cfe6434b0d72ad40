use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::env::Action;

/// Which policy produced a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyTag {
    Random,
    Plan,
    Oracle,
}

impl PolicyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyTag::Random => "random",
            PolicyTag::Plan => "plan",
            PolicyTag::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(PolicyTag::Random),
            "plan" => Some(PolicyTag::Plan),
            "oracle" => Some(PolicyTag::Oracle),
            _ => None,
        }
    }
}

/// One recorded episode. Record `t` holds the observation seen before acting,
/// the action taken, and the reward and terminal flag that action produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub obs_dim: usize,
    /// `len() x obs_dim`, row-major.
    pub observations: Vec<f32>,
    pub actions: Vec<[f32; 3]>,
    pub rewards: Vec<f32>,
    pub terminals: Vec<bool>,
    pub tag: PolicyTag,
}

impl Rollout {
    pub fn new(obs_dim: usize, tag: PolicyTag) -> Self {
        Self {
            obs_dim,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            tag,
        }
    }

    pub fn push(&mut self, obs: &[f32], action: Action, reward: f32, terminal: bool) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        self.observations.extend_from_slice(obs);
        self.actions.push(action.to_array());
        self.rewards.push(reward);
        self.terminals.push(terminal);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn observation(&self, t: usize) -> &[f32] {
        &self.observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().map(|&r| r as f64).sum()
    }
}

/// Fixed-capacity rollout store; the oldest rollout is evicted first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    rollouts: VecDeque<Rollout>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            rollouts: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, rollout: Rollout) {
        if self.capacity == 0 {
            return;
        }
        if self.rollouts.len() == self.capacity {
            self.rollouts.pop_front();
        }
        self.rollouts.push_back(rollout);
    }

    pub fn extend(&mut self, rollouts: impl IntoIterator<Item = Rollout>) {
        for r in rollouts {
            self.push(r);
        }
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rollout> {
        self.rollouts.iter()
    }
}
