//! Desk-scale track-following environment.
//!
//! A car drives along a procedurally generated open track split into `N`
//! equal-length tiles. Each step costs `0.1` and each newly visited tile pays
//! `1000 / N`; the start tile's share is paid when the last tile is reached.
//! Leaving the track, visiting every tile or running out of time ends the
//! episode.
//!
//! [`Env`] is immutable once built; episode state lives in [`CarState`] and
//! is passed by value, so the same `Env` can serve both the real episode and
//! any number of simulated look-aheads.

mod render;
mod track;

use alloc::vec;
use alloc::vec::Vec;

pub use render::{Observation, CENTER_PIXEL, OBS_DIM, OBS_SIDE, SPEED_ROW};
pub use track::{Track, TrackConfig};

/// Steering, throttle and brake. Components are clamped to their bounds on
/// construction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    /// Positive values turn counter-clockwise.
    pub steer: f32,
    pub accel: f32,
    pub brake: f32,
}

impl Action {
    pub const DIM: usize = 3;
    pub const LOWER: [f32; 3] = [-1.0, 0.0, 0.0];
    pub const UPPER: [f32; 3] = [1.0, 1.0, 1.0];

    pub fn new(steer: f32, accel: f32, brake: f32) -> Self {
        Self::from_array([steer, accel, brake])
    }

    pub fn from_array(values: [f32; 3]) -> Self {
        let c = |i: usize| {
            let v = values[i];
            if v.is_nan() {
                Self::LOWER[i].max(0.0)
            } else {
                v.clamp(Self::LOWER[i], Self::UPPER[i])
            }
        };
        Self {
            steer: c(0),
            accel: c(1),
            brake: c(2),
        }
    }

    pub fn to_array(self) -> [f32; 3] {
        [self.steer, self.accel, self.brake]
    }

    pub fn in_bounds(&self) -> bool {
        self.to_array()
            .iter()
            .enumerate()
            .all(|(i, v)| *v >= Self::LOWER[i] && *v <= Self::UPPER[i])
    }
}

/// Physical constants of the car and episode limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub dt: f32,
    pub v_max: f32,
    pub accel_max: f32,
    pub brake_max: f32,
    pub drag: f32,
    pub turn_rate_max: f32,
    pub half_width: f32,
    pub max_steps: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 2.0,
            accel_max: 1.0,
            brake_max: 2.0,
            drag: 0.05,
            turn_rate_max: 1.0,
            half_width: 0.5,
            max_steps: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CarState {
    pub x: f32,
    pub y: f32,
    pub heading: f32,
    pub speed: f32,
    pub visited: Vec<bool>,
    pub visited_count: usize,
    pub step: u32,
    /// Tile closest to the car after the last update.
    pub tile: usize,
    /// Distance from the centerline after the last update.
    pub lateral: f32,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: CarState,
    pub reward: f32,
    pub terminal: bool,
    pub new_tiles: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: CarState,
    pub observation: Observation,
    pub reward: f32,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("step called after the episode terminated")]
    EpisodeFinished,
}

/// Everything needed to build an environment from a track seed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnvSpec {
    pub track: TrackConfig,
    pub car: EnvConfig,
}

impl EnvSpec {
    pub fn build(&self, track_seed: u64) -> Env {
        Env::new(Track::generate(track_seed, &self.track), self.car)
    }
}

/// A track together with the car constants: the ground-truth simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Env {
    track: Track,
    config: EnvConfig,
}

impl Env {
    pub fn new(track: Track, config: EnvConfig) -> Self {
        Self { track, config }
    }

    /// Generates the track for `seed` with default constants.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(
            Track::generate(seed, &TrackConfig::default()),
            EnvConfig::default(),
        )
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn tile_reward(&self) -> f32 {
        1000.0 / self.track.tiles() as f32
    }

    /// Car at the start of tile 0, aligned with the track, at rest.
    pub fn initial_state(&self) -> CarState {
        let start = self.track.point(0);
        let mut visited = vec![false; self.track.tiles()];
        visited[0] = true;
        CarState {
            x: start[0],
            y: start[1],
            heading: self.track.tile_heading(0),
            speed: 0.0,
            visited,
            visited_count: 1,
            step: 0,
            tile: 0,
            lateral: 0.0,
            done: false,
        }
    }

    pub fn reset(&self) -> (CarState, Observation) {
        let state = self.initial_state();
        let obs = self.render(&state);
        (state, obs)
    }

    /// Ground-truth dynamics, reward and termination without rendering.
    pub fn transition(&self, state: &CarState, action: Action) -> Result<Transition, EnvError> {
        if state.done {
            return Err(EnvError::EpisodeFinished);
        }
        let a = Action::from_array(action.to_array());
        let c = &self.config;
        let mut next = state.clone();

        let v = state.speed + a.accel * c.accel_max * c.dt
            - a.brake * c.brake_max * c.dt
            - c.drag * state.speed * c.dt;
        next.speed = v.clamp(0.0, c.v_max);
        next.heading = state.heading + a.steer * c.turn_rate_max * c.dt * (next.speed / c.v_max);
        next.x = state.x + next.speed * c.dt * libm::cosf(next.heading);
        next.y = state.y + next.speed * c.dt * libm::sinf(next.heading);
        next.step = state.step + 1;

        let (tile, lateral) = self.track.nearest(next.x, next.y);
        next.tile = tile;
        next.lateral = lateral;
        let on_track = lateral <= c.half_width;
        let mut new_tiles = 0;
        if on_track {
            // tiles passed over in one step count as visited; the jump bound
            // keeps a nearest-tile switch across a self-approaching track out
            let reach = libm::ceilf(c.v_max * c.dt / self.track.tile_length()) as usize + 1;
            let (lo, hi) = if tile.abs_diff(state.tile) <= reach {
                (tile.min(state.tile), tile.max(state.tile))
            } else {
                (tile, tile)
            };
            for seen in &mut next.visited[lo..=hi] {
                if !*seen {
                    *seen = true;
                    new_tiles += 1;
                }
            }
            next.visited_count += new_tiles;
        }
        let complete = next.visited_count == self.track.tiles();
        // the start tile is marked at reset and paid out when the last tile
        // is reached, so a full traversal earns the whole 1000
        let paid = new_tiles + usize::from(complete && new_tiles > 0);
        let reward = -0.1 + self.tile_reward() * paid as f32;
        let terminal = !on_track || complete || next.step >= c.max_steps;
        next.done = terminal;
        Ok(Transition {
            state: next,
            reward,
            terminal,
            new_tiles,
        })
    }

    /// Next state under the ground-truth dynamics.
    pub fn oracle_dynamics(&self, state: &CarState, action: Action) -> Result<CarState, EnvError> {
        self.transition(state, action).map(|t| t.state)
    }

    pub fn step(&self, state: &CarState, action: Action) -> Result<StepResult, EnvError> {
        let t = self.transition(state, action)?;
        let observation = self.render(&t.state);
        Ok(StepResult {
            state: t.state,
            observation,
            reward: t.reward,
            terminal: t.terminal,
        })
    }

    pub fn render(&self, state: &CarState) -> Observation {
        render::render(&self.track, &self.config, state)
    }
}
