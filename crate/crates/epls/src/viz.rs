//! SVG plots of one planning episode.

use std::fmt::Write as _;

use anyhow::Result;
use epls_core::env::{Action, CarState, Env, Track};
use epls_core::planner::{
    evaluate_plan, LatentPlanningAgent, LatentSimulator, LatentState, Plan, SimStep, Simulator,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::model::WorldModel;

/// A plan the agent held at some step, as seen in imagination and on the
/// ground.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPath {
    pub step: usize,
    /// Car positions reached by replaying the plan through the true dynamics
    /// from the state the plan was made in, up to the first terminal step.
    pub positions: Vec<[f32; 2]>,
    /// Decoder output for every imagined latent along the plan.
    pub decoded: Vec<Vec<f32>>,
}

/// Everything that happened in one planning episode.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    /// Car position before the first step and after every step.
    pub positions: Vec<[f32; 2]>,
    pub headings: Vec<f32>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f32>,
    pub plans: Vec<PlannedPath>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().map(|&r| r as f64).sum()
    }
}

/// Steps between recorded plans.
pub const PLAN_EVERY: usize = 5;

fn project(env: &Env, start: &CarState, plan: &Plan) -> Vec<[f32; 2]> {
    let mut state = start.clone();
    let mut out = vec![[state.x, state.y]];
    for a in plan.actions() {
        match env.transition(&state, *a) {
            Ok(t) => {
                state = t.state;
                out.push([state.x, state.y]);
                if t.terminal {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    out
}

/// Decodes the latent rollout of `plan` from `start`.
fn imagine(
    model: &WorldModel,
    start: &LatentState,
    plan: &Plan,
    config: &Config,
) -> Result<Vec<Vec<f32>>> {
    let sim = LatentSimulator {
        model: &model.mdrnn,
        propagation: config.propagation,
    };
    // only the most-likely propagation is exactly reproducible; a fixed
    // stream keeps sampled imaginations deterministic too
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eval = evaluate_plan(&sim, start, plan, config.terminal_threshold, &mut rng);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = start.clone();
    let mut out = Vec::with_capacity(eval.cutoff);
    for a in &plan.actions()[..eval.cutoff] {
        let SimStep { state: next, .. } = sim.step(&state, a, &mut rng);
        out.push(model.vae.decode(next.z())?);
        state = next;
    }
    Ok(out)
}

/// Runs one planning episode on `track_seed`, recording every
/// [`PLAN_EVERY`]-th plan when `record_plans` is set.
pub fn record_episode(
    config: &Config,
    model: &WorldModel,
    track_seed: u64,
    record_plans: bool,
) -> Result<(Env, TrajectoryRecord)> {
    let env = config.env_spec().build(track_seed);
    let mut agent = LatentPlanningAgent::new(
        &model.vae,
        &model.mdrnn,
        config.planner_config(),
        config.seed,
    );
    agent.begin_episode();
    let (mut state, mut obs) = env.reset();
    let mut rec = TrajectoryRecord {
        positions: vec![[state.x, state.y]],
        headings: vec![state.heading],
        actions: Vec::new(),
        rewards: Vec::new(),
        plans: Vec::new(),
    };
    for step in 0..config.max_steps as usize {
        let before = agent.recurrent_state().cloned();
        let action = agent.act(obs.as_slice())?;
        if record_plans && step % PLAN_EVERY == 0 {
            if let (Some(rnn), Some((plan, _))) = (before, agent.planner().last_search()) {
                let z = model.vae.encode(obs.as_slice())?.mu;
                let start = LatentState::new(&model.mdrnn, z, rnn)?;
                rec.plans.push(PlannedPath {
                    step,
                    positions: project(&env, &state, plan),
                    decoded: imagine(model, &start, plan, config)?,
                });
            }
        }
        let out = env.step(&state, action)?;
        rec.actions.push(action);
        rec.rewards.push(out.reward);
        state = out.state;
        obs = out.observation;
        rec.positions.push([state.x, state.y]);
        rec.headings.push(state.heading);
        if out.terminal {
            break;
        }
    }
    Ok((env, rec))
}

fn path_data(points: &[[f32; 2]]) -> String {
    let mut d = String::new();
    for (i, p) in points.iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        // y is flipped so the plot matches the usual x-right, y-up convention
        write!(d, "{cmd}{:.3},{:.3} ", p[0], -p[1]).unwrap();
    }
    d.pop();
    d
}

/// SVG 1.1 with a `track` layer, an `executed` layer and, if any plans were
/// recorded, a fainter `plans` layer. Each layer is one `<g>`.
pub fn render_svg(track: &Track, half_width: f32, record: &TrajectoryRecord) -> String {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let all = track
        .points()
        .iter()
        .chain(&record.positions)
        .chain(record.plans.iter().flat_map(|p| &p.positions));
    for p in all {
        xs.push(p[0]);
        ys.push(-p[1]);
    }
    let fold = |v: &[f32], f: fn(f32, f32) -> f32, init: f32| v.iter().copied().fold(init, f);
    let margin = half_width + 0.5;
    let (x0, x1) = (
        fold(&xs, f32::min, f32::INFINITY) - margin,
        fold(&xs, f32::max, f32::NEG_INFINITY) + margin,
    );
    let (y0, y1) = (
        fold(&ys, f32::min, f32::INFINITY) - margin,
        fold(&ys, f32::max, f32::NEG_INFINITY) + margin,
    );
    let (w, h) = (x1 - x0, y1 - y0);
    let scale = 600.0 / w.max(h);

    let mut svg = String::new();
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}" viewBox="{x0:.3} {y0:.3} {w:.3} {h:.3}">"#,
        w * scale,
        h * scale
    )
    .unwrap();
    writeln!(
        svg,
        r##"<g id="track"><path d="{}" fill="none" stroke="#c8c8c8" stroke-width="{:.3}" stroke-linejoin="round" stroke-linecap="butt"/></g>"##,
        path_data(track.points()),
        2.0 * half_width
    )
    .unwrap();
    writeln!(
        svg,
        r##"<g id="executed"><path d="{}" fill="none" stroke="#c0392b" stroke-width="0.06" stroke-linejoin="round"/></g>"##,
        path_data(&record.positions)
    )
    .unwrap();
    if !record.plans.is_empty() {
        svg.push_str(
            r##"<g id="plans" opacity="0.35" fill="none" stroke="#2471a3" stroke-width="0.04">"##,
        );
        svg.push('\n');
        for p in &record.plans {
            writeln!(
                svg,
                r#"<path data-step="{}" d="{}"/>"#,
                p.step,
                path_data(&p.positions)
            )
            .unwrap();
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}
