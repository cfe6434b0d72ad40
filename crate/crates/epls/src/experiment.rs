//! Full experiments: collection, training, evaluation and their artifacts.
//!
//! Every function takes an optional output directory. With `None` nothing
//! touches the filesystem, which is how the tests share trained fixtures.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use epls_core::pipeline::{
    collect_rollouts, derive_seed, encode_rollouts, eval_track_seeds, evaluate_policy,
    model_metrics, train_mdrnn, train_vae, BrownianPolicy, ModelMetrics, Policy, PolicyTag,
    ReplayBuffer, Rollout, Stream, UniformPolicy,
};
use epls_core::planner::{LatentPlanningAgent, OraclePlanningAgent};
use epls_core::worldmodel::{Mdrnn, Vae};

use crate::config::{Config, RandomPolicyKind};
use crate::format::save_rollouts;
use crate::model::{init_mdrnn, init_vae, WorldModel};
use crate::report::{loss_csv, summary_csv, EvalReport};

/// The random policy selected by `config`.
pub fn random_policy(config: &Config) -> Box<dyn Policy> {
    match config.random_policy {
        RandomPolicyKind::Brownian => Box::new(BrownianPolicy::new(config.brownian_sigma)),
        RandomPolicyKind::Uniform => Box::new(UniformPolicy::new()),
    }
}

/// Episode count and step limit of one collection run.
#[derive(Clone, Copy, Debug)]
pub struct CollectSpec {
    pub episodes: usize,
    pub steps: usize,
    /// Episode `i` runs on track `seed + i`.
    pub seed: u64,
}

pub fn collect_random(config: &Config, spec: CollectSpec) -> Result<Vec<Rollout>> {
    let mut policy = random_policy(config);
    Ok(collect_rollouts(
        &config.env_spec(),
        policy.as_mut(),
        spec.episodes,
        spec.steps,
        spec.seed,
    )?)
}

pub fn collect_oracle(config: &Config, spec: CollectSpec) -> Result<Vec<Rollout>> {
    let mut policy = OraclePlanningAgent::new(config.planner_config(), 0);
    Ok(collect_rollouts(
        &config.env_spec(),
        &mut policy,
        spec.episodes,
        spec.steps,
        spec.seed,
    )?)
}

pub fn collect_plan(
    config: &Config,
    model: &WorldModel,
    spec: CollectSpec,
) -> Result<Vec<Rollout>> {
    let mut policy = LatentPlanningAgent::new(&model.vae, &model.mdrnn, config.planner_config(), 0);
    Ok(collect_rollouts(
        &config.env_spec(),
        &mut policy,
        spec.episodes,
        spec.steps,
        spec.seed,
    )?)
}

/// Scores `policy` on the config's evaluation tracks.
pub fn evaluate_with<P: Policy + ?Sized>(config: &Config, policy: &mut P) -> Result<EvalReport> {
    let start = Instant::now();
    let tracks = eval_track_seeds(config.seed, config.eval_tracks);
    let scores = evaluate_policy(
        &config.env_spec(),
        policy,
        &tracks,
        config.seed,
        config.max_steps as usize,
    )?;
    Ok(EvalReport::new(
        tracks,
        scores,
        config.clone(),
        start.elapsed(),
    ))
}

/// Planning with the learned model on the config's evaluation tracks.
pub fn evaluate_model(config: &Config, model: &WorldModel) -> Result<EvalReport> {
    let mut agent = LatentPlanningAgent::new(&model.vae, &model.mdrnn, config.planner_config(), 0);
    evaluate_with(config, &mut agent)
}

pub fn evaluate_oracle(config: &Config) -> Result<EvalReport> {
    evaluate_with(
        config,
        &mut OraclePlanningAgent::new(config.planner_config(), 0),
    )
}

pub fn evaluate_random(config: &Config) -> Result<EvalReport> {
    evaluate_with(config, random_policy(config).as_mut())
}

/// Trains a fresh VAE on `rollouts`; returns it with its loss trace.
pub fn fit_vae(config: &Config, rollouts: &[Rollout]) -> Result<(Vae, Vec<f32>)> {
    let mut vae = init_vae(config);
    let losses = train_vae(
        &mut vae,
        rollouts,
        &config.vae_train_config(derive_seed(config.seed, Stream::Training, 0)),
    )?;
    Ok((vae, losses))
}

/// Trains `mdrnn` further on `rollouts` encoded by `vae`. `round` selects
/// the shuffling stream so every iteration draws fresh minibatches.
pub fn fit_mdrnn<'a>(
    config: &Config,
    vae: &Vae,
    mdrnn: &mut Mdrnn,
    rollouts: impl IntoIterator<Item = &'a Rollout>,
    round: u64,
) -> Result<Vec<f32>> {
    let encoded = encode_rollouts(vae, rollouts)?;
    let seed = derive_seed(config.seed, Stream::Training, 1 + round);
    Ok(train_mdrnn(
        mdrnn,
        &encoded,
        &config.mdrnn_train_config(seed),
    )?)
}

/// Output of the non-iterative procedure.
#[derive(Clone, Debug)]
pub struct NonIterativeRun {
    pub model: WorldModel,
    pub report: EvalReport,
    pub rollouts: Vec<Rollout>,
    pub vae_losses: Vec<f32>,
    pub mdrnn_losses: Vec<f32>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn save_model(model: &WorldModel, path: &Path) -> Result<()> {
    model
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

/// Random rollouts, VAE and MDN-RNN training, evaluation.
///
/// With an output directory: `rollouts/`, `model.ckpt`, `report.csv`,
/// `vae_loss.csv` and `mdrnn_loss.csv`.
pub fn run_noniterative(config: &Config, out: Option<&Path>) -> Result<NonIterativeRun> {
    let rollouts = collect_random(
        config,
        CollectSpec {
            episodes: config.collect_episodes,
            steps: config.collect_steps,
            seed: config.seed,
        },
    )?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        save_rollouts(&dir.join("rollouts"), &rollouts)?;
    }
    let (vae, vae_losses) = fit_vae(config, &rollouts)?;
    let mut mdrnn = init_mdrnn(config);
    let mdrnn_losses = fit_mdrnn(config, &vae, &mut mdrnn, &rollouts, 0)?;
    let model = WorldModel { vae, mdrnn };
    let report = evaluate_model(config, &model)?;
    if let Some(dir) = out {
        save_model(&model, &dir.join("model.ckpt"))?;
        write(&dir.join("report.csv"), report.to_csv())?;
        write(&dir.join("vae_loss.csv"), loss_csv(&vae_losses))?;
        write(&dir.join("mdrnn_loss.csv"), loss_csv(&mdrnn_losses))?;
    }
    Ok(NonIterativeRun {
        model,
        report,
        rollouts,
        vae_losses,
        mdrnn_losses,
    })
}

/// Output of the iterative procedure.
#[derive(Clone, Debug)]
pub struct IterativeRun {
    /// Model after the final iteration.
    pub model: WorldModel,
    /// Iteration 0 (the non-iterative baseline) first.
    pub reports: Vec<EvalReport>,
    pub buffer_sizes: Vec<usize>,
}

/// Non-iterative baseline followed by `config.iterations` rounds of
/// planning-policy collection and MDN-RNN retraining on the replay buffer.
pub fn run_iterative(config: &Config, out: Option<&Path>) -> Result<IterativeRun> {
    let base_dir = out.map(|d| d.join("iter_0"));
    let base = run_noniterative(config, base_dir.as_deref())?;
    iterate_from(config, base, out)
}

/// Iterative refinement starting from an existing non-iterative run.
///
/// The VAE stays frozen. Each iteration writes `iter_<i>/model.ckpt`,
/// `iter_<i>/report.csv` and `iter_<i>/rollouts/`, and rewrites
/// `iterations.csv` (`iteration,mean,std`) before the next one starts.
pub fn iterate_from(
    config: &Config,
    base: NonIterativeRun,
    out: Option<&Path>,
) -> Result<IterativeRun> {
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    buffer.extend(base.rollouts);
    let mut model = base.model;
    let mut reports = vec![base.report];
    let mut buffer_sizes = vec![buffer.len()];
    let flush = |reports: &[EvalReport]| -> Result<()> {
        if let Some(dir) = out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let rows = reports.iter().enumerate().map(|(i, r)| (i.to_string(), r));
            let path = dir.join("iterations.csv");
            let mut f =
                fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            f.write_all(summary_csv("iteration", rows).as_bytes())?;
            f.sync_all()?;
        }
        Ok(())
    };
    flush(&reports)?;
    for i in 1..=config.iterations as u64 {
        let spec = CollectSpec {
            episodes: config.iteration_rollouts,
            steps: config.collect_steps,
            seed: derive_seed(config.seed, Stream::Iteration, i),
        };
        let fresh = collect_plan(config, &model, spec)?;
        if let Some(dir) = out {
            save_rollouts(&dir.join(format!("iter_{i}")).join("rollouts"), &fresh)?;
        }
        buffer.extend(fresh);
        let vae = model.vae.clone();
        fit_mdrnn(config, &vae, &mut model.mdrnn, buffer.iter(), i)?;
        let report = evaluate_model(config, &model)?;
        if let Some(dir) = out {
            let it = dir.join(format!("iter_{i}"));
            save_model(&model, &it.join("model.ckpt"))?;
            write(&it.join("report.csv"), report.to_csv())?;
        }
        reports.push(report);
        buffer_sizes.push(buffer.len());
        flush(&reports)?;
    }
    Ok(IterativeRun {
        model,
        reports,
        buffer_sizes,
    })
}

/// Output of the expert-mix experiment.
#[derive(Clone, Debug)]
pub struct ExpertMixRun {
    pub model: WorldModel,
    pub report: EvalReport,
    pub rollouts: Vec<Rollout>,
}

/// Half random, half oracle-planner rollouts (`collect_episodes` in total),
/// MDN-RNN trained on the mix, then evaluated. A supplied `vae` is reused
/// frozen so the comparison with a random-only model isolates the dynamics
/// data; otherwise a VAE is trained on the mix first.
pub fn run_expert_mix(
    config: &Config,
    vae: Option<&Vae>,
    out: Option<&Path>,
) -> Result<ExpertMixRun> {
    let half = config.collect_episodes / 2;
    let spec = |episodes, seed| CollectSpec {
        episodes,
        steps: config.collect_steps,
        seed,
    };
    let mut rollouts = collect_random(config, spec(half, config.seed))?;
    let oracle_seed = config.seed.wrapping_add(half as u64);
    rollouts.extend(collect_oracle(
        config,
        spec(config.collect_episodes - half, oracle_seed),
    )?);
    let vae = match vae {
        Some(v) => v.clone(),
        None => fit_vae(config, &rollouts)?.0,
    };
    let mut mdrnn = init_mdrnn(config);
    fit_mdrnn(config, &vae, &mut mdrnn, &rollouts, 0)?;
    let model = WorldModel { vae, mdrnn };
    let report = evaluate_model(config, &model)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        save_rollouts(&dir.join("rollouts"), &rollouts)?;
        save_model(&model, &dir.join("model.ckpt"))?;
        write(&dir.join("report.csv"), report.to_csv())?;
    }
    Ok(ExpertMixRun {
        model,
        report,
        rollouts,
    })
}

/// Planner parameter varied by [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Horizon,
    Generations,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Horizon => "horizon",
            SweepParam::Generations => "generations",
        }
    }
}

/// One evaluation per value with everything else fixed, in the order given.
pub fn sweep(
    config: &Config,
    model: &WorldModel,
    param: SweepParam,
    values: &[usize],
) -> Result<Vec<(usize, EvalReport)>> {
    values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            match param {
                SweepParam::Horizon => c.horizon = v,
                SweepParam::Generations => c.generations = v,
            }
            c.validate()?;
            Ok((v, evaluate_model(&c, model)?))
        })
        .collect()
}

pub fn sweep_csv(param: SweepParam, rows: &[(usize, EvalReport)]) -> String {
    summary_csv(param.name(), rows.iter().map(|(v, r)| (v.to_string(), r)))
}

/// Held-out random rollouts on tracks disjoint from the training ones.
pub fn held_out_rollouts(config: &Config, episodes: usize) -> Result<Vec<Rollout>> {
    collect_random(
        config,
        CollectSpec {
            episodes,
            steps: config.collect_steps,
            seed: derive_seed(config.seed, Stream::HeldOut, 0),
        },
    )
}

/// One-step metrics of `model` on `rollouts`.
pub fn held_out_metrics(model: &WorldModel, rollouts: &[Rollout]) -> Result<ModelMetrics> {
    let encoded = encode_rollouts(&model.vae, rollouts)?;
    Ok(model_metrics(&model.mdrnn, &encoded)?)
}

/// Fraction of rollouts carrying each tag, in `[random, plan, oracle]` order.
pub fn tag_fractions(rollouts: &[Rollout]) -> [f64; 3] {
    let n = rollouts.len().max(1) as f64;
    let count = |t| rollouts.iter().filter(|r| r.tag == t).count() as f64 / n;
    [
        count(PolicyTag::Random),
        count(PolicyTag::Plan),
        count(PolicyTag::Oracle),
    ]
}
