//! Command-line interface. Exit codes: 0 success, 1 runtime or IO failure,
//! 2 usage or validation error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::experiment::{
    collect_oracle, collect_plan, collect_random, evaluate_model, fit_mdrnn, fit_vae, iterate_from,
    run_expert_mix, run_noniterative, sweep, sweep_csv, CollectSpec, SweepParam,
};
use crate::format::{load_rollouts, save_checkpoint, save_rollouts};
use crate::model::{init_mdrnn, load_vae, vae_params, WorldModel};
use crate::report::loss_csv;
use crate::viz::{record_episode, render_svg};

#[derive(Debug, Parser)]
#[command(
    name = "epls",
    version,
    about = "Evolutionary planning in a learned latent world model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CollectPolicy {
    Random,
    Plan,
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Component {
    Vae,
    Mdrnn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Param {
    Horizon,
    Generations,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record rollouts with a random, planning or oracle policy.
    Collect {
        #[arg(long, value_enum)]
        policy: CollectPolicy,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// World-model checkpoint; required for `--policy plan`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the VAE, or the MDN-RNN on top of a trained VAE.
    Train {
        #[arg(long, value_enum)]
        component: Component,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// VAE checkpoint used to encode the data; required for `mdrnn`.
        #[arg(long)]
        vae: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace; defaults to the checkpoint path with `.loss.csv`.
        #[arg(long)]
        loss: Option<PathBuf>,
    },
    /// Score the planning agent on seeded evaluation tracks.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tracks: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Non-iterative training followed by planning-policy refinement.
    Iterate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random rollouts, world-model training and evaluation in one go.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on half random, half oracle-planner rollouts and evaluate.
    ExpertMix {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Frozen VAE to reuse; trained on the mix when absent.
        #[arg(long)]
        vae: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate once per value of the horizon or the generation count.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated values; duplicates are kept.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        tracks: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot one planning episode as SVG.
    Viz {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        track_seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        show_plans: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Config file if given, defaults otherwise. A malformed file is a usage
/// error; an unreadable one a runtime error.
fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => match Config::load(p) {
            Ok(c) => Ok(c),
            Err(e @ crate::config::ConfigError::Read { .. }) => Err(CliError::Runtime(e.into())),
            Err(e) => Err(usage(format!("{}: {e}", p.display()))),
        },
    }
}

fn validated(config: Config) -> Result<Config, CliError> {
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_model(path: &Path) -> Result<WorldModel, CliError> {
    WorldModel::load(path)
        .with_context(|| format!("loading model {}", path.display()))
        .map_err(CliError::Runtime)
}

fn parse_values(text: &str) -> Result<Vec<usize>, CliError> {
    if text.trim().is_empty() {
        return Err(usage("values must not be empty"));
    }
    text.split(',')
        .map(str::trim)
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| usage(format!("invalid value `{p}`")))
        })
        .collect()
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Collect {
            policy,
            episodes,
            steps,
            seed,
            model,
            config,
            out,
        } => {
            if episodes < 1 {
                return Err(usage("episodes must be ≥ 1"));
            }
            if steps < 1 {
                return Err(usage("steps must be ≥ 1"));
            }
            let config = load_config(config.as_deref())?;
            let spec = CollectSpec {
                episodes,
                steps,
                seed,
            };
            let rollouts = match policy {
                CollectPolicy::Random => collect_random(&config, spec)?,
                CollectPolicy::Oracle => collect_oracle(&config, spec)?,
                CollectPolicy::Plan => {
                    let path =
                        model.ok_or_else(|| usage("--model is required for --policy plan"))?;
                    collect_plan(&config, &load_model(&path)?, spec)?
                }
            };
            save_rollouts(&out, &rollouts).map_err(|e| CliError::Runtime(e.into()))?;
            for (i, r) in rollouts.iter().enumerate() {
                println!(
                    "episode {i}: {} steps, reward {:.2}",
                    r.len(),
                    r.total_reward()
                );
            }
        }
        Command::Train {
            component,
            data,
            config,
            vae,
            out,
            loss,
        } => {
            let config = load_config(config.as_deref())?;
            let rollouts = load_rollouts(&data).map_err(|e| CliError::Runtime(e.into()))?;
            if rollouts.is_empty() {
                return Err(usage(format!("{}: no rollouts", data.display())));
            }
            let losses = match component {
                Component::Vae => {
                    let (trained, losses) = fit_vae(&config, &rollouts)?;
                    save_checkpoint(&out, &vae_params(&trained))
                        .map_err(|e| CliError::Runtime(e.into()))?;
                    losses
                }
                Component::Mdrnn => {
                    let path =
                        vae.ok_or_else(|| usage("--vae is required for --component mdrnn"))?;
                    let trained_vae = load_vae(&path, config.kl_weight)
                        .with_context(|| format!("loading VAE {}", path.display()))?;
                    if trained_vae.config().latent_dim != config.latent_dim {
                        return Err(usage(format!(
                            "VAE latent size {} does not match latent_dim {}",
                            trained_vae.config().latent_dim,
                            config.latent_dim
                        )));
                    }
                    let mut mdrnn = init_mdrnn(&config);
                    let losses = fit_mdrnn(&config, &trained_vae, &mut mdrnn, &rollouts, 0)?;
                    let model = WorldModel {
                        vae: trained_vae,
                        mdrnn,
                    };
                    model.save(&out).map_err(|e| CliError::Runtime(e.into()))?;
                    losses
                }
            };
            let loss_path = loss.unwrap_or_else(|| out.with_extension("loss.csv"));
            write_file(&loss_path, loss_csv(&losses))?;
            if let Some(last) = losses.last() {
                println!("final loss {last}");
            }
        }
        Command::Evaluate {
            model,
            tracks,
            horizon,
            generations,
            seed,
            config,
            report,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(t) = tracks {
                config.eval_tracks = t;
            }
            if let Some(h) = horizon {
                config.horizon = h;
            }
            if let Some(g) = generations {
                config.generations = g;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let config = validated(config)?;
            let model = load_model(&model)?;
            let r = evaluate_model(&config, &model)?;
            write_file(&report, r.to_csv())?;
            println!("{}", r.summary());
        }
        Command::Iterate {
            config,
            iterations,
            out,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(i) = iterations {
                config.iterations = i;
            }
            let config = validated(config)?;
            let base = run_noniterative(&config, Some(&out.join("iter_0")))?;
            println!("iteration 0: {}", base.report.summary());
            let run = iterate_from(&config, base, Some(&out))?;
            for (i, r) in run.reports.iter().enumerate().skip(1) {
                println!("iteration {i}: {}", r.summary());
            }
        }
        Command::Run { config, out } => {
            let config = load_config(config.as_deref())?;
            let run = run_noniterative(&config, Some(&out))?;
            println!("{}", run.report.summary());
        }
        Command::ExpertMix { config, vae, out } => {
            let config = load_config(config.as_deref())?;
            let vae = match vae {
                Some(p) => Some(
                    load_vae(&p, config.kl_weight)
                        .with_context(|| format!("loading VAE {}", p.display()))?,
                ),
                None => None,
            };
            let run = run_expert_mix(&config, vae.as_ref(), Some(&out))?;
            println!("{}", run.report.summary());
        }
        Command::Sweep {
            model,
            param,
            values,
            tracks,
            seed,
            config,
            out,
        } => {
            let values = parse_values(&values)?;
            let mut config = load_config(config.as_deref())?;
            if let Some(t) = tracks {
                config.eval_tracks = t;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let config = validated(config)?;
            let param = match param {
                Param::Horizon => SweepParam::Horizon,
                Param::Generations => SweepParam::Generations,
            };
            if values.contains(&0) {
                return Err(usage(format!("{} values must be ≥ 1", param.name())));
            }
            let model = load_model(&model)?;
            let rows = sweep(&config, &model, param, &values)?;
            write_file(&out, sweep_csv(param, &rows))?;
            for (v, r) in &rows {
                println!("{} {v}: {}", param.name(), r.summary());
            }
        }
        Command::Viz {
            model,
            track_seed,
            config,
            show_plans,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let model = load_model(&model)?;
            let (env, record) = record_episode(&config, &model, track_seed, show_plans)?;
            let svg = render_svg(env.track(), env.config().half_width, &record);
            write_file(&out, svg)?;
            println!(
                "{} steps, reward {:.2}",
                record.len(),
                record.total_reward()
            );
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<crate::format::FormatError> for CliError {
    fn from(e: crate::format::FormatError) -> Self {
        CliError::Runtime(anyhow!(e))
    }
}
