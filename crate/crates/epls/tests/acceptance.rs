//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use epls::config::Config;
use epls::experiment::{
    collect_random, evaluate_oracle, evaluate_random, held_out_metrics, held_out_rollouts,
    iterate_from, run_noniterative, sweep, CollectSpec, NonIterativeRun, SweepParam,
};
use epls::format::{
    decode_checkpoint, decode_rollout, encode_checkpoint, encode_rollout, FormatError,
};
use epls::model::WorldModel;
use epls_core::autodiff::{max_gradient_error, Graph, Tensor, Var};
use epls_core::env::{Action, Env, EnvConfig, EnvSpec, TrackConfig};
use epls_core::pipeline::PolicyTag;
use epls_core::planner::{
    hill_climb, mutate, random_plan, rmhc, Plan, PlannerConfig, SimStep, Simulator,
};
use epls_core::worldmodel::{
    gmm_nll, GmmParams, Mdrnn, MdrnnConfig, MdrnnVars, Vae, VaeConfig, VaeVars,
};
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = (bool, String);

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (
        t < limit,
        format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()),
    )
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor<f64> {
    Tensor::matrix(rows, cols, data).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let vae_cfg = VaeConfig {
        obs_dim: 16,
        latent_dim: 4,
        hidden: [12, 8],
        kl_weight: 1.0,
    };
    let rnn_cfg = MdrnnConfig {
        latent_dim: 4,
        action_dim: 3,
        hidden_dim: 8,
        mixtures: 2,
    };
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vae = Vae::new(vae_cfg, &mut rng);
        let params: Vec<Tensor<f64>> = vae.params().tensors().iter().map(|t| t.cast()).collect();
        let obs = matrix(3, 16, uniform(&mut rng, 48, 0.0, 1.0));
        let noise = matrix(3, 4, uniform(&mut rng, 12, -1.5, 1.5));
        let err = max_gradient_error(&params, 1e-4, |g, v| {
            let vars = VaeVars::from_slice(v);
            let o = g.input(obs.clone());
            let n = g.input(noise.clone());
            let out = Vae::forward_graph(&vars, g, o, n).unwrap();
            Vae::loss_graph(g, o, &out, vae_cfg.kl_weight).unwrap()
        })
        .unwrap();
        worst = worst.max(err);

        let rnn = Mdrnn::new(rnn_cfg, &mut rng);
        let params: Vec<Tensor<f64>> = rnn.params().tensors().iter().map(|t| t.cast()).collect();
        let data = SequenceData::random(&mut rng, &rnn_cfg);
        let err = max_gradient_error(&params, 1e-4, |g, v| data.loss(&rnn_cfg, g, v)).unwrap();
        worst = worst.max(err);
    }
    let (fast, time) = within(start, Duration::from_secs(30));
    (
        worst < 1e-4 && fast,
        format!("max relative error {worst:.2e}, {time}"),
    )
}

/// Three steps of two sequences; the second ends after two steps.
struct SequenceData {
    inputs: Vec<Tensor<f64>>,
    z_next: Vec<Tensor<f64>>,
    rewards: Vec<Tensor<f64>>,
    terminals: Vec<Tensor<f64>>,
    masks: Vec<Tensor<f64>>,
    latent_masks: Vec<Tensor<f64>>,
}

impl SequenceData {
    fn random(rng: &mut ChaCha8Rng, cfg: &MdrnnConfig) -> Self {
        let l = cfg.latent_dim;
        let col = |v: [f64; 2]| matrix(2, 1, v.to_vec());
        Self {
            inputs: (0..3)
                .map(|_| {
                    matrix(
                        2,
                        cfg.input_dim(),
                        uniform(rng, 2 * cfg.input_dim(), -1.0, 1.0),
                    )
                })
                .collect(),
            z_next: (0..3)
                .map(|_| matrix(2, l, uniform(rng, 2 * l, -1.0, 1.0)))
                .collect(),
            rewards: (0..3)
                .map(|_| col([rng.random_range(-1.0..10.0), rng.random_range(-1.0..10.0)]))
                .collect(),
            terminals: vec![col([0.0, 0.0]), col([0.0, 1.0]), col([1.0, 0.0])],
            masks: vec![col([1.0, 1.0]), col([1.0, 1.0]), col([1.0, 0.0])],
            latent_masks: vec![col([1.0, 1.0]), col([1.0, 0.0]), col([0.0, 0.0])],
        }
    }

    fn loss(&self, cfg: &MdrnnConfig, g: &mut Graph<f64>, v: &[Var]) -> Var {
        let vars = MdrnnVars {
            wx: v[0],
            wh: v[1],
            b: v[2],
            head_w: v[3],
            head_b: v[4],
        };
        let mut h = g.input(Tensor::zeros(&[2, cfg.hidden_dim]));
        let mut c = g.input(Tensor::zeros(&[2, cfg.hidden_dim]));
        let mut total = g.input(Tensor::scalar(0.0));
        for t in 0..3 {
            let x = g.input(self.inputs[t].clone());
            let (hn, cn) = Mdrnn::cell_graph(cfg, &vars, g, x, h, c).unwrap();
            let heads = Mdrnn::heads_graph(cfg, &vars, g, hn).unwrap();
            let z = g.input(self.z_next[t].clone());
            let r = g.input(self.rewards[t].clone());
            let d = g.input(self.terminals[t].clone());
            let m = g.input(self.masks[t].clone());
            let lm = g.input(self.latent_masks[t].clone());
            let step = Mdrnn::step_loss_graph(g, &heads, z, r, d, m, lm).unwrap();
            total = g.add(total, step).unwrap();
            h = hn;
            c = cn;
        }
        total
    }
}

fn naive_nll(g: &GmmParams, z: &[f32]) -> f64 {
    let mut density = 0.0f64;
    for k in 0..g.mixtures() {
        let mut p = g.pi[k] as f64;
        for ((&zi, &m), &s) in z.iter().zip(g.component_mu(k)).zip(g.component_sigma(k)) {
            let (s, d) = (s as f64, (zi - m) as f64);
            p *= (-0.5 * d * d / (s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        }
        density += p;
    }
    -density.ln()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=4);
        let l = rng.random_range(1..=6);
        let raw: Vec<f32> = (0..k).map(|_| rng.random_range(0.05f32..1.0)).collect();
        let total: f32 = raw.iter().sum();
        let g = GmmParams {
            pi: raw.iter().map(|p| p / total).collect(),
            mu: (0..k * l).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
            sigma: (0..k * l).map(|_| rng.random_range(0.4f32..1.5)).collect(),
            latent_dim: l,
        };
        let z: Vec<f32> = (0..l).map(|_| rng.random_range(-1.5..1.5)).collect();
        worst = worst.max((gmm_nll(&g, &z).unwrap() - naive_nll(&g, &z)).abs());
    }
    let mut closed = 0.0f64;
    for l in 1..=6 {
        let g = GmmParams {
            pi: vec![1.0],
            mu: vec![0.25; l],
            sigma: vec![1.0; l],
            latent_dim: l,
        };
        closed = closed.max((gmm_nll(&g, &vec![0.25; l]).unwrap() - l as f64 / 2.0 * LN_2PI).abs());
    }
    let (fast, time) = within(start, Duration::from_secs(10));
    (
        worst < 1e-6 && closed < 1e-6 && fast,
        format!("oracle gap {worst:.1e}, closed-form gap {closed:.1e}, {time}"),
    )
}

/// Reward depends on the action only.
struct ActionReward<F>(F);

impl<F: Fn(&Action) -> f32> Simulator for ActionReward<F> {
    type State = ();

    fn step<R: Rng + ?Sized>(&self, _: &(), a: &Action, _: &mut R) -> SimStep<()> {
        SimStep {
            state: (),
            reward: (self.0)(a),
            terminal_p: 0.0,
        }
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (proptest::num::u64::ANY, 0usize..40, proptest::bool::ANY);
    let monotone = runner
        .run(&strategy, |(seed, generations, noisy)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weights: Vec<f32> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let initial = random_plan(3, &mut rng);
            let climb = hill_climb(
                initial,
                generations,
                &mut rng,
                |p, r| mutate(p, r, 0.3, 0.3),
                |p: &Plan, r: &mut ChaCha8Rng| {
                    let base: f32 = p
                        .actions()
                        .iter()
                        .map(|a| {
                            a.to_array()
                                .iter()
                                .zip(&weights)
                                .map(|(x, w)| (x * w).sin())
                                .sum::<f32>()
                        })
                        .sum();
                    if noisy {
                        base + r.random_range(-1.0..1.0)
                    } else {
                        base
                    }
                },
            );
            proptest::prop_assert!(climb.trace.windows(2).all(|w| w[1] >= w[0]));
            Ok(())
        })
        .is_ok();

    let config = PlannerConfig {
        horizon: 1,
        generations: 500,
        ..PlannerConfig::default()
    };
    let snap = |v: f32| ((v + 1.0) * 5.0).round() as usize;
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = rng.random_range(0..11usize);
        let width = rng.random_range(1.0f32..4.0);
        let score = move |cell: usize| -((cell as f32 - target as f32) / width).powi(2);
        let sim = ActionReward(move |a: &Action| score(snap(a.steer)));
        let best = (0..11).map(score).fold(f32::NEG_INFINITY, f32::max);
        let initial = random_plan(1, &mut rng);
        hits += usize::from(
            rmhc(&sim, &(), &config, &mut rng, initial)
                .evaluation
                .fitness
                == best,
        );
    }
    let (fast, time) = within(start, Duration::from_secs(30));
    (
        monotone && hits >= 99 && fast,
        format!("trace monotone over 1000 runs: {monotone}, grid optimum {hits}/100, {time}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let env = EnvSpec {
        track: TrackConfig {
            max_curvature: 0.0,
            ..TrackConfig::default()
        },
        car: EnvConfig::default(),
    }
    .build(0);
    let (mut s, _) = env.reset();
    let mut total = 0.0f64;
    let mut t = 0usize;
    loop {
        let out = env.step(&s, Action::new(0.0, 1.0, 0.0)).unwrap();
        total += out.reward as f64;
        t += 1;
        s = out.state;
        if out.terminal {
            break;
        }
    }
    let expected = 1000.0 - 0.1 * t as f64;
    let exact = s.visited_count == 100 && (total - expected).abs() < 1e-3;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut best = f64::NEG_INFINITY;
    for seed in 0..200 {
        let env = Env::from_seed(seed);
        let (mut s, _) = env.reset();
        let mut total = 0.0f64;
        loop {
            let a = Action::new(
                rng.random_range(-1.0..=1.0),
                rng.random(),
                rng.random::<f32>() * 0.2,
            );
            let out = env.step(&s, a).unwrap();
            total += out.reward as f64;
            s = out.state;
            if out.terminal {
                break;
            }
        }
        best = best.max(total);
    }
    let bounded = total <= 1000.0 - 0.1 + 1e-3 && best <= 1000.0 - 0.1 + 1e-3;
    let (fast, time) = within(start, Duration::from_secs(5));
    (
        exact && bounded && fast,
        format!("traversal {total:.3} in {t} steps (expected {expected:.3}), best random episode {best:.2}, {time}"),
    )
}

fn desk() -> Config {
    Config::default()
}

struct Base {
    run: NonIterativeRun,
    elapsed: Duration,
}

fn base() -> &'static Base {
    static BASE: OnceLock<Base> = OnceLock::new();
    BASE.get_or_init(|| {
        let start = Instant::now();
        let run = run_noniterative(&desk(), None).unwrap();
        Base {
            run,
            elapsed: start.elapsed(),
        }
    })
}

fn criterion_5() -> Outcome {
    let b = base();
    let held = held_out_rollouts(&desk(), 50).unwrap();
    let m = held_out_metrics(&b.run.model, &held).unwrap();
    let fast = b.elapsed < Duration::from_secs(15 * 60);
    (
        m.gmm_nll < m.persistence_nll && m.reward_mse < m.reward_variance && fast,
        format!(
            "NLL {:.2} vs persistence {:.2}, reward MSE {:.2} vs variance {:.2}, training and evaluation {:.0}s",
            m.gmm_nll,
            m.persistence_nll,
            m.reward_mse,
            m.reward_variance,
            b.elapsed.as_secs_f64()
        ),
    )
}

/// One-sided paired t-test of `a > b` at 95%.
fn paired_greater(a: &[f64], b: &[f64]) -> (bool, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let critical = StudentsT::new(0.0, 1.0, n - 1.0).unwrap().inverse_cdf(0.95);
    (t > critical, t)
}

fn criterion_6() -> Outcome {
    let b = base();
    let start = Instant::now();
    let learned = &b.run.report;
    let oracle = evaluate_oracle(&desk()).unwrap();
    let random = evaluate_random(&desk()).unwrap();
    let paired =
        learned.track_seeds == random.track_seeds && learned.track_seeds == oracle.track_seeds;
    let (significant, t) = paired_greater(&learned.scores, &random.scores);
    let elapsed = start.elapsed() + b.elapsed;
    let ordered = oracle.mean >= learned.mean && learned.mean >= 2.0 * random.mean;
    (
        paired && ordered && significant && elapsed < Duration::from_secs(20 * 60),
        format!(
            "oracle {}, learned {}, random {}, paired t = {t:.2}, {:.0}s",
            oracle.summary(),
            learned.summary(),
            random.summary(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let b = base();
    let start = Instant::now();
    let run = iterate_from(&desk(), b.run.clone(), None).unwrap();
    let means: Vec<f64> = run.reports.iter().map(|r| r.mean).collect();
    let best_later = means[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let elapsed = start.elapsed() + b.elapsed;
    let listed: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
    (
        means.len() == 4
            && means[1] > means[0]
            && best_later >= 1.15 * means[0]
            && elapsed < Duration::from_secs(45 * 60),
        format!(
            "iteration means [{}], {:.0}s",
            listed.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let b = base();
    let start = Instant::now();
    let model = &b.run.model;
    let h = sweep(&desk(), model, SweepParam::Horizon, &[1, 8, 16]).unwrap();
    let g = sweep(&desk(), model, SweepParam::Generations, &[1, 10]).unwrap();
    let (h1, h8, h16) = (h[0].1.mean, h[1].1.mean, h[2].1.mean);
    let (g1, g10) = (g[0].1.mean, g[1].1.mean);
    let ok = h1 < h8 && (h8 - h16).abs() <= 0.25 * h16.abs() && g1 < g10;
    let elapsed = start.elapsed();
    (
        ok && elapsed < Duration::from_secs(30 * 60),
        format!(
            "H=1 {h1:.2}, H=8 {h8:.2}, H=16 {h16:.2}, G=1 {g1:.2}, G=10 {g10:.2}, {:.0}s",
            elapsed.as_secs_f64()
        ),
    )
}

const SMALL: &str = "\
latent_dim = 4
vae_hidden1 = 32
vae_hidden2 = 16
rnn_hidden = 16
mixtures = 2
vae_epochs = 2
vae_lr = 0.001
mdrnn_epochs = 2
bptt_len = 8
collect_episodes = 4
collect_steps = 20
horizon = 4
generations = 2
max_steps = 30
eval_tracks = 2
iterations = 1
iteration_rollouts = 2
buffer_capacity = 10
";

/// CRC32 of every file under `dir`, keyed by relative path.
fn checksums(dir: &Path) -> BTreeMap<PathBuf, u32> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    crc32fast::hash(&fs::read(&p).unwrap()),
                );
            }
        }
    }
    out
}

/// Runs every command into `dir` with the small config.
fn run_all_commands(dir: &Path, cfg: &Path) -> bool {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_owned();
    let cfg = cfg.to_str().unwrap();
    let commands: Vec<Vec<String>> = [
        vec![
            "collect",
            "--policy",
            "random",
            "--episodes",
            "4",
            "--steps",
            "20",
            "--seed",
            "3",
            "--out",
            &p("random"),
        ],
        vec![
            "collect",
            "--policy",
            "oracle",
            "--episodes",
            "1",
            "--steps",
            "10",
            "--out",
            &p("oracle"),
        ],
        vec![
            "train",
            "--component",
            "vae",
            "--data",
            &p("random"),
            "--out",
            &p("vae.ckpt"),
        ],
        vec![
            "train",
            "--component",
            "mdrnn",
            "--data",
            &p("random"),
            "--vae",
            &p("vae.ckpt"),
            "--out",
            &p("model.ckpt"),
        ],
        vec![
            "collect",
            "--policy",
            "plan",
            "--episodes",
            "1",
            "--steps",
            "10",
            "--model",
            &p("model.ckpt"),
            "--out",
            &p("plan"),
        ],
        vec![
            "evaluate",
            "--model",
            &p("model.ckpt"),
            "--report",
            &p("report.csv"),
        ],
        vec![
            "sweep",
            "--model",
            &p("model.ckpt"),
            "--param",
            "horizon",
            "--values",
            "1,4",
            "--out",
            &p("sweep.csv"),
        ],
        vec![
            "viz",
            "--model",
            &p("model.ckpt"),
            "--track-seed",
            "1",
            "--show-plans",
            "--out",
            &p("episode.svg"),
        ],
        vec!["iterate", "--out", &p("iterate")],
        vec!["run", "--out", &p("run")],
        vec!["expert-mix", "--vae", &p("vae.ckpt"), "--out", &p("mix")],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(str::to_owned).collect())
    .collect();
    commands.iter().all(|args| {
        Command::new(env!("CARGO_BIN_EXE_epls"))
            .args(args)
            .args(["--config", cfg])
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    })
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ran = run_all_commands(&a, &cfg) && run_all_commands(&b, &cfg);
    let (ca, cb) = (checksums(&a), checksums(&b));
    let (fast, time) = within(start, Duration::from_secs(5 * 60));
    (
        ran && !ca.is_empty() && ca == cb && fast,
        format!(
            "{} files from 11 commands identical across reruns: {}, {time}",
            ca.len(),
            ca == cb
        ),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let config =
        Config::parse("latent_dim = 4\nvae_hidden1 = 32\nvae_hidden2 = 16\nrnn_hidden = 16\n")
            .unwrap();
    let params = WorldModel::init(&config).to_params();
    let ckpt = encode_checkpoint(&params).unwrap();
    let ckpt_ok = decode_checkpoint(&ckpt).unwrap() == params;
    let rollouts = collect_random(
        &config,
        CollectSpec {
            episodes: 3,
            steps: 50,
            seed: 10,
        },
    )
    .unwrap();
    let roll_ok = rollouts
        .iter()
        .all(|r| decode_rollout(&encode_rollout(r), r.tag).unwrap() == *r);
    let roll = encode_rollout(&rollouts[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut rejected = 0;
    for i in 0..100 {
        let mut bad = if i % 2 == 0 {
            ckpt.clone()
        } else {
            roll.clone()
        };
        let bit = rng.random_range(0..bad.len() * 8);
        bad[bit / 8] ^= 1 << (bit % 8);
        let res = if i % 2 == 0 {
            decode_checkpoint(&bad).map(|_| ())
        } else {
            decode_rollout(&bad, PolicyTag::Random).map(|_| ())
        };
        rejected += usize::from(matches!(res, Err(FormatError::Crc { .. })));
    }
    let (fast, time) = within(start, Duration::from_secs(60));
    (
        ckpt_ok && roll_ok && rejected == 100 && fast,
        format!("checkpoint round-trip {ckpt_ok}, rollout round-trip {roll_ok}, {rejected}/100 corruptions rejected, {time}"),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let (pass, detail) = check();
        failed += usize::from(!pass);
        println!(
            "criterion {n}: {} ({detail})",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
