use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use epls::model::WorldModel;
use tempfile::TempDir;

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
max_steps = 20
eval_tracks = 2
iteration_rollouts = 2
buffer_capacity = 10
";

fn epls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epls"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = epls(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = epls(args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
    fn config(&self) -> PathBuf {
        self.path("small.cfg")
    }
    fn model(&self) -> PathBuf {
        self.path("model.ckpt")
    }
}

/// Rollouts, a VAE and a full model built once through the CLI.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(f.config(), SMALL).unwrap();
        let cfg = f.config();
        let data = f.path("data");
        let vae = f.path("vae.ckpt");
        ok(&[
            "collect",
            "--policy",
            "random",
            "--episodes",
            "4",
            "--steps",
            "20",
            "--config",
            s(&cfg),
            "--out",
            s(&data),
        ]);
        ok(&[
            "train",
            "--component",
            "vae",
            "--data",
            s(&data),
            "--config",
            s(&cfg),
            "--out",
            s(&vae),
        ]);
        ok(&[
            "train",
            "--component",
            "mdrnn",
            "--data",
            s(&data),
            "--config",
            s(&cfg),
            "--vae",
            s(&vae),
            "--out",
            s(&f.model()),
        ]);
        f
    })
}

fn tmp() -> TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn collect_writes_one_file_per_episode_and_is_reproducible() {
    let d = tmp();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let args = |out: &Path| {
        ok(&[
            "collect",
            "--policy",
            "random",
            "--episodes",
            "2",
            "--steps",
            "15",
            "--seed",
            "5",
            "--out",
            s(out),
        ])
    };
    let stdout = args(&a);
    args(&b);
    assert_eq!(stdout.lines().count(), 2);
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["manifest.txt", "rollout_00000.bin", "rollout_00001.bin"]
    );
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
    }
}

#[test]
fn collect_rejects_bad_arguments() {
    let d = tmp();
    let out = d.path().join("x");
    let o = s(&out);
    assert_eq!(
        code(&[
            "collect",
            "--policy",
            "random",
            "--episodes",
            "0",
            "--steps",
            "5",
            "--out",
            o
        ])
        .0,
        2
    );
    assert_eq!(
        code(&[
            "collect",
            "--policy",
            "random",
            "--episodes",
            "1",
            "--steps",
            "0",
            "--out",
            o
        ])
        .0,
        2
    );
    assert_eq!(
        code(&[
            "collect",
            "--policy",
            "plan",
            "--episodes",
            "1",
            "--steps",
            "5",
            "--out",
            o
        ])
        .0,
        2
    );
    assert_eq!(
        code(&[
            "collect",
            "--policy",
            "greedy",
            "--episodes",
            "1",
            "--steps",
            "5",
            "--out",
            o
        ])
        .0,
        2
    );
    assert_eq!(code(&["bogus"]).0, 2);
}

#[test]
fn collect_oracle_and_plan_tag_their_rollouts() {
    let f = fixture();
    let d = tmp();
    let (o, p) = (d.path().join("o"), d.path().join("p"));
    let cfg = f.config();
    ok(&[
        "collect",
        "--policy",
        "oracle",
        "--episodes",
        "1",
        "--steps",
        "10",
        "--config",
        s(&cfg),
        "--out",
        s(&o),
    ]);
    ok(&[
        "collect",
        "--policy",
        "plan",
        "--episodes",
        "1",
        "--steps",
        "10",
        "--config",
        s(&cfg),
        "--model",
        s(&f.model()),
        "--out",
        s(&p),
    ]);
    assert!(fs::read_to_string(o.join("manifest.txt"))
        .unwrap()
        .contains(" oracle"));
    assert!(fs::read_to_string(p.join("manifest.txt"))
        .unwrap()
        .contains(" plan"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let d = tmp();
    let cfg = d.path().join("bad.cfg");
    fs::write(&cfg, "horizn = 3\n").unwrap();
    let out = d.path().join("x");
    let (c, err) = code(&[
        "collect",
        "--policy",
        "random",
        "--episodes",
        "1",
        "--steps",
        "5",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(c, 2);
    assert!(err.contains("horizn"), "{err}");
}

#[test]
fn train_writes_one_loss_row_per_epoch() {
    let f = fixture();
    let vae_loss = fs::read_to_string(f.path("vae.loss.csv")).unwrap();
    let model_loss = fs::read_to_string(f.path("model.loss.csv")).unwrap();
    for csv in [vae_loss, model_loss] {
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines, ["epoch,loss", lines[1], lines[2]]);
        assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    }
    let model = WorldModel::load(&f.model()).unwrap();
    assert_eq!(model.vae.config().latent_dim, 4);
}

#[test]
fn train_mdrnn_requires_a_vae() {
    let f = fixture();
    let d = tmp();
    let out = d.path().join("m.ckpt");
    let (c, _) = code(&[
        "train",
        "--component",
        "mdrnn",
        "--data",
        s(&f.path("data")),
        "--config",
        s(&f.config()),
        "--out",
        s(&out),
    ]);
    assert_eq!(c, 2);
}

#[test]
fn train_on_empty_data_is_a_usage_error() {
    let d = tmp();
    fs::write(d.path().join("manifest.txt"), "").unwrap();
    let out = d.path().join("v.ckpt");
    assert_eq!(
        code(&[
            "train",
            "--component",
            "vae",
            "--data",
            s(d.path()),
            "--out",
            s(&out)
        ])
        .0,
        2
    );
}

#[test]
fn corrupt_rollout_fails_with_the_file_name() {
    let d = tmp();
    let data = d.path().join("data");
    ok(&[
        "collect",
        "--policy",
        "random",
        "--episodes",
        "2",
        "--steps",
        "5",
        "--out",
        s(&data),
    ]);
    let victim = data.join("rollout_00001.bin");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[30] ^= 0x10;
    fs::write(&victim, &bytes).unwrap();
    let out = d.path().join("v.ckpt");
    let (c, err) = code(&[
        "train",
        "--component",
        "vae",
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(c, 1);
    assert!(err.contains("rollout_00001.bin"), "{err}");

    fs::write(&victim, &bytes[..12]).unwrap();
    let (c, err) = code(&[
        "train",
        "--component",
        "vae",
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(c, 1);
    assert!(err.contains("rollout_00001.bin"), "{err}");
}

#[test]
fn missing_model_is_a_runtime_error() {
    let d = tmp();
    let r = d.path().join("r.csv");
    let (c, err) = code(&[
        "evaluate",
        "--model",
        "/nonexistent.ckpt",
        "--report",
        s(&r),
    ]);
    assert_eq!(c, 1);
    assert!(err.contains("/nonexistent.ckpt"));
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn evaluate_single_track_has_zero_std() {
    let f = fixture();
    let d = tmp();
    let r = d.path().join("r.csv");
    let out = ok(&[
        "evaluate",
        "--model",
        s(&f.model()),
        "--config",
        s(&f.config()),
        "--tracks",
        "1",
        "--report",
        s(&r),
    ]);
    assert!(out.trim_end().ends_with("± 0.00"), "{out}");
    assert_eq!(data_rows(&fs::read_to_string(&r).unwrap()).len(), 1);
}

#[test]
fn evaluate_report_has_one_row_per_track_and_is_reproducible() {
    let f = fixture();
    let d = tmp();
    let (a, b) = (d.path().join("a.csv"), d.path().join("b.csv"));
    for r in [&a, &b] {
        ok(&[
            "evaluate",
            "--model",
            s(&f.model()),
            "--config",
            s(&f.config()),
            "--tracks",
            "3",
            "--report",
            s(r),
        ]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(data_rows(&text).len(), 3);
    assert!(text.contains("# horizon = 4"));
    assert_eq!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn evaluate_rejects_zero_horizon() {
    let f = fixture();
    let d = tmp();
    let r = d.path().join("r.csv");
    assert_eq!(
        code(&[
            "evaluate",
            "--model",
            s(&f.model()),
            "--horizon",
            "0",
            "--report",
            s(&r)
        ])
        .0,
        2
    );
}

#[test]
fn sweep_keeps_one_row_per_value() {
    let f = fixture();
    let d = tmp();
    let out = d.path().join("s.csv");
    let m = f.model();
    let cfg = f.config();
    ok(&[
        "sweep",
        "--model",
        s(&m),
        "--config",
        s(&cfg),
        "--param",
        "horizon",
        "--values",
        "1,5,5",
        "--out",
        s(&out),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "horizon,mean,std");
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("5,"));
    assert_eq!(lines[2], lines[3]);
}

#[test]
fn sweep_value_matches_evaluate() {
    let f = fixture();
    let d = tmp();
    let (sw, ev) = (d.path().join("s.csv"), d.path().join("e.csv"));
    let (m, cfg) = (f.model(), f.config());
    ok(&[
        "sweep",
        "--model",
        s(&m),
        "--config",
        s(&cfg),
        "--param",
        "generations",
        "--values",
        "3",
        "--out",
        s(&sw),
    ]);
    ok(&[
        "evaluate",
        "--model",
        s(&m),
        "--config",
        s(&cfg),
        "--generations",
        "3",
        "--report",
        s(&ev),
    ]);
    let mean = fs::read_to_string(&ev)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .trim_start_matches("# mean = ")
        .to_string();
    let row = fs::read_to_string(&sw)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    assert_eq!(row.split(',').nth(1).unwrap(), mean);
}

#[test]
fn sweep_rejects_bad_values() {
    let f = fixture();
    let d = tmp();
    let out = d.path().join("s.csv");
    let m = f.model();
    for v in ["", "0", "1,-2", "a", "1,,2"] {
        let (c, _) = code(&[
            "sweep",
            "--model",
            s(&m),
            "--param",
            "horizon",
            "--values",
            v,
            "--out",
            s(&out),
        ]);
        assert_eq!(c, 2, "{v:?}");
    }
}

#[test]
fn viz_writes_deterministic_layers() {
    let f = fixture();
    let d = tmp();
    let (a, b, p) = (
        d.path().join("a.svg"),
        d.path().join("b.svg"),
        d.path().join("p.svg"),
    );
    let (m, cfg) = (f.model(), f.config());
    for out in [&a, &b] {
        ok(&[
            "viz",
            "--model",
            s(&m),
            "--config",
            s(&cfg),
            "--track-seed",
            "2",
            "--out",
            s(out),
        ]);
    }
    let svg = fs::read_to_string(&a).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches("<g").count(), 2);
    assert_eq!(svg, fs::read_to_string(&b).unwrap());
    ok(&[
        "viz",
        "--model",
        s(&m),
        "--config",
        s(&cfg),
        "--track-seed",
        "2",
        "--show-plans",
        "--out",
        s(&p),
    ]);
    assert_eq!(fs::read_to_string(&p).unwrap().matches("<g").count(), 3);
}

#[test]
fn iterate_writes_per_iteration_reports() {
    let f = fixture();
    let d = tmp();
    let out = d.path().join("it");
    let stdout = ok(&[
        "iterate",
        "--config",
        s(&f.config()),
        "--iterations",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("iteration 0:") && stdout.contains("iteration 1:"));
    let csv = fs::read_to_string(out.join("iterations.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "iteration,mean,std");
    for i in 0..2 {
        let it = out.join(format!("iter_{i}"));
        assert!(it.join("report.csv").exists());
        assert!(it.join("model.ckpt").exists());
    }
}

#[test]
fn run_and_expert_mix_produce_reports() {
    let f = fixture();
    let d = tmp();
    let (r, e) = (d.path().join("run"), d.path().join("mix"));
    ok(&["run", "--config", s(&f.config()), "--out", s(&r)]);
    for name in [
        "model.ckpt",
        "report.csv",
        "vae_loss.csv",
        "mdrnn_loss.csv",
        "rollouts/manifest.txt",
    ] {
        assert!(r.join(name).exists(), "{name}");
    }
    ok(&[
        "expert-mix",
        "--config",
        s(&f.config()),
        "--vae",
        s(&f.path("vae.ckpt")),
        "--out",
        s(&e),
    ]);
    let manifest = fs::read_to_string(e.join("rollouts/manifest.txt")).unwrap();
    assert!(manifest.contains(" oracle") && manifest.contains(" random"));
}
