use std::time::Duration;

use epls::config::{Config, ConfigError, RandomPolicyKind};
use epls::report::{loss_csv, summary_csv, EvalReport};
use epls_core::planner::LatentPropagation;

#[test]
fn empty_text_gives_defaults() {
    let c = Config::parse("").unwrap();
    assert_eq!(c, Config::default());
    assert_eq!(c.tiles, 100);
    assert_eq!(c.max_steps, 200);
    assert_eq!(c.horizon, 20);
    assert_eq!(c.generations, 10);
    assert_eq!(c.mutation_prob, 0.3);
    assert_eq!(c.latent_dim, 8);
    assert_eq!(c.rnn_hidden, 64);
    assert_eq!(c.mixtures, 3);
    assert_eq!(c.random_policy, RandomPolicyKind::Brownian);
}

#[test]
fn comments_blanks_and_spacing_are_ignored() {
    let c = Config::parse("# header\n\n  horizon=5   # inline\nseed = 9\npropagation = sampled\n")
        .unwrap();
    assert_eq!(c.horizon, 5);
    assert_eq!(c.seed, 9);
    assert_eq!(c.propagation, LatentPropagation::Sampled);
}

#[test]
fn unknown_key_is_rejected() {
    assert_eq!(
        Config::parse("horizn = 5"),
        Err(ConfigError::UnknownKey("horizn".into()))
    );
}

#[test]
fn malformed_lines_and_values_are_rejected() {
    assert_eq!(
        Config::parse("horizon 5"),
        Err(ConfigError::Syntax { line: 1 })
    );
    assert_eq!(
        Config::parse("a = 1\n= 3"),
        Err(ConfigError::UnknownKey("a".into()))
    );
    assert_eq!(Config::parse("\n= 3"), Err(ConfigError::Syntax { line: 2 }));
    assert!(matches!(
        Config::parse("horizon = -1"),
        Err(ConfigError::Value { .. })
    ));
    assert!(matches!(
        Config::parse("random_policy = lazy"),
        Err(ConfigError::Value { .. })
    ));
}

#[test]
fn validation_rejects_degenerate_values() {
    for text in [
        "horizon = 0",
        "generations = 0",
        "tiles = 9",
        "mutation_prob = 0",
        "mutation_prob = 1.5",
        "eval_tracks = 0",
        "latent_dim = 0",
        "vae_lr = 0",
    ] {
        assert!(
            matches!(Config::parse(text), Err(ConfigError::Invalid(_))),
            "{text}"
        );
    }
}

#[test]
fn echo_parses_back_to_the_same_config() {
    let c =
        Config::parse("seed = 4\nhorizon = 7\nkl_weight = 0.5\nrandom_policy = uniform\n").unwrap();
    let text = c.to_text();
    assert_eq!(Config::parse(&text).unwrap(), c);
    assert_eq!(text.lines().count(), Config::KEYS.len());
}

#[test]
fn missing_file_reports_the_path() {
    let err = Config::load(std::path::Path::new("/nonexistent/x.cfg")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/x.cfg"));
}

fn report(scores: Vec<f64>) -> EvalReport {
    let seeds = (0..scores.len() as u64).collect();
    EvalReport::new(seeds, scores, Config::default(), Duration::from_secs(1))
}

#[test]
fn report_statistics_are_recomputable_from_rows() {
    let r = report(vec![100.0, 250.5, 980.0, -3.0]);
    let csv = r.to_csv();
    let rows: Vec<f64> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows.len(), 4);
    let n = rows.len() as f64;
    let mean = rows.iter().sum::<f64>() / n;
    let var = rows.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - r.mean).abs() < 1e-6);
    assert!((var.sqrt() - r.std).abs() < 1e-6);
    let header_mean: f64 = csv
        .lines()
        .next()
        .unwrap()
        .trim_start_matches("# mean = ")
        .parse()
        .unwrap();
    assert!((header_mean - mean).abs() < 1e-6);
}

#[test]
fn report_echoes_config_and_omits_wall_clock() {
    let mut r = report(vec![1.0, 2.0]);
    let csv = r.to_csv();
    for (k, v) in Config::default().entries() {
        assert!(csv.contains(&format!("# {k} = {v}\n")), "{k}");
    }
    r.wall_clock = Duration::from_secs(99);
    assert_eq!(r.to_csv(), csv);
}

#[test]
fn single_track_has_zero_std() {
    let r = report(vec![512.25]);
    assert_eq!(r.std, 0.0);
    assert_eq!(r.summary(), "512.25 ± 0.00");
}

#[test]
fn summary_and_loss_csv_layout() {
    let a = report(vec![1.0, 3.0]);
    let csv = summary_csv("iteration", [("0".to_string(), &a)]);
    assert_eq!(csv, format!("iteration,mean,std\n0,2,{}\n", 2f64.sqrt()));
    assert_eq!(loss_csv(&[2.5, 1.0]), "epoch,loss\n1,2.5\n2,1\n");
}
