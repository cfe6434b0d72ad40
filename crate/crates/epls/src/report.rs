use std::fmt::Write as _;
use std::time::Duration;

use epls_core::pipeline::mean_std;

use crate::config::Config;

/// Scores of one policy over a set of evaluation tracks.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub track_seeds: Vec<u64>,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single track.
    pub std: f64,
    pub config: Config,
    /// Time taken by the evaluation. Kept out of the CSV so reruns produce
    /// identical files.
    pub wall_clock: Duration,
}

impl EvalReport {
    pub fn new(
        track_seeds: Vec<u64>,
        scores: Vec<f64>,
        config: Config,
        wall_clock: Duration,
    ) -> Self {
        let (mean, std) = mean_std(&scores);
        Self {
            track_seeds,
            scores,
            mean,
            std,
            config,
            wall_clock,
        }
    }

    /// `mean ± std` with two decimals.
    pub fn summary(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }

    /// Comment header with the statistics and the resolved config, then one
    /// `track,track_seed,score` row per track.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# mean = {}", self.mean).unwrap();
        writeln!(out, "# std = {}", self.std).unwrap();
        for line in self.config.to_text().lines() {
            writeln!(out, "# {line}").unwrap();
        }
        out.push_str("track,track_seed,score\n");
        for (i, (seed, score)) in self.track_seeds.iter().zip(&self.scores).enumerate() {
            writeln!(out, "{i},{seed},{score}").unwrap();
        }
        out
    }
}

/// `header` followed by `key,mean,std` rows.
pub fn summary_csv<'a>(
    header: &str,
    rows: impl IntoIterator<Item = (String, &'a EvalReport)>,
) -> String {
    let mut out = format!("{header},mean,std\n");
    for (key, r) in rows {
        writeln!(out, "{key},{},{}", r.mean, r.std).unwrap();
    }
    out
}

/// `epoch,loss` rows, epochs counted from 1.
pub fn loss_csv(losses: &[f32]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{l}", i + 1).unwrap();
    }
    out
}
