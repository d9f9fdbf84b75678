//! One configuration over its seeds.

use std::path::Path;

use anyhow::{Context, Result};
use debias_core::classifier::save_checkpoint;
use debias_core::debias::{run_debias_pipeline, PipelineOutput};
use debias_core::metrics::MetricsRow;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{create_dir, write_json, write_metrics, write_timings, write_weights};

/// Final-epoch columns aggregated across seeds.
pub const SUMMARY_COLUMNS: [&str; 4] =
    ["test_acc", "test_acc_ba", "test_acc_bc", "debias_bc_ratio"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheme: String,
    pub method: String,
    pub gamma: f64,
    pub t_bias: usize,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    /// Keyed by metric name; a metric missing in any run is omitted.
    pub final_epoch: std::collections::BTreeMap<String, MeanStd>,
}

pub fn final_value(row: &MetricsRow, column: &str) -> Option<f64> {
    match column {
        "train_loss" => Some(row.train_loss),
        "test_acc" => row.test_acc,
        "test_acc_ba" => row.test_acc_ba,
        "test_acc_bc" => row.test_acc_bc,
        "debias_bc_ratio" => row.debias_bc_ratio,
        _ => None,
    }
}

pub fn summarize(cfg: &RunConfig, runs: &[(u64, Vec<MetricsRow>)]) -> Summary {
    let mut final_epoch = std::collections::BTreeMap::new();
    for col in SUMMARY_COLUMNS {
        let vals: Option<Vec<f64>> = runs
            .iter()
            .map(|(_, h)| h.last().and_then(|r| final_value(r, col)))
            .collect();
        if let Some(ms) = vals.as_deref().and_then(MeanStd::of) {
            final_epoch.insert(col.to_string(), ms);
        }
    }
    Summary {
        scheme: cfg.pipeline.scheme.as_str().into(),
        method: cfg.pipeline.method.as_str().into(),
        gamma: cfg.pipeline.gamma,
        t_bias: cfg.pipeline.t_bias,
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        epochs: cfg.pipeline.train.epochs,
        final_epoch,
    }
}

/// Everything one seed produced, kept in memory for the caller.
pub struct SeedRun {
    pub seed: u64,
    pub output: PipelineOutput<f64>,
    pub aligned: Vec<bool>,
}

pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let (train, test) = cfg.datasets(seed)?;
    let p = cfg.pipeline_for(seed);
    let output = run_debias_pipeline(&train, &test, &p)
        .with_context(|| format!("seed {seed}: {} / {}", p.scheme.as_str(), p.method.as_str()))?;
    Ok(SeedRun {
        seed,
        output,
        aligned: train.aligned().to_vec(),
    })
}

/// Runs every seed (in parallel on the current rayon pool) and writes
/// `metrics.csv`, `summary.json`, `timings.csv`, per-seed weight dumps and
/// checkpoints into `out`.
pub fn run_experiment(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    create_dir(out)?;
    let runs: Vec<SeedRun> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<_>>()?;
    for r in &runs {
        write_weights(
            &out.join(format!("weights_seed{}.csv", r.seed)),
            &r.output.weights,
            &r.aligned,
        )?;
        if cfg.save_checkpoints {
            save_checkpoint(
                &r.output.params,
                &cfg.pipeline.train.optimizer,
                &out.join(format!("checkpoint_seed{}", r.seed)),
            )?;
        }
    }
    let histories: Vec<(u64, Vec<MetricsRow>)> = runs
        .into_iter()
        .map(|r| (r.seed, r.output.history))
        .collect();
    write_metrics(&out.join("metrics.csv"), &histories)?;
    write_timings(&out.join("timings.csv"), &histories)?;
    let summary = summarize(cfg, &histories);
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("config.json"), cfg)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[4.0]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }
}
