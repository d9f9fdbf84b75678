//! CSV and JSON writers. Every file here is a pure function of the config
//! and seeds; wall-clock time goes to `timings.csv` only.

use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};
use debias_core::debias::SampleWeights;
use debias_core::metrics::MetricsRow;
use serde::Serialize;

pub const METRICS_HEADER: [&str; 7] = [
    "seed",
    "epoch",
    "train_loss",
    "test_acc",
    "test_acc_ba",
    "test_acc_bc",
    "debias_bc_ratio",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_record(seed: u64, row: &MetricsRow) -> Vec<String> {
    vec![
        seed.to_string(),
        row.epoch.to_string(),
        row.train_loss.to_string(),
        opt(row.test_acc),
        opt(row.test_acc_ba),
        opt(row.test_acc_bc),
        opt(row.debias_bc_ratio),
    ]
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_metrics(path: &Path, runs: &[(u64, Vec<MetricsRow>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER)?;
    for (seed, rows) in runs {
        for r in rows {
            w.write_record(metrics_record(*seed, r))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings(path: &Path, runs: &[(u64, Vec<MetricsRow>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["seed", "epoch", "seconds"])?;
    for (seed, rows) in runs {
        for r in rows {
            w.write_record([seed.to_string(), r.epoch.to_string(), r.seconds.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_weights(path: &Path, weights: &SampleWeights<f64>, aligned: &[bool]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["index", "weight", "aligned", "provenance"])?;
    let prov = weights.provenance().as_str();
    for (i, (v, a)) in weights.weights().iter().zip(aligned).enumerate() {
        w.write_record([
            i.to_string(),
            v.to_string(),
            u8::from(*a).to_string(),
            prov.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
