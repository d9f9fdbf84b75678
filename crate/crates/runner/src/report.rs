//! Aggregation of finished runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use debias_core::metrics::MetricsRow;

use crate::experiment::{final_value, MeanStd, SUMMARY_COLUMNS};
use crate::output::csv_writer;
use crate::sweep::parse_metrics_record;

/// Reads a `metrics.csv` back, grouped by seed in file order.
pub fn read_metrics(path: &Path) -> Result<Vec<(u64, Vec<MetricsRow>)>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut runs: Vec<(u64, Vec<MetricsRow>)> = Vec::new();
    for rec in r.records() {
        let (seed, row) = parse_metrics_record(&rec?)?;
        match runs.last_mut() {
            Some((s, rows)) if *s == seed => rows.push(row),
            _ => runs.push((seed, vec![row])),
        }
    }
    Ok(runs)
}

/// Final-epoch mean and std of each metric, recomputed from `metrics.csv`.
pub fn aggregate(runs: &[(u64, Vec<MetricsRow>)]) -> BTreeMap<String, MeanStd> {
    let mut out = BTreeMap::new();
    for col in SUMMARY_COLUMNS {
        let vals: Option<Vec<f64>> = runs
            .iter()
            .map(|(_, rows)| {
                rows.iter()
                    .max_by_key(|r| r.epoch)
                    .and_then(|r| final_value(r, col))
            })
            .collect();
        if let Some(m) = vals.as_deref().and_then(MeanStd::of) {
            out.insert(col.to_string(), m);
        }
    }
    out
}

/// One row per (run directory, metric) into `out`; runs are named by their
/// final path component.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<()> {
    if dirs.is_empty() {
        bail!("report needs at least one run directory");
    }
    let mut w = csv_writer(out)?;
    w.write_record(["run", "metric", "mean", "std", "n"])?;
    for d in dirs {
        let agg = aggregate(&read_metrics(&d.join("metrics.csv"))?);
        let name = d
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| d.display().to_string());
        for (k, m) in agg {
            w.write_record([
                name.clone(),
                k,
                m.mean.to_string(),
                m.std.to_string(),
                m.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
