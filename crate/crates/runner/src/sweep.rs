//! Grid sweeps over γ or T_bias.

use std::path::Path;

use anyhow::{bail, Result};
use debias_core::metrics::MetricsRow;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::experiment::{run_experiment, Summary};
use crate::output::{csv_writer, METRICS_HEADER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma(Vec<f64>),
    TBias(Vec<usize>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Gamma(_) => "gamma",
            SweepAxis::TBias(_) => "t_bias",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Gamma(v) => v.len(),
            SweepAxis::TBias(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value label of point `i`, also its subdirectory suffix.
    pub fn label(&self, i: usize) -> String {
        match self {
            SweepAxis::Gamma(v) => v[i].to_string(),
            SweepAxis::TBias(v) => v[i].to_string(),
        }
    }

    pub fn apply(&self, base: &RunConfig, i: usize) -> RunConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::Gamma(v) => c.pipeline.gamma = v[i],
            SweepAxis::TBias(v) => c.pipeline.t_bias = v[i],
        }
        c
    }
}

pub struct SweepPoint {
    pub value: String,
    pub summary: Summary,
}

/// Runs each point into `out/<axis>_<value>/` and merges all epochs into
/// `out/sweep.csv`, keyed by `(axis_value, seed, epoch)`. Points run on the
/// current rayon pool.
pub fn run_sweep(base: &RunConfig, axis: &SweepAxis, out: &Path) -> Result<Vec<SweepPoint>> {
    if axis.is_empty() {
        bail!("sweep axis {} has no values", axis.name());
    }
    let configs: Vec<RunConfig> = (0..axis.len()).map(|i| axis.apply(base, i)).collect();
    for c in &configs {
        c.validate()?;
    }
    let mut labels: Vec<String> = (0..axis.len()).map(|i| axis.label(i)).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != axis.len() {
        bail!("sweep axis {} repeats a value", axis.name());
    }
    let points: Vec<SweepPoint> = configs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let value = axis.label(i);
            let dir = out.join(format!("{}_{value}", axis.name()));
            run_experiment(c, &dir).map(|summary| SweepPoint { value, summary })
        })
        .collect::<Result<_>>()?;
    merge(axis, out, &points)?;
    Ok(points)
}

fn merge(axis: &SweepAxis, out: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv_writer(&out.join("sweep.csv"))?;
    let mut header = vec!["axis", "axis_value"];
    header.extend(METRICS_HEADER);
    w.write_record(&header)?;
    for p in points {
        let dir = out.join(format!("{}_{}", axis.name(), p.value));
        let mut r = csv::Reader::from_path(dir.join("metrics.csv"))?;
        for rec in r.records() {
            let rec = rec?;
            let mut row = vec![axis.name().to_string(), p.value.clone()];
            row.extend(rec.iter().map(str::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses one `metrics.csv` row back into a seed and record.
pub fn parse_metrics_record(rec: &csv::StringRecord) -> Result<(u64, MetricsRow)> {
    if rec.len() != METRICS_HEADER.len() {
        bail!("metrics row has {} fields", rec.len());
    }
    let opt =
        |s: &str| -> Result<Option<f64>> { Ok(if s.is_empty() { None } else { Some(s.parse()?) }) };
    Ok((
        rec[0].parse()?,
        MetricsRow {
            epoch: rec[1].parse()?,
            train_loss: rec[2].parse()?,
            test_acc: opt(&rec[3])?,
            test_acc_ba: opt(&rec[4])?,
            test_acc_bc: opt(&rec[5])?,
            debias_bc_ratio: opt(&rec[6])?,
            seconds: 0.0,
        },
    ))
}
