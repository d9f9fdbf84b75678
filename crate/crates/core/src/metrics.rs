//! Per-epoch records and the debiasing BC ratio.

use serde::{Deserialize, Serialize};

use crate::classifier::MlpParams;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Scalar};

/// One epoch of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    pub test_acc_ba: Option<f64>,
    pub test_acc_bc: Option<f64>,
    /// Debiasing BC ratio of the weights in force during this epoch.
    pub debias_bc_ratio: Option<f64>,
    /// Wall-clock time of the epoch. Not written to deterministic outputs.
    #[serde(skip)]
    pub seconds: f64,
}

/// Test accuracy overall and on the bias-aligned / bias-conflicting subsets.
/// A subset accuracy is `None` when the subset is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub overall: f64,
    pub ba: Option<f64>,
    pub bc: Option<f64>,
}

pub fn evaluate<T: Scalar>(params: &MlpParams<T>, ds: &LabeledDataset<T>) -> Result<Accuracy> {
    const CHUNK: usize = 1024;
    let n = ds.len();
    if n == 0 {
        return Err(Error::EmptySubset("evaluation"));
    }
    let (mut hit, mut ba_hit, mut ba_n, mut bc_hit, mut bc_n) =
        (0usize, 0usize, 0usize, 0usize, 0usize);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(CHUNK) {
        let logits = params.logits(&ds.features().select_rows(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let row = logits.row(r);
            let pred = argmax(row);
            let ok = pred == ds.labels()[i];
            hit += usize::from(ok);
            if ds.aligned()[i] {
                ba_n += 1;
                ba_hit += usize::from(ok);
            } else {
                bc_n += 1;
                bc_hit += usize::from(ok);
            }
        }
    }
    let frac = |h: usize, t: usize| (t > 0).then(|| h as f64 / t as f64);
    Ok(Accuracy {
        overall: hit as f64 / n as f64,
        ba: frac(ba_hit, ba_n),
        bc: frac(bc_hit, bc_n),
    })
}

/// Index of the largest entry; the first one on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// `β = E_BC[w] / (E_BC[w] + E_BA[w])`.
pub fn debias_bc_ratio<T: Scalar>(weights: &[T], aligned: &[bool]) -> Result<f64> {
    if weights.len() != aligned.len() {
        return Err(Error::shape(
            "debias_bc_ratio",
            format!("{} weights vs {} flags", weights.len(), aligned.len()),
        ));
    }
    let ba: Vec<f64> = weights
        .iter()
        .zip(aligned)
        .filter(|(_, &a)| a)
        .map(|(w, _)| w.as_f64())
        .collect();
    let bc: Vec<f64> = weights
        .iter()
        .zip(aligned)
        .filter(|(_, &a)| !a)
        .map(|(w, _)| w.as_f64())
        .collect();
    if ba.is_empty() {
        return Err(Error::EmptySubset("bias-aligned"));
    }
    if bc.is_empty() {
        return Err(Error::EmptySubset("bias-conflicting"));
    }
    let mean_ba = pairwise_sum(&ba) / ba.len() as f64;
    let mean_bc = pairwise_sum(&bc) / bc.len() as f64;
    Ok(mean_bc / (mean_bc + mean_ba))
}
