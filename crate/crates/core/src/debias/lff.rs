use std::time::Instant;

use crate::classifier::{
    softmax_xent, train_step, BatchSampler, EpochBatches, GceConfig, LossKind, MlpParams,
    TrainConfig,
};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::metrics::{debias_bc_ratio, evaluate, MetricsRow};
use crate::scalar::{pairwise_sum, Scalar};

use super::baselines::lff_weight;
use super::weights::{Provenance, SampleWeights};

#[derive(Clone, Debug)]
pub struct LffOutcome<T> {
    /// Debiased classifier `θ`.
    pub params: MlpParams<T>,
    /// Biased classifier `ψ`, trained alongside on GCE.
    pub biased: MlpParams<T>,
    pub history: Vec<MetricsRow>,
    /// Weights of every training sample under the final pair of models.
    pub weights: SampleWeights<T>,
}

fn xent_rows<T: Scalar>(
    params: &MlpParams<T>,
    x: &crate::autodiff::Tensor<T>,
    y: &[usize],
) -> Result<Vec<T>> {
    let logits = params.logits(x)?;
    y.iter()
        .enumerate()
        .map(|(r, &yy)| softmax_xent(logits.row(r), yy))
        .collect()
}

/// LfF weights of a set of samples under the current `ψ` and `θ`.
pub fn lff_weights_for<T: Scalar>(
    biased: &MlpParams<T>,
    debiased: &MlpParams<T>,
    x: &crate::autodiff::Tensor<T>,
    y: &[usize],
) -> Result<Vec<T>> {
    let lb = xent_rows(biased, x, y)?;
    let ld = xent_rows(debiased, x, y)?;
    lb.into_iter()
        .zip(ld)
        .map(|(b, d)| lff_weight(b, d))
        .collect()
}

/// Trains `ψ` (GCE) and `θ` (weighted cross-entropy) in lockstep; each batch
/// is weighted by the loss ratio of the two models before either steps.
pub fn train_lff<T: Scalar>(
    train: &LabeledDataset<T>,
    eval: Option<&LabeledDataset<T>>,
    gce: GceConfig,
    cfg: &TrainConfig,
) -> Result<LffOutcome<T>> {
    cfg.validate()?;
    gce.validate()?;
    let sizes = cfg.layer_sizes(train.dim(), train.classes());
    let mut theta = MlpParams::init(&sizes, cfg.seed)?;
    let mut psi = MlpParams::init(&sizes, cfg.seed.wrapping_add(1))?;
    let mut opt_theta = cfg.optimizer.build::<T>();
    let mut opt_psi = cfg.optimizer.build::<T>();
    let mut sampler = EpochBatches::new(train.len(), cfg.batch_size, cfg.shuffle, cfg.seed ^ 0x1ff);
    let gce_loss = LossKind::Gce {
        tau: T::lit(gce.tau),
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut losses = Vec::new();
        for idx in sampler.next_epoch() {
            let x = train.features().select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let w = lff_weights_for(&psi, &theta, &x, &y)?;
            let ones = vec![T::one(); idx.len()];
            train_step(&mut psi, &mut opt_psi, &x, &y, &gce_loss, &ones)?;
            let l = train_step(
                &mut theta,
                &mut opt_theta,
                &x,
                &y,
                &LossKind::CrossEntropy,
                &w,
            )?;
            losses.push(l.as_f64());
        }
        let all = lff_weights_for(&psi, &theta, train.features(), train.labels())?;
        let acc = eval.map(|e| evaluate(&theta, e)).transpose()?;
        history.push(MetricsRow {
            epoch,
            train_loss: pairwise_sum(&losses) / losses.len().max(1) as f64,
            test_acc: acc.map(|a| a.overall),
            test_acc_ba: acc.and_then(|a| a.ba),
            test_acc_bc: acc.and_then(|a| a.bc),
            debias_bc_ratio: debias_bc_ratio(&all, train.aligned()).ok(),
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let weights = SampleWeights::new(
        lff_weights_for(&psi, &theta, train.features(), train.labels())?,
        Provenance::Lff,
        None,
    )?;
    Ok(LffOutcome {
        params: theta,
        biased: psi,
        history,
        weights,
    })
}
