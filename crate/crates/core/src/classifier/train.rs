use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{per_sample_loss, weighted_mean_on_tape, LossKind};
use super::mlp::{mlp_forward, MlpParams};
use crate::autodiff::{Optimizer, OptimizerConfig, Tape, Tensor};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{debias_bc_ratio, evaluate, MetricsRow};
use crate::scalar::{pairwise_sum, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    #[serde(default = "yes")]
    pub shuffle: bool,
    /// Hidden layer widths of the MLP.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn yes() -> bool {
    true
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            optimizer: OptimizerConfig::adam(1e-3),
            seed: 0,
            shuffle: true,
            hidden: default_hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.optimizer.lr() > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        Ok(())
    }

    /// `[D, hidden.., C]`
    pub fn layer_sizes(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(&self.hidden);
        s.push(classes);
        s
    }
}

/// Supplies the loss weight of each sample at a given optimizer step.
pub trait WeightProvider<T> {
    fn batch_weights(&self, idx: &[usize], step: u64) -> Vec<T>;

    /// Weights of every training sample at `step`, used for the debiasing
    /// BC ratio. `None` when the provider has no per-sample weights.
    fn all_weights(&self, step: u64) -> Option<Vec<T>>;
}

/// Every sample weighs the same.
#[derive(Clone, Copy, Debug)]
pub struct ConstantWeights<T> {
    pub value: T,
    pub len: usize,
}

impl<T: Scalar> WeightProvider<T> for ConstantWeights<T> {
    fn batch_weights(&self, idx: &[usize], _step: u64) -> Vec<T> {
        vec![self.value; idx.len()]
    }

    fn all_weights(&self, _step: u64) -> Option<Vec<T>> {
        Some(vec![self.value; self.len])
    }
}

/// Produces the mini-batches of one epoch.
pub trait BatchSampler {
    fn next_epoch(&mut self) -> Vec<Vec<usize>>;
}

/// Visits every sample once per epoch, optionally in a seeded random order.
#[derive(Clone, Debug)]
pub struct EpochBatches {
    n: usize,
    batch_size: usize,
    shuffle: bool,
    rng: ChaCha8Rng,
}

impl EpochBatches {
    pub fn new(n: usize, batch_size: usize, shuffle: bool, seed: u64) -> Self {
        Self {
            n,
            batch_size: batch_size.max(1),
            shuffle,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl BatchSampler for EpochBatches {
    fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.n).collect();
        if self.shuffle {
            idx.shuffle(&mut self.rng);
        }
        idx.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Training objective over the whole dataset; [`Objective::batch_loss`]
/// slices out what one batch needs.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective<T> {
    CrossEntropy,
    Gce {
        tau: T,
    },
    /// Cross-entropy of `softmax(logits + offsets[n])`; `offsets` is `N×C`.
    OffsetCrossEntropy {
        offsets: Tensor<T>,
    },
}

impl<T: Scalar> Objective<T> {
    pub fn batch_loss(&self, idx: &[usize]) -> LossKind<T> {
        match self {
            Objective::CrossEntropy => LossKind::CrossEntropy,
            Objective::Gce { tau } => LossKind::Gce { tau: *tau },
            Objective::OffsetCrossEntropy { offsets } => LossKind::OffsetCrossEntropy {
                offsets: offsets.select_rows(idx),
            },
        }
    }
}

/// One optimizer step on a batch; returns the weighted batch loss.
pub fn train_step<T: Scalar>(
    params: &mut MlpParams<T>,
    opt: &mut Optimizer<T>,
    x: &Tensor<T>,
    y: &[usize],
    loss: &LossKind<T>,
    weights: &[T],
) -> Result<T> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let xv = tape.constant(x.clone());
    let out = mlp_forward(&mut tape, &vars, xv)?;
    let per = per_sample_loss(&mut tape, out.logits, y, loss)?;
    let total = weighted_mean_on_tape(&mut tape, per, weights)?;
    let value = tape.value(total).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {value}")));
    }
    let grads = tape.backward(total)?;
    let g = vars.grads(&grads, params);
    opt.step(params.tensors_mut(), &g)?;
    Ok(value)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: MlpParams<T>,
    pub history: Vec<MetricsRow>,
    /// Optimizer steps taken.
    pub steps: u64,
}

/// Everything [`train`] needs besides the initial parameters.
pub struct TrainSetup<'a, T> {
    pub train: &'a LabeledDataset<T>,
    pub objective: &'a Objective<T>,
    pub weights: &'a dyn WeightProvider<T>,
    pub sampler: &'a mut dyn BatchSampler,
    pub cfg: &'a TrainConfig,
    pub eval: Option<&'a LabeledDataset<T>>,
}

/// Mini-batch training. After each epoch the optional `on_epoch` hook sees
/// the epoch index and current parameters and may abort training.
pub fn train_with_hook<T: Scalar>(
    init: MlpParams<T>,
    setup: TrainSetup<'_, T>,
    on_epoch: &mut dyn FnMut(usize, &MlpParams<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    let TrainSetup {
        train,
        objective,
        weights,
        sampler,
        cfg,
        eval,
    } = setup;
    cfg.validate()?;
    if init.input_dim() != train.dim() || init.output_dim() != train.classes() {
        return Err(Error::shape(
            "train",
            format!(
                "model {:?} for data dim {} with {} classes",
                init.sizes(),
                train.dim(),
                train.classes()
            ),
        ));
    }
    let mut params = init;
    let mut opt = cfg.optimizer.build::<T>();
    let mut step: u64 = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let batches = sampler.next_epoch();
        let mut losses = Vec::with_capacity(batches.len());
        for idx in &batches {
            let x = train.features().select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let w = weights.batch_weights(idx, step);
            let l = train_step(
                &mut params,
                &mut opt,
                &x,
                &y,
                &objective.batch_loss(idx),
                &w,
            )
            .map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("{msg} at epoch {epoch}, step {step}"))
                }
                other => other,
            })?;
            losses.push(l.as_f64());
            step += 1;
        }
        on_epoch(epoch, &params)?;
        let last_step = step.saturating_sub(1);
        let beta = weights
            .all_weights(last_step)
            .and_then(|w| debias_bc_ratio(&w, train.aligned()).ok());
        let acc = eval.map(|e| evaluate(&params, e)).transpose()?;
        history.push(MetricsRow {
            epoch,
            train_loss: if losses.is_empty() {
                0.0
            } else {
                pairwise_sum(&losses) / losses.len() as f64
            },
            test_acc: acc.map(|a| a.overall),
            test_acc_ba: acc.and_then(|a| a.ba),
            test_acc_bc: acc.and_then(|a| a.bc),
            debias_bc_ratio: beta,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        steps: step,
    })
}

pub fn train<T: Scalar>(init: MlpParams<T>, setup: TrainSetup<'_, T>) -> Result<TrainOutcome<T>> {
    train_with_hook(init, setup, &mut |_, _| Ok(()))
}
