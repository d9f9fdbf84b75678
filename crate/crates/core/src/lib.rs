//! Dataset-bias mitigation by inverse-conditional weighting.
//!
//! The crate trains classifiers on procedurally generated biased data and
//! reweights (or resamples) training samples by an estimate of
//! `1 / p(y | b)`, the inverse probability of the label given the spurious
//! bias attribute. It contains:
//!
//! * [`autodiff`]: tensors, a reverse-mode tape, SGD and Adam;
//! * [`data`]: biased dataset generators and the `p(y|b)` estimator;
//! * [`classifier`]: MLPs, cross-entropy / GCE losses, the training loop;
//! * [`debias`]: clamped inverse-confidence weights, annealing, weighted
//!   sampling, the LfF / PGD / TBA baselines and the two-stage pipeline;
//! * [`causal`]: exact enumeration checks of the interventional bound;
//! * [`vcae`]: the variational clustering autoencoder and its `p(y|z)`
//!   weights;
//! * [`metrics`]: per-epoch records and the debiasing BC ratio.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the runner uses.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod causal;
pub mod classifier;
pub mod data;
pub mod debias;
mod error;
pub mod metrics;
mod scalar;
pub mod vcae;

pub use error::{Error, Result};
pub use scalar::{log_sum_exp, pairwise_sum, Scalar};

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Dataset = data::LabeledDataset<f64>;
pub type Mlp = classifier::MlpParams<f64>;
