use crate::autodiff::Tensor;
use crate::classifier::{
    softmax, train_with_hook, ConstantWeights, EpochBatches, GceConfig, MlpParams, Objective,
    TrainConfig, TrainSetup, P_MIN,
};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::scalar::{log_sum_exp, pairwise_sum, Scalar};

/// Mean training cross-entropy above which biased training is abandoned.
pub const COLLAPSE_XENT: f64 = 50.0;

const CHUNK: usize = 1024;

/// A GCE-trained classifier `ψ` and its cached outputs on the training set.
#[derive(Clone, Debug)]
pub struct BiasedClassifierArtifact<T> {
    pub params: MlpParams<T>,
    /// `p_ψ(y_n | x_n)`, floored at `P_MIN` so it stays in `(0, 1]`.
    pub confidences: Vec<T>,
    /// Full class probabilities, `N×C`.
    pub probs: Tensor<T>,
    pub t_bias: usize,
    pub tau: f64,
    pub history: Vec<MetricsRow>,
}

impl<T: Scalar> BiasedClassifierArtifact<T> {
    /// Penultimate activations of `ψ` on `ds`, `N×H`.
    pub fn penultimate(&self, ds: &LabeledDataset<T>) -> Result<Tensor<T>> {
        Ok(self.params.forward_with_hidden(ds.features())?.1)
    }
}

/// Class probabilities of `params` on every sample, `N×C`.
pub fn predict_probs<T: Scalar>(
    params: &MlpParams<T>,
    ds: &LabeledDataset<T>,
) -> Result<Tensor<T>> {
    let c = ds.classes();
    let mut out = Vec::with_capacity(ds.len() * c);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let logits = params.logits(&ds.features().select_rows(chunk))?;
        for r in 0..chunk.len() {
            out.extend(softmax(logits.row(r)));
        }
    }
    Tensor::matrix(ds.len(), c, out)
}

/// Mean of `−log softmax(f)[y]` without the probability floor.
pub fn mean_raw_xent<T: Scalar>(params: &MlpParams<T>, ds: &LabeledDataset<T>) -> Result<f64> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut losses = Vec::with_capacity(ds.len());
    for chunk in idx.chunks(CHUNK) {
        let logits = params.logits(&ds.features().select_rows(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let row = logits.row(r);
            losses.push((log_sum_exp(row) - row[ds.labels()[i]]).as_f64());
        }
    }
    Ok(pairwise_sum(&losses) / losses.len().max(1) as f64)
}

/// Trains `ψ` for `t_bias` epochs on mean GCE. `cfg.epochs` is ignored.
pub fn train_biased_classifier<T: Scalar>(
    train: &LabeledDataset<T>,
    gce: GceConfig,
    t_bias: usize,
    cfg: &TrainConfig,
) -> Result<BiasedClassifierArtifact<T>> {
    if t_bias == 0 {
        return Err(Error::InvalidConfig("T_bias must be >= 1".into()));
    }
    gce.validate()?;
    let cfg = TrainConfig {
        epochs: t_bias,
        ..cfg.clone()
    };
    let init = MlpParams::init(&cfg.layer_sizes(train.dim(), train.classes()), cfg.seed)?;
    let objective = Objective::Gce {
        tau: T::lit(gce.tau),
    };
    let weights = ConstantWeights {
        value: T::one(),
        len: train.len(),
    };
    let mut sampler =
        EpochBatches::new(train.len(), cfg.batch_size, cfg.shuffle, cfg.seed ^ 0x5eed);
    let setup = TrainSetup {
        train,
        objective: &objective,
        weights: &weights,
        sampler: &mut sampler,
        cfg: &cfg,
        eval: None,
    };
    let outcome = train_with_hook(init, setup, &mut |epoch, p| {
        let x = mean_raw_xent(p, train)?;
        if x > COLLAPSE_XENT {
            return Err(Error::Collapse {
                epoch,
                mean_xent: x,
                limit: COLLAPSE_XENT,
            });
        }
        Ok(())
    })?;
    let probs = predict_probs(&outcome.params, train)?;
    let c = train.classes();
    let floor = T::lit(P_MIN);
    let confidences = train
        .labels()
        .iter()
        .enumerate()
        .map(|(n, &y)| probs.data()[n * c + y].max(floor).min(T::one()))
        .collect();
    Ok(BiasedClassifierArtifact {
        params: outcome.params,
        confidences,
        probs,
        t_bias,
        tau: gce.tau,
        history: outcome.history,
    })
}
