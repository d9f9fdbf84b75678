use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::classifier::{
    train, BatchSampler, ConstantWeights, EpochBatches, GceConfig, MlpParams, Objective,
    TrainConfig, TrainSetup, WeightProvider,
};
use crate::data::{estimate_p_y_given_b, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::scalar::Scalar;
use crate::vcae::{train_vcae, vcae_class_probs, vcae_weights, VcaeConfig, VcaeParams};

use super::baselines::{pgd_weight, tba_offset_matrix};
use super::biased::{train_biased_classifier, BiasedClassifierArtifact};
use super::lff::train_lff;
use super::sampler::WeightedSampler;
use super::weights::{
    compute_weights_clamped, oracle_ub_weights, oracle_yb_weights, rescale_weights, AnnealConfig,
    AnnealedWeights, Provenance, SampleWeights,
};

/// Source of the per-sample weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Unweighted training.
    Vanilla,
    OracleUb,
    OracleYb,
    BiasedConfidence,
    Lff,
    Pgd,
    Vcae,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Vanilla,
        Scheme::OracleUb,
        Scheme::OracleYb,
        Scheme::BiasedConfidence,
        Scheme::Lff,
        Scheme::Pgd,
        Scheme::Vcae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Vanilla => "vanilla",
            Scheme::OracleUb => "oracle-ub",
            Scheme::OracleYb => "oracle-yb",
            Scheme::BiasedConfidence => "biased-confidence",
            Scheme::Lff => "lff",
            Scheme::Pgd => "pgd",
            Scheme::Vcae => "vcae",
        }
    }
}

/// How the weights enter training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lw,
    Alw,
    Ws,
    Tba,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lw => "lw",
            Method::Alw => "alw",
            Method::Ws => "ws",
            Method::Tba => "tba",
        }
    }
}

pub fn validate_combination(scheme: Scheme, method: Method) -> Result<()> {
    let ok = match scheme {
        Scheme::Vanilla | Scheme::Lff => method == Method::Lw,
        Scheme::Pgd => method == Method::Ws,
        Scheme::OracleUb | Scheme::OracleYb | Scheme::BiasedConfidence | Scheme::Vcae => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Incompatible(format!(
            "scheme {} cannot be used with method {}",
            scheme.as_str(),
            method.as_str()
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scheme: Scheme,
    pub method: Method,
    /// Clamp ceiling for biased-confidence weights and TBA probabilities.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Epochs of GCE training for the biased classifier.
    #[serde(default = "default_t_bias")]
    pub t_bias: usize,
    #[serde(default)]
    pub gce: GceConfig,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Optimizer and batching of the biased classifier; `train` when absent.
    #[serde(default)]
    pub biased_train: Option<TrainConfig>,
    #[serde(default)]
    pub vcae: VcaeConfig,
    /// Training of the VCAE; `train` when absent.
    #[serde(default)]
    pub vcae_train: Option<TrainConfig>,
}

fn default_gamma() -> f64 {
    200.0
}

fn default_t_bias() -> usize {
    10
}

impl PipelineConfig {
    pub fn new(scheme: Scheme, method: Method, train: TrainConfig) -> Self {
        Self {
            scheme,
            method,
            gamma: default_gamma(),
            t_bias: default_t_bias(),
            gce: GceConfig::default(),
            anneal: AnnealConfig::default(),
            train,
            biased_train: None,
            vcae: VcaeConfig::default(),
            vcae_train: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_combination(self.scheme, self.method)?;
        self.train.validate()?;
        self.gce.validate()?;
        self.anneal.validate()?;
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gamma {} must be > 1",
                self.gamma
            )));
        }
        if matches!(self.scheme, Scheme::BiasedConfidence | Scheme::Pgd) && self.t_bias == 0 {
            return Err(Error::InvalidConfig("T_bias must be >= 1".into()));
        }
        Ok(())
    }

    /// Training settings of the biased classifier, seeded one past `train`.
    pub fn biased_cfg(&self) -> TrainConfig {
        let base = self
            .biased_train
            .clone()
            .unwrap_or_else(|| self.train.clone());
        TrainConfig {
            seed: base.seed.wrapping_add(1),
            ..base
        }
    }

    pub fn vcae_cfg(&self) -> TrainConfig {
        self.vcae_train
            .clone()
            .unwrap_or_else(|| self.train.clone())
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput<T> {
    pub params: MlpParams<T>,
    pub history: Vec<MetricsRow>,
    /// Per-sample weights as computed by the scheme, before any rescaling.
    pub weights: SampleWeights<T>,
    pub biased: Option<BiasedClassifierArtifact<T>>,
    pub vcae: Option<VcaeParams<T>>,
}

/// Per-sample weights, and for TBA the `N×C` class probabilities, of a
/// two-stage scheme.
struct SchemeOutput<T> {
    weights: SampleWeights<T>,
    probs: Option<Tensor<T>>,
    biased: Option<BiasedClassifierArtifact<T>>,
    vcae: Option<VcaeParams<T>>,
}

fn conditional_rows<T: Scalar>(ds: &LabeledDataset<T>, table: &[T]) -> Result<Tensor<T>> {
    let bias = ds.bias().ok_or(Error::MissingBiasLabels)?;
    let c = ds.classes();
    let mut out = Vec::with_capacity(ds.len() * c);
    for &b in bias {
        out.extend((0..c).map(|y| table[y * c + b]));
    }
    Tensor::matrix(ds.len(), c, out)
}

/// PGD weights: the last-layer gradient norm of the frozen biased classifier.
pub fn pgd_weights<T: Scalar>(
    art: &BiasedClassifierArtifact<T>,
    ds: &LabeledDataset<T>,
) -> Result<SampleWeights<T>> {
    let h = art.penultimate(ds)?;
    let w = ds
        .labels()
        .iter()
        .enumerate()
        .map(|(n, &y)| pgd_weight(art.probs.row(n), y, h.row(n)))
        .collect::<Result<Vec<T>>>()?;
    let total: T = w.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::InvalidConfig("every PGD weight is zero".into()));
    }
    SampleWeights::new(
        w.into_iter().map(|v| v / total).collect(),
        Provenance::Pgd,
        None,
    )
}

fn scheme_weights<T: Scalar>(
    train: &LabeledDataset<T>,
    cfg: &PipelineConfig,
) -> Result<SchemeOutput<T>> {
    let need_probs = cfg.method == Method::Tba;
    let plain = |weights| SchemeOutput {
        weights,
        probs: None,
        biased: None,
        vcae: None,
    };
    match cfg.scheme {
        Scheme::Vanilla => Ok(plain(SampleWeights::uniform(train.len()))),
        Scheme::OracleUb => {
            let weights = oracle_ub_weights(train)?;
            let probs = if need_probs {
                let table: Vec<T> = train
                    .origin()
                    .map(|o| o.analytic_p_y_given_b())
                    .unwrap_or_default()
                    .into_iter()
                    .map(T::lit)
                    .collect();
                Some(conditional_rows(train, &table)?)
            } else {
                None
            };
            Ok(SchemeOutput {
                probs,
                ..plain(weights)
            })
        }
        Scheme::OracleYb => {
            let est = estimate_p_y_given_b(train)?;
            let weights = oracle_yb_weights(train, &est)?;
            let probs = need_probs
                .then(|| conditional_rows(train, est.table()))
                .transpose()?;
            Ok(SchemeOutput {
                probs,
                ..plain(weights)
            })
        }
        Scheme::BiasedConfidence | Scheme::Pgd => {
            let art = train_biased_classifier(train, cfg.gce, cfg.t_bias, &cfg.biased_cfg())?;
            let weights = if cfg.scheme == Scheme::Pgd {
                pgd_weights(&art, train)?
            } else {
                compute_weights_clamped(&art.confidences, T::lit(cfg.gamma))?
            };
            Ok(SchemeOutput {
                weights,
                probs: need_probs.then(|| art.probs.clone()),
                biased: Some(art),
                vcae: None,
            })
        }
        Scheme::Vcae => {
            let out = train_vcae(train, &cfg.vcae, &cfg.vcae_cfg())?;
            let weights = vcae_weights(&out.params, train, &cfg.vcae)?;
            let probs = need_probs
                .then(|| vcae_class_probs(&out.params, train, &cfg.vcae))
                .transpose()?;
            Ok(SchemeOutput {
                weights,
                probs,
                biased: None,
                vcae: Some(out.params),
            })
        }
        Scheme::Lff => Err(Error::Incompatible(
            "lff weights are computed during training".into(),
        )),
    }
}

/// Computes the scheme's weights and trains the debiased classifier `θ`.
pub fn run_debias_pipeline<T: Scalar>(
    train_ds: &LabeledDataset<T>,
    test_ds: &LabeledDataset<T>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput<T>> {
    cfg.validate()?;
    if cfg.scheme == Scheme::Lff {
        let out = train_lff(train_ds, Some(test_ds), cfg.gce, &cfg.train)?;
        return Ok(PipelineOutput {
            params: out.params,
            history: out.history,
            weights: out.weights,
            biased: None,
            vcae: None,
        });
    }
    let s = scheme_weights(train_ds, cfg)?;
    let tc = &cfg.train;
    let init = MlpParams::init(&tc.layer_sizes(train_ds.dim(), train_ds.classes()), tc.seed)?;
    let n = train_ds.len();
    let ones = ConstantWeights {
        value: T::one(),
        len: n,
    };
    let mut epochs = EpochBatches::new(n, tc.batch_size, tc.shuffle, tc.seed ^ 0xba7c);

    let mut objective = Objective::CrossEntropy;
    let rescaled;
    let annealed;
    let mut resampler;
    let (weights, sampler): (&dyn WeightProvider<T>, &mut dyn BatchSampler) =
        match (cfg.scheme, cfg.method) {
            (Scheme::Vanilla, _) => (&ones, &mut epochs),
            (_, Method::Lw) => {
                rescaled = rescale_weights(&s.weights)?;
                (&rescaled, &mut epochs)
            }
            (_, Method::Alw) => {
                annealed = AnnealedWeights {
                    target: rescale_weights(&s.weights)?,
                    config: cfg.anneal,
                };
                (&annealed, &mut epochs)
            }
            (_, Method::Ws) => {
                resampler = WeightedSampler::for_epochs_of(
                    s.weights.weights(),
                    tc.batch_size,
                    tc.seed ^ 0x5a4d,
                )?;
                (&ones, &mut resampler)
            }
            (_, Method::Tba) => {
                let probs = s.probs.as_ref().ok_or_else(|| {
                    Error::Incompatible(format!(
                        "scheme {} has no class probabilities",
                        cfg.scheme.as_str()
                    ))
                })?;
                objective = Objective::OffsetCrossEntropy {
                    offsets: tba_offset_matrix(probs, T::lit(cfg.gamma))?,
                };
                (&ones, &mut epochs)
            }
        };
    let outcome = train(
        init,
        TrainSetup {
            train: train_ds,
            objective: &objective,
            weights,
            sampler,
            cfg: tc,
            eval: Some(test_ds),
        },
    )?;
    let mut history = outcome.history;
    if cfg.method == Method::Ws {
        // Resampling draws in proportion to w, so the weight in force on a
        // sample is its sampling weight.
        let beta = crate::metrics::debias_bc_ratio(s.weights.weights(), train_ds.aligned()).ok();
        for row in &mut history {
            row.debias_bc_ratio = beta;
        }
    }
    Ok(PipelineOutput {
        params: outcome.params,
        history,
        weights: s.weights,
        biased: s.biased,
        vcae: s.vcae,
    })
}
