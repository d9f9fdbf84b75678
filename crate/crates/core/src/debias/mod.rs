//! Sample weights and the strategies that use them: loss weighting,
//! annealed loss weighting, weighted sampling, and the LfF, PGD and TBA
//! baselines.

mod baselines;
mod biased;
mod lff;
mod pipeline;
mod sampler;
mod weights;

pub use baselines::{
    lff_weight, pgd_weight, tba_adjusted_probs, tba_log_offsets, tba_offset_matrix, TbaConfig,
};
pub use biased::{
    mean_raw_xent, predict_probs, train_biased_classifier, BiasedClassifierArtifact, COLLAPSE_XENT,
};
pub use lff::{lff_weights_for, train_lff, LffOutcome};
pub use pipeline::{
    pgd_weights, run_debias_pipeline, validate_combination, Method, PipelineConfig, PipelineOutput,
    Scheme,
};
pub use sampler::WeightedSampler;
pub use weights::{
    anneal_weight, compute_weights_clamped, inverse_conditional_weights, oracle_ub_weights,
    oracle_yb_weights, rescale_weights, AnnealConfig, AnnealedWeights, Provenance, SampleWeights,
    RESCALED_MAX,
};
