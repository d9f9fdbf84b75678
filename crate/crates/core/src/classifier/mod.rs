//! MLP classifier, losses, and the mini-batch training loop shared by every
//! strategy.

mod checkpoint;
mod loss;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelMeta};
pub use loss::{
    gce_grad, gce_loss, gce_on_tape, per_sample_loss, softmax, softmax_xent, weighted_mean_loss,
    weighted_mean_on_tape, xent_on_tape, GceConfig, LossKind, P_MIN,
};
pub use mlp::{mlp_forward, MlpOutput, MlpParams, MlpVars};
pub use train::{
    train, train_step, train_with_hook, BatchSampler, ConstantWeights, EpochBatches, Objective,
    TrainConfig, TrainOutcome, TrainSetup, WeightProvider,
};
