//! Double-precision (or `f32`) tensors, a reverse-mode tape, and the
//! optimizers used to train every model in the crate.

mod optim;
mod tape;
mod tensor;

pub use optim::{Adam, Optimizer, OptimizerConfig, Sgd};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::matmul_plain;
