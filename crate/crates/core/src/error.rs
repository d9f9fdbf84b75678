use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("dataset has no bias labels")]
    MissingBiasLabels,

    #[error("bias value {0} never occurs; cannot condition on it")]
    EmptyBiasCell(usize),

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("probability table invalid: {0}")]
    InvalidTable(String),

    #[error(
        "biased classifier collapsed: mean training cross-entropy {mean_xent:.3} exceeds {limit} \
         at epoch {epoch}; the loss spiked instead of amplifying the bias, lower the learning rate \
         or T_bias"
    )]
    Collapse {
        epoch: usize,
        mean_xent: f64,
        limit: f64,
    },

    #[error("incompatible scheme/method combination: {0}")]
    Incompatible(String),

    #[error("weights are already rescaled")]
    AlreadyRescaled,

    #[error("{0} subset is empty")]
    EmptySubset(&'static str),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
