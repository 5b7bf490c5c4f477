use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LcvaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LcvaError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("structural mismatch: {0}")]
    StructuralMismatch(String),

    #[error("dataset validation failed: {0}")]
    Validation(String),

    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("incompatible variant: {0}")]
    IncompatibleVariant(String),

    #[error("non-finite log-likelihood in chain {chain} at sweep {sweep}")]
    NonFiniteLikelihood { chain: usize, sweep: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("resampling failed: {0}")]
    Resample(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
