use thiserror::Error;

/// Errors produced by the identification pipeline.
#[derive(Debug, Error)]
pub enum EarcError {
    #[error("dimension overflow: {requested} entries exceeds cap of {cap}")]
    DimensionOverflow { requested: u128, cap: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numerical failure: SVD did not converge on a {rows}x{cols} matrix")]
    NumericalFailure { rows: usize, cols: usize },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("group closure exceeded {max_order} elements; generators do not span a finite group")]
    NonFiniteGroup { max_order: usize },

    #[error("no feasible model: the equivariant coupling space is empty")]
    NoFeasibleModel,

    #[error(
        "design matrix needs {entries} entries (cap {cap}); reduce the embedding order or the training length"
    )]
    MemoryCap { entries: usize, cap: usize },

    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EarcError>;

impl EarcError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        EarcError::Shape(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        EarcError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
