use thiserror::Error;

/// Errors raised by the estimators, the neighbor engine and the model layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity error: need {needed} points, only {available} available")]
    Capacity { needed: usize, available: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    /// Zero nearest-neighbor distances make the log-ratio undefined.
    /// Indices are 0-based positions in the estimation sample.
    #[error("degenerate sample: zero neighbor distance at indices {indices:?}")]
    DegenerateSample { indices: Vec<usize> },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("model construction failed: {0}")]
    ModelConstruction(String),

    #[error("unsupported model pair: {0}")]
    UnsupportedPair(String),

    #[error("parse error at offset {offset}: {reason}")]
    Parse { offset: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
