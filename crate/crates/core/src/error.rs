use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("degenerate labels: need at least two distinct label values")]
    DegenerateLabels,

    #[error("class-empty split: one side of the split lacks a class")]
    ClassEmptySplit,

    #[error("class-empty stage: prefix of size {m} lacks a class")]
    ClassEmptyStage { m: usize },

    #[error("class-empty dataset: need at least one positive and one negative example")]
    ClassEmpty,

    #[error("dimension mismatch: model has {expected} coordinates, vector has dimension {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pair ({i}, {j}) has zero probability under the sampling distribution")]
    ZeroProbabilityPair { i: usize, j: usize },

    #[error("exact enumeration needs {pairs} pairs (cap {cap}); use the Monte-Carlo estimator")]
    EnumerationCap { pairs: usize, cap: usize },

    #[error("iterate diverged at stage {stage}, iteration {iteration}; try a smaller step size")]
    Diverged { stage: usize, iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
