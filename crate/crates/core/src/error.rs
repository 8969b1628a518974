use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} index {index} out of range (bound {bound})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("unsupported feature spec: {0}")]
    UnsupportedFeatures(String),

    #[error("invalid demonstration: {0}")]
    InvalidDemo(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("trust budget M = {m} must lie in (0, {d}]")]
    BudgetOutOfRange { m: f64, d: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("scripted expert failed: {0}")]
    ExpertFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
