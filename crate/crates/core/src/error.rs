//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty dataset (n must be >= 1)")]
    EmptyDataset,

    #[error("empty evaluation (n_test must be >= 1)")]
    EmptyEval,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },

    #[error("kernel mode requires a precomputed Gram matrix on the dataset")]
    MissingGram,

    #[error("stale decomposition state: coefficients are at step {have}, batch is for step {got}")]
    StaleState { have: u64, got: u64 },

    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),

    #[error("ill-conditioned decomposition basis (condition estimate {cond:.3e})")]
    IllConditionedBasis { cond: f64 },

    #[error("infinite privacy loss: sigma_b must be > 0")]
    InfinitePrivacyLoss,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    Format(String),
}
