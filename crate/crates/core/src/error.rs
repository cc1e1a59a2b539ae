use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("identifier `{0}` is not bound in the environment")]
    Unbound(String),

    #[error("identifier `{0}` does not occur in the expression")]
    UnknownVariable(String),

    #[error("expression is not scalar-valued (shape {0:?})")]
    NonScalar(Vec<usize>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular linear system (pivot {0:.3e} at column {1})")]
    Singular(f64, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("window of size {window} does not fit a series of length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("training aborted at step {step}: {reason}")]
    TrainingAborted { step: u64, reason: String },

    #[error("trajectory diverged at step {0} (norm {1:.3e})")]
    Diverged(usize, f64),
}

pub type Result<T> = std::result::Result<T, Error>;
