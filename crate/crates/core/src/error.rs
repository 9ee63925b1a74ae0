use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs of mismatched shape or out-of-range values.
    #[error("validation error: {0}")]
    Validation(String),

    /// A scene or experiment configuration that cannot be used.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("singularity: {0}")]
    Singularity(String),

    /// NaN or overflow detected inside an iteration.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An operation invoked on data in the wrong state.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("solver did not converge for transmissions {failed:?}")]
    SolverFailed { failed: Vec<usize> },

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
