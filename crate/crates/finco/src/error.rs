use thiserror::Error;

/// Errors surfaced by the propagation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum FincoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no valid samples available for reconstruction")]
    EmptyReconstruction,

    #[error("no Newton seed converged to a root")]
    NoRoots,

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FincoError>;
