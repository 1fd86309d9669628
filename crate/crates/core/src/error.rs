use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; the message names the offending key.
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical failure (non-positive-definite covariance, singular
    /// innovation, ...) with a conditioning diagnostic.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// API misuse (step after done, sampling an underfilled buffer, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// Environment reset could not find a valid configuration.
    #[error("reset error: {0}")]
    Reset(String),
    /// Training diverged; carries a diagnostic snapshot.
    #[error("training error: {0}")]
    Training(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
