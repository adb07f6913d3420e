//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    /// Latent net construction refused because the grid would be too large.
    #[error("latent net too large: estimated {estimated} points exceeds limit {limit}")]
    NetTooLarge { estimated: u128, limit: u64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn dimension_mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
