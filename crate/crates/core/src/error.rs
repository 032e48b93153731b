use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad dimensions, out-of-range hyperparameters, unknown names.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in the wrong order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),

    #[error("invalid noise: {0}")]
    InvalidNoise(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI, grouped by failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::Empty(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Checkpoint(_) => 3,
            Error::NonFinite(_) | Error::InvalidNoise(_) => 4,
            Error::State(_) => 1,
        }
    }
}
