//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FcdError {
    /// Shape or contract violation in a numeric operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite value detected where finiteness is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Dataset ingestion or format problem.
    #[error("data error: {0}")]
    Data(String),

    /// Configuration parsing or validation problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FcdError>;

impl FcdError {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            FcdError::Config(_) => 1,
            FcdError::Data(_) | FcdError::Io(_) => 2,
            FcdError::Shape(_) | FcdError::Numeric(_) => 3,
        }
    }
}
