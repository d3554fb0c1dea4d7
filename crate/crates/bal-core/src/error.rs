//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or invalid input shapes/values. Maps to exit code 2 in the CLI.
    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset ingestion problems (bad manifest, undecodable image, bad tensor file).
    #[error("data error: {0}")]
    Data(String),

    /// A selection asked for more examples than were scored. The caller decides
    /// whether to clamp and retry.
    #[error("selection of {requested} examples exceeds the {available} scored")]
    Selection { requested: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for errors caused by user-supplied configuration rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Data(_) | Error::Selection { .. })
    }
}
