use std::path::Path;

use serde_json::json;
use thiserror::Error;

/// Failure classes of a command, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric abort: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable form written to `error.json` and stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<hmnn::Error> for CliError {
    fn from(err: hmnn::Error) -> Self {
        match err {
            hmnn::Error::NonFinite { .. } => CliError::Numeric(err.to_string()),
            hmnn::Error::Io(e) => CliError::Io(e.to_string()),
            hmnn::Error::InvalidParameter(_) => CliError::Config(err.to_string()),
            hmnn::Error::Shape(_) | hmnn::Error::Data(_) | hmnn::Error::Idx(_) => CliError::Data(err.to_string()),
        }
    }
}
