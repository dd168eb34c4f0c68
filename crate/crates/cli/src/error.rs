use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario schema: {0}")]
    Schema(String),

    #[error("scenario refers to unknown {kind} `{name}`")]
    Unresolved { kind: &'static str, name: String },

    #[error("scenario has no `{0}` section")]
    MissingSection(&'static str),

    #[error(transparent)]
    Core(#[from] factum_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn unresolved(kind: &'static str, name: &str) -> Self {
        CliError::Unresolved {
            kind,
            name: name.to_string(),
        }
    }
}
