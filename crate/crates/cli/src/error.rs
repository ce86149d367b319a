use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        source: choicefit::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] choicefit::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        CliError::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn input(path: &Path, source: choicefit::Error) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            source,
        }
    }
}
