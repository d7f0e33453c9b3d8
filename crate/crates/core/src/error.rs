use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown node id `{id}`")]
    UnknownNode {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("{path}:{line}: duplicate node id `{id}`")]
    DuplicateNode {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("non-finite {term}{}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    NonFinite { term: String, epoch: Option<usize> },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by input data (files, graph contents) rather than
    /// configuration or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::UnknownNode { .. } | Error::DuplicateNode { .. } | Error::Io { .. }
        )
    }

    pub fn is_numeric_error(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
