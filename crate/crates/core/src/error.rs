use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("item {item} outside catalog of size {catalog}")]
    CatalogBounds { item: usize, catalog: usize },

    #[error("embedding length {got} does not match latent dimensionality {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{count} malformed line(s) in {path}; first at line {first_line}: {reason}")]
    Parse {
        path: PathBuf,
        count: usize,
        first_line: usize,
        reason: String,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("user {user} cannot be sampled: {reason}")]
    Sampling { user: usize, reason: String },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("metric undefined: {0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
