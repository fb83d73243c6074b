use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("vector is not on the probability simplex: {0}")]
    NotOnSimplex(String),

    #[error("{what} needs 2^{n} terms; refusing n > {limit}")]
    EnumerationTooLarge {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Idx(#[from] crate::ingest::IdxError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
