//! Error type shared by all modules.

use std::path::PathBuf;

use crate::data::BucketId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A row of an input file could not be parsed. `row` is 1-based.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: u64, msg: String },

    /// The input file's declared schema is inconsistent or unsupported.
    #[error("schema error: {0}")]
    Schema(String),

    /// The file ends before the declared payload does.
    #[error("truncated input: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    /// I/O failure while streaming; carries the byte offset reached.
    #[error("stream error at byte offset {offset}: {source}")]
    Stream {
        offset: u64,
        #[source]
        source: std::io::Error,
    },

    /// A serialized model or dataset blob is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid configuration or parameter value.
    #[error("config error: {0}")]
    Config(String),

    /// An operation was called with inputs outside its domain
    /// (wrong arity, empty summary, zero total weight, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Lookup of a bucket that was never written.
    #[error("unknown bucket {0}")]
    UnknownBucket(BucketId),

    /// The scratch store could not be written or read.
    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }
}
