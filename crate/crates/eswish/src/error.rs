//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up for the requested operation.
    #[error("shape mismatch in {op}: left is {lhs}, right is {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid before any compute starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// IDX file has the wrong magic number.
    #[error("wrong IDX magic in {path}: expected {expected:#010x}, got {actual:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        actual: u32,
    },

    /// IDX file ends before its declared payload.
    #[error("truncated IDX file {path}: expected {expected} bytes of payload, got {actual}")]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },

    /// Image and label files disagree on the example count.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// Training blew up (non-finite values) in the named tensor.
    #[error("training error: non-finite values in {0}")]
    Training(String),

    /// An API was called out of sequence (stale cache, non-deterministic loss, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Run records cannot be aggregated (misaligned epoch counts).
    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
