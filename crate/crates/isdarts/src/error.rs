//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A spec, schedule, or config is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its contract (bad arguments, missing
    /// gradients, wrong call order).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data is out of the documented domain (labels, sample counts).
    #[error("input error: {0}")]
    Input(String),

    /// A measurement is undefined for the given input.
    #[error("measurement error: {0}")]
    Measurement(String),

    /// A byte-level file format did not parse.
    #[error("format error: {0}")]
    Format(String),

    /// A requested key (mask, parameter, record) is absent.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Two artifacts refer to different search spaces.
    #[error("fingerprint mismatch: {0}")]
    Fingerprint(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },

    /// An enumeration would exceed the configured cap.
    #[error("enumeration refused: {count} subnets exceed the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
