//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, ImmError>;

/// Errors produced by model construction, data ingestion, training, and
/// merging.
#[derive(Debug, Error)]
pub enum ImmError {
    /// A network or parameter-vector shape does not match its spec.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Invalid configuration value (hyperparameter out of range, bad alphas).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Dataset-level problem (empty split, label out of range, bad file).
    #[error("data error: {0}")]
    Data(String),

    /// IDX file format violation.
    #[error("idx format error in {path}: {reason}")]
    IdxFormat { path: String, reason: String },

    /// Checkpoint container violation.
    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    /// A numeric invariant failed (non-finite values, degenerate input).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure for manifests and result bundles.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
