//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model specification violates a structural invariant.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A region graph violates a structural invariant (factor closure,
    /// subset edges, acyclicity).
    #[error("invalid region graph: {0}")]
    InvalidRegionGraph(String),

    /// A numeric operation hit a degenerate value (zero normalizer,
    /// division by zero with nonzero numerator, degenerate sampling
    /// distribution).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A dense table or enumeration would exceed the desk-scale guard.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// Invalid caller-supplied configuration (schedules, subsets, paths).
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
