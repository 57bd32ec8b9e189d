//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate site: rows {first} and {second} are identical")]
    DuplicateSite { first: usize, second: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge: residual {residual:.6e} after {iterations} iterations (tolerance {tolerance:.6e})")]
    NoConvergence {
        residual: f64,
        iterations: usize,
        tolerance: f64,
    },

    #[error("rank optimization failed: {0}")]
    RankCertificate(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("site index {index} out of range for {len} sites")]
    SiteIndex { index: usize, len: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
