//! Error types shared across the simulator.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Rejection sampling could not place an action inside its inner-product
    /// window within the attempt budget.
    #[error("action {index}: rejection sampling exhausted {attempts} attempts (window infeasible)")]
    GenerationBudget { index: usize, attempts: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_delta:.3e})")]
    NotSymmetric { max_delta: f64 },

    /// A symmetric solve or log-determinant hit a non-positive-definite
    /// matrix; for sync state this means server post-processing was skipped.
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("reward mean {mean} outside [0, 1]")]
    RewardMeanOutOfRange { mean: f64 },

    #[error("device {device}: channel coefficient is zero (deep-fade singularity)")]
    DeepFadeSingularity { device: usize },

    #[error("empty action set")]
    EmptyActionSet,

    #[error("config error: {0}")]
    Config(String),

    #[error("round {round}, device {device}: {source}")]
    Context {
        round: usize,
        device: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attaches (round, device) context when propagating out of the trial loop.
    pub fn in_round(self, round: usize, device: usize) -> Self {
        Error::Context {
            round,
            device,
            source: Box::new(self),
        }
    }
}
