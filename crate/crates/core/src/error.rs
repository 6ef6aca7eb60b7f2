use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the verification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed dataset file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("non-finite value in {path} at data row {row}, column `{column}`")]
    NonFinite {
        path: PathBuf,
        row: usize,
        column: String,
    },

    #[error("samples {first} and {second} share (x, u) but disagree on y by {gap:e}")]
    ConflictingDuplicate {
        first: usize,
        second: usize,
        gap: f64,
    },

    #[error("data matrix is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
