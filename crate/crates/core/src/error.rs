use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single ensemble member that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberFailure {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid initial state: {0}")]
    InvalidState(String),

    #[error("norm drift {drift:.3e} exceeds tolerance at step {step}")]
    NormDrift { step: u64, drift: f64 },

    #[error("vector is not a Floquet eigenvector (residual {0:.3e})")]
    NotEigenvector(f64),

    #[error("tangent singularity at site {site} (|cos| = {cos_abs:.3e})")]
    TangentSingularity { site: usize, cos_abs: f64 },

    #[error("dense matrices are limited to N <= {limit}, got N = {n}")]
    DenseTooLarge { n: usize, limit: usize },

    #[error("{} of the ensemble members failed", .0.len())]
    EnsembleFailed(Vec<MemberFailure>),

    #[error("dataset is unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("fit did not converge: {0}")]
    NoConvergence(String),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("too few points for size N = {n}: {count} (need at least {min})")]
    TooFewPoints { n: u32, count: usize, min: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
