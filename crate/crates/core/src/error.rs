//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    Mismatch(String),
    #[error("field is not band-limited to K={0}")]
    NotBandLimited(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("CFL violation: dt={dt} exceeds limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
