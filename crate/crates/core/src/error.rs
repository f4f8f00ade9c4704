use thiserror::Error;

/// Errors produced by the numerical routines and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("stability violation: {0}")]
    Stability(String),

    #[error("path explosion: {exploded} of {total} paths left the guard region")]
    Explosion { exploded: usize, total: usize },

    #[error("chain diverged: {0}")]
    Divergence(String),

    #[error("iterate {index}: {source}")]
    Iterate { index: usize, source: Box<Error> },

    #[error("masked node: {0}")]
    Masked(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed cache file: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the caller's configuration rather than by a failed
    /// numerical check.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) | Error::DimensionMismatch { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contains {v}")));
    }
    Ok(())
}

pub(crate) fn check_positive(what: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidParameter(format!("{what} must be positive and finite, got {v}")));
    }
    Ok(())
}
