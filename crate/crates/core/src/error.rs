//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A point falls outside the domain of a basis and clamping is disabled.
    #[error("point {point} outside domain [{lo}, {hi}]")]
    OutOfDomain { point: f64, lo: f64, hi: f64 },

    /// Matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A requested construction would exceed a hard size limit.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A design matrix is degenerate for the requested operation.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// Linear algebra failed (singularity, unexpected rank, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative fit did not converge within its iteration budget.
    #[error("no convergence after {iterations} iterations: {message}")]
    Convergence { iterations: usize, message: String },

    /// Data files or parsed inputs are inconsistent.
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
