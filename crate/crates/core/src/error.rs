use thiserror::Error;

/// Errors produced by the estimation and testing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("insufficient replicates: need at least {needed}, got {got}")]
    InsufficientReplicates { needed: usize, got: usize },

    #[error("zero-variance location: component {component}, location {location}")]
    ZeroVariance { component: usize, location: usize },

    #[error("degenerate spectrum: zero-variance data, all eigenvalues vanish")]
    DegenerateSpectrum,

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("covariance factorization failed: {0}")]
    Covariance(String),
}

impl Error {
    /// True for failures caused by the data or the numerics rather than by
    /// malformed arguments.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::ZeroVariance { .. }
                | Error::DegenerateSpectrum
                | Error::NotPsd { .. }
                | Error::Numeric(_)
                | Error::Covariance(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
