use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Malformed or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A fit did not converge. Carries the final weighted residuals.
    #[error("fit failed: {message}")]
    Fit { message: String, residuals: Vec<f64> },

    /// Master-equation integration failed a consistency check.
    #[error("integrator error: {0}")]
    Integrator(String),

    /// Relaxation did not reach the cat manifold.
    #[error("not converged: residual {residual:.3e}")]
    NotConverged { residual: f64 },

    /// Too many defects for the exhaustive oracle.
    #[error("size error: {0}")]
    Size(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by configuration or caller input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidInput(_) | Error::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
