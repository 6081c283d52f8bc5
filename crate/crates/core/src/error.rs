//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition was violated by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("derivative degenerate at u = {u}: psi'(u) = {derivative:e}")]
    DegenerateDerivative { u: f64, derivative: f64 },

    /// The virtual valuation is not strictly increasing on the link domain.
    #[error("shape violation: {0}")]
    ShapeViolation(String),

    #[error("picard iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("invalid estimate: {0}")]
    InvalidEstimate(String),

    /// A market or experiment configuration failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// True for errors caused by invalid input or configuration rather than a
    /// failure at run time. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Precondition(_)
                | Error::Config(_)
                | Error::Format { .. }
                | Error::ShapeViolation(_)
        )
    }
}
