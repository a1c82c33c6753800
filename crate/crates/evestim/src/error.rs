//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions or otherwise unusable arguments.
    #[error("{0}")]
    InvalidArgument(String),

    /// A covariance-like matrix failed its symmetry or eigenvalue check,
    /// or could not be factorized even after diagonal jitter.
    #[error("{what} is not a valid (symmetric positive semidefinite) covariance")]
    NotCovariance { what: &'static str },

    /// A matrix that must be invertible for the requested operation is
    /// numerically singular.
    #[error("{what} is numerically singular")]
    Singular { what: &'static str },

    /// Riccati fixed-point iteration hit the iteration cap.
    #[error("Riccati iteration did not converge after {iterations} iterations (last relative change {residual:.3e})")]
    RiccatiDivergence { iterations: usize, residual: f64 },

    /// The rejection sampler could not collect enough samples: the trigger
    /// acceptance region is too tight for the predicted spread, which is the
    /// expected failure mode at very high event rates.
    #[error("rejection sampling starved: {accepted}/{needed} accepted after {batches} batches")]
    SamplingStarvation {
        accepted: usize,
        needed: usize,
        batches: usize,
    },

    /// Quadrature grid does not contain the posterior mass.
    #[error("quadrature grid too small: boundary density is {ratio:.3e} of the peak (limit {limit:.0e})")]
    GridTooSmall { ratio: f64, limit: f64 },

    /// A quantity has no defined value for the given inputs (for example a
    /// relative MSE with a zero reference, or a conditional average over an
    /// empty set).
    #[error("{0}")]
    Undefined(String),

    /// The self-check against the quadrature oracle found a discrepancy
    /// outside tolerance.
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    /// Wraps an error with the sweep coordinates it occurred at.
    #[error("at beta={beta}, alpha_z={alpha_z}: {source}")]
    AtScenarioPoint {
        beta: f64,
        alpha_z: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!("is_io_error guarantees an I/O kind"),
            }
        } else {
            Error::InvalidArgument(err.to_string())
        }
    }
}

impl Error {
    /// True if this error is (or wraps) sampling starvation.
    pub fn is_starvation(&self) -> bool {
        match self {
            Error::SamplingStarvation { .. } => true,
            Error::AtScenarioPoint { source, .. } => source.is_starvation(),
            _ => false,
        }
    }

    /// Attaches sweep coordinates to an error bubbling out of one scenario
    /// point.
    pub fn at_point(self, beta: f64, alpha_z: f64) -> Error {
        Error::AtScenarioPoint {
            beta,
            alpha_z,
            source: Box::new(self),
        }
    }
}
