//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the numerics, solver, and scenario layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An integrator stage produced a non-finite derivative.
    #[error("non-finite derivative in integration step")]
    NonFiniteDerivative,

    /// The horizon integration of the optimality system blew up.
    #[error("horizon integration diverged at tau = {tau:.6} (sample {sample})")]
    HorizonDiverged { tau: f64, sample: usize },

    /// The backward sweep blew up.
    #[error("backward sweep diverged at tau = {tau:.6} (node {node})")]
    SweepDiverged { tau: f64, node: usize },

    /// A matrix required to be symmetric positive definite was not.
    #[error("{name} is not symmetric positive definite")]
    NotPositiveDefinite { name: String },

    /// Mismatched vector/matrix dimensions at a module boundary.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration value failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A scenario file failed to parse or validate.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// The estimator failed mid-run; the wrapped error says why.
    #[error("estimator step failed at t = {t:.4}: {source}")]
    StepFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    /// Filesystem trouble, surfaced verbatim.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an error with the wall-clock time of the estimator step that hit it.
    pub fn at_step(self, t: f64) -> Self {
        Error::StepFailed {
            t,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
