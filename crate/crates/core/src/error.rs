use thiserror::Error;

/// Errors raised by the model, dynamics and diagnostics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("tridiagonal eigensolver did not converge for eigenvalue index {index} after {iterations} iterations")]
    NoConvergence { index: usize, iterations: usize },

    #[error("diagonalization failed at xi = {xi}: {source}")]
    AtGridPoint {
        xi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("phase-space point (Q, P) = ({q}, {p}) lies outside the disk Q^2 + P^2 <= 2")]
    OutsideDisk { q: f64, p: f64 },

    #[error("orbit left the phase-space disk at t = {t}")]
    DiskExit { t: f64 },

    #[error("operator is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("state has no classical image: {reason}")]
    NoClassicalImage { reason: String },

    #[error("energy window [{lo}, {hi}] contains no doublets")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("missing {0} parity sector")]
    MissingSector(&'static str),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("time grid is not uniform")]
    NonUniformGrid,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
