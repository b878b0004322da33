use thiserror::Error;

/// Errors raised by the discretization, functionals and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("coincident nodes {0} and {1}: kernel is singular")]
    CoincidentNodes(usize, usize),

    #[error("functional undefined: {0}")]
    Undefined(String),

    #[error("no admissible samples: {0}")]
    NoAdmissibleSamples(String),

    #[error("weight condition (W1) violated: weight is nonpositive on every node")]
    WeightNotPositive,

    #[error("admissible set empty: no probed function has positive primitive integral")]
    EmptyAdmissibleSet,

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
