use thiserror::Error;

/// Errors raised by the sensitivity pipeline.
///
/// Variants that arise along a trajectory carry the step index so callers can
/// report where the computation broke down.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("trajectory diverged: non-finite state at step {step}")]
    Divergence { step: usize },

    #[error("degenerate basis at step {step}: R diagonal {value:e} collapsed")]
    DegenerateBasis { step: usize, value: f64 },

    #[error("Lyapunov exponent {exponent:.6} lies within ±{tol} of zero; unstable dimension is indeterminate")]
    IndeterminateDimension { exponent: f64, tol: f64 },

    #[error("all {trial} trial exponents are positive; raise the trial dimension")]
    TrialDimensionTooSmall { trial: usize },

    #[error("unstable and adjoint frames are tangent at step {step} (|det G| = {det:e})")]
    Tangency { step: usize, det: f64 },

    #[error("singular Jacobian at step {step}")]
    SingularJacobian { step: usize },

    #[error("perturbed point left the model domain near step {step}")]
    Domain { step: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{what} did not converge within {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
