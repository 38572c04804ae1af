//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("chart needs at least one state coordinate")]
    EmptyChart,

    #[error("chart labels must be pairwise distinct (duplicate `{0}`)")]
    DuplicateLabel(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),

    #[error(
        "matching system is inconsistent: least-squares residual {residual:.3e} \
         exceeds tolerance {tolerance:.3e}"
    )]
    MatchingInfeasible { residual: f64, tolerance: f64 },

    #[error(
        "Newton iteration did not converge at step {step}: residual {residual:.3e} \
         after {iterations} iterations"
    )]
    NewtonDivergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },

    #[error("trajectory too short: need at least {needed} samples, have {have}")]
    TrajectoryTooShort { needed: usize, have: usize },

    #[error("reference verification requires a trivial connection, found |Gamma0| = {0:.3e}")]
    NonTrivialConnection(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for input errors, 3 for numerical
    /// failures (check failures map to 1 at the call site).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NewtonDivergence { .. }
            | Error::NonFiniteState { .. }
            | Error::NonFinite(_)
            | Error::Singular(_)
            | Error::MatchingInfeasible { .. } => 3,
            _ => 2,
        }
    }
}
