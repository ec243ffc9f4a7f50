use thiserror::Error;

/// Failure modes shared across the crate.
///
/// Variants that correspond to a hypothesis of the bound theorem
/// (`EpsilonInfeasible`, `RhoInfeasible`, `Undetectable`, `NonConvergent`)
/// name that hypothesis so callers can report why a bound does not apply.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sensor index {index} out of range for a pool of {pool_size}")]
    IndexOutOfRange { index: usize, pool_size: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("recursion did not converge after {iterations} iterations (last step {residual:e})")]
    NonConvergent { iterations: usize, residual: f64 },

    #[error("recursion diverged at iteration {iterations}: the measurement pair is not detectable")]
    Diverging { iterations: usize },

    #[error("no positive steady-state solution: {0}")]
    NoSolution(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("epsilon = {epsilon} is not below 1; too few samples for rho = {rho}")]
    EpsilonInfeasible { epsilon: f64, rho: f64 },

    #[error("rho = {rho} is below the dominance constant {rho_min} of the sampling distribution")]
    RhoInfeasible { rho: f64, rho_min: f64 },

    #[error("no finite dominance constant: sensor {sensor} lies outside the range of E[Z]")]
    RangeInfeasible { sensor: usize },

    #[error("(A, E[Z]^1/2) is not detectable")]
    Undetectable,

    #[error("(A, Q^1/2) is not stabilizable")]
    Unstabilizable,

    #[error("every rho on the search grid was infeasible")]
    AllInfeasible,

    #[error("the sampling program is infeasible at rho = {rho}")]
    SdpInfeasible { rho: f64 },

    #[error("no candidate sensor admits a finite score")]
    NoFeasibleCandidate,

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(format!("malformed JSON: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
