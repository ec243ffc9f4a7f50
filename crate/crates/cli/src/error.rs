use covsel::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for configuration and validation errors, 3 for infeasibility, 4 for
    /// numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Write { .. } => 2,
            CliError::Core(e) => match e {
                Error::Invalid(_)
                | Error::DimensionMismatch { .. }
                | Error::IndexOutOfRange { .. }
                | Error::PreconditionViolated(_)
                | Error::Io(_) => 2,
                Error::EpsilonInfeasible { .. }
                | Error::RhoInfeasible { .. }
                | Error::RangeInfeasible { .. }
                | Error::Undetectable
                | Error::Unstabilizable
                | Error::AllInfeasible
                | Error::SdpInfeasible { .. }
                | Error::NoFeasibleCandidate
                | Error::NoSolution(_) => 3,
                Error::Numerical(_) | Error::NonConvergent { .. } | Error::Diverging { .. } => 4,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_classes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(Error::Invalid("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::AllInfeasible).exit_code(), 3);
        assert_eq!(CliError::from(Error::SdpInfeasible { rho: 2.0 }).exit_code(), 3);
        assert_eq!(CliError::from(Error::Numerical("x".into())).exit_code(), 4);
        assert_eq!(CliError::from(Error::Diverging { iterations: 3 }).exit_code(), 4);
    }
}
