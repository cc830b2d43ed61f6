use thiserror::Error;

/// Failure classes, each mapped to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Physics(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Physics(_) => 2,
        }
    }
}

impl From<cqed_cluster::Error> for CliError {
    fn from(e: cqed_cluster::Error) -> Self {
        use cqed_cluster::Error as E;
        match e {
            E::Empty(_)
            | E::InvalidSubsystem(_)
            | E::DimensionMismatch { .. }
            | E::IndexOutOfRange { .. }
            | E::InvalidParams(_)
            | E::UnknownOutcome(_)
            | E::InvalidGraph(_)
            | E::Snapshot(_) => CliError::Config(e.to_string()),
            E::NotNormalized(_)
            | E::NotHermitian(_)
            | E::InvalidBasis(_)
            | E::ImpossibleBranch { .. }
            | E::TruncationEdge(_)
            | E::Leakage { .. }
            | E::OutsideQubitSubspace(_)
            | E::NoConvergence(_) => CliError::Physics(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}
