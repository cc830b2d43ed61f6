use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid subsystem: {0}")]
    InvalidSubsystem(String),

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subsystem index {index} out of range for {count} subsystems")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("operator is not Hermitian (defect {0:e})")]
    NotHermitian(f64),

    #[error("invalid measurement basis: {0}")]
    InvalidBasis(String),

    #[error("outcome `{label}` has probability {probability:e}, below the impossible-branch threshold")]
    ImpossibleBranch { label: String, probability: f64 },

    #[error("unknown outcome label `{0}`")]
    UnknownOutcome(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("state has support on the truncation edge (population {0:e})")]
    TruncationEdge(f64),

    #[error("leakage {value:e} exceeds bound {bound:e} during {context}")]
    Leakage {
        context: String,
        value: f64,
        bound: f64,
    },

    #[error("state is not in the qubit subspace (leakage {0:e})")]
    OutsideQubitSubspace(f64),

    #[error("phase alignment did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
