use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid code distance {0}: must be odd and at least 3")]
    InvalidDistance(usize),
    #[error("lattice with {n} qubits exceeds the brute-force cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("odd node count {0} has no perfect matching")]
    OddNodeCount(usize),
    #[error("no perfect matching exists")]
    NoPerfectMatching,
    #[error("inconsistent edge union: face {face} has odd degree")]
    InconsistentUnion { face: usize },
    #[error("decoder contract violated: {0}")]
    ContractViolation(String),
    #[error("trial failed: {message}")]
    TrialFailure {
        message: String,
        dump: Box<crate::decoder::FailureDump>,
    },
    #[error("fit precondition failed: {0}")]
    FitPrecondition(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
