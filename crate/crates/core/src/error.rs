use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("action space too large ({count} actions > cap {cap}); increase granularity")]
    ActionSpaceTooLarge { count: u128, cap: usize },

    #[error("dimension mismatch: expected {expected} devices, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("allocation {counts:?} is not a feasible action under budget {budget}")]
    InfeasibleAllocation { counts: Vec<u32>, budget: u32 },

    #[error("empty storage: total data size is zero")]
    EmptyStorage,

    #[error("data size out of range: {0}")]
    DataOutOfRange(String),

    #[error("symmetric regime inapplicable: {0}")]
    SymmetricRegime(String),

    #[error("asymmetric regime inapplicable: {0}")]
    AsymmetricRegime(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("history too short: need {need} past slots, have {have}")]
    HistoryTooShort { need: usize, have: usize },

    #[error("replay memory underfull: {have} transitions, minibatch needs {need}")]
    MemoryUnderfull { need: usize, have: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config hash mismatch: artifact was built for {found}, scenario is {expected}")]
    HashMismatch { expected: String, found: String },

    #[error("artifact format error: {0}")]
    Artifact(String),

    #[error("seed {seed}, slot {slot}: {source}")]
    Run {
        seed: u64,
        slot: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep point {axis}={value}: {source}")]
    SweepPoint {
        axis: String,
        value: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
