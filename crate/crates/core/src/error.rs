use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count must be even, got {0}")]
    OddQubitCount(usize),

    #[error("qubit count {n} outside supported range 1..={max}")]
    UnsupportedQubitCount { n: usize, max: usize },

    #[error("qubit index {index} out of range for {n} qubits")]
    QubitOutOfRange { index: usize, n: usize },

    #[error("gate acts twice on qubit {0}")]
    RepeatedQubit(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("subset of {size} qubits is too large to simulate (max {max})")]
    SubsetTooLarge { size: usize, max: usize },

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("value {0} is not strictly positive")]
    NonPositiveValue(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
