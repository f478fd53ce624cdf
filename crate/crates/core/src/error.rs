use thiserror::Error;

/// Errors surfaced by every layer of the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("register of {qubits} qubits exceeds the {max}-qubit limit")]
    RegisterTooLarge { qubits: usize, max: usize },

    #[error("gate is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("corrupted state: outcome probability {0:.3e} is negative")]
    NegativeProbability(f64),

    #[error("outcome probabilities sum to {0:.12}, not 1")]
    Unnormalized(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("denominator {0:.3e} is unresolved; more copies are needed")]
    UnresolvedDenominator(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("truth table: {0}")]
    TruthTable(String),

    #[error("record file line {line}: {msg}")]
    Record { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
