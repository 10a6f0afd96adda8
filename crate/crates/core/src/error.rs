use thiserror::Error;

pub type Result<T, E = CutError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CutError {
    #[error("invalid width {width}: {reason}")]
    InvalidWidth { width: usize, reason: &'static str },

    #[error("gate {gate} references qubit {qubit} outside a {n_qubits}-qubit circuit")]
    QubitOutOfRange { gate: usize, qubit: usize, n_qubits: usize },

    #[error("malformed gate: {0}")]
    InvalidGate(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The exact simulator was handed a circuit containing measurements.
    #[error("circuit contains measurements; use shot sampling instead")]
    RequiresSampling,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-diagonal Pauli was evaluated against Z-basis counts.
    #[error("observable term {0} is not diagonal in the measured basis")]
    BasisMismatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no quasi-probability decomposition for gate {0}")]
    NoDecomposition(String),

    #[error("invalid cut location: {0}")]
    InvalidCut(String),

    #[error("partition of width {width} exceeds the limit of {q_max}")]
    WidthViolation { width: usize, q_max: usize },

    #[error("invalid cut plan: {0}")]
    InvalidPlan(String),

    #[error("no matched pairs to compare")]
    EmptyComparison,

    #[error("config error: {0}")]
    Config(String),

    #[error("{0} (line {1})")]
    Csv(String, u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
