use thiserror::Error;

/// Errors raised by the simulator, the protocol drivers and the oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("register of dimension {requested} exceeds the maximum of {max}")]
    CapacityExceeded { requested: usize, max: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("index {index} out of range for subsystem of dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("gate `{name}` is not unitary (defect {defect:.3e})")]
    NonUnitaryGate { name: String, defect: f64 },

    #[error("degenerate state: total probability mass {0:.3e}")]
    DegenerateState(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("outcome spaces differ: {0}")]
    MismatchedOutcomeSpace(String),
}

pub type Result<T> = std::result::Result<T, Error>;
