use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite coordinate at row {row}")]
    NonFinite { row: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),
    #[error("training failure at epoch {epoch}: loss is not finite")]
    TrainingFailure { epoch: usize },
    #[error("sampling failure at stage {stage}, iteration {iteration}: {reason}")]
    SamplingFailure {
        stage: usize,
        iteration: usize,
        reason: String,
    },
    #[error("handedness undecidable: every dihedral quadruple is degenerate")]
    HandednessUndecidable,
}

pub type Result<T> = core::result::Result<T, Error>;
