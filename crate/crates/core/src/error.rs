use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty batch")]
    EmptyBatch,

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient samples: need at least {needed}, got {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("matrix is singular within tolerance")]
    SingularMatrix,

    #[error("values have zero spread")]
    DegenerateSpread,

    #[error("mean vector has zero norm")]
    DegenerateMean,

    #[error("unknown arm {0}")]
    UnknownArm(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training diverged at step {step}; lower learning_rate or beta")]
    Diverged { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Config(_) | Error::DimensionMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
