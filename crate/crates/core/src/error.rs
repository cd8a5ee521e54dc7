use std::path::PathBuf;

use crate::checkpoint::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("backward called without a recorded forward pass")]
    NoForwardRecorded,

    #[error("non-finite gradient at flat index {index}; update rejected")]
    NonFiniteGradient { index: usize },

    #[error("integration produced a non-finite state at step {step}")]
    Integration { step: usize },

    /// Training diverged. Carries the parameters from the last epoch whose
    /// loss was finite.
    #[error("{stage} training hit a non-finite loss at step {step}")]
    Diverged {
        stage: &'static str,
        step: usize,
        last_good: Box<Vec<Checkpoint>>,
    },

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("checkpoint kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("missing prerequisite {stage}: {path} not found")]
    MissingPrerequisite { stage: String, path: PathBuf },

    #[error("config {path}:{line}: {message}")]
    Config { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 missing prerequisite, 3 invalid
    /// input, 4 artifact mismatch, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingPrerequisite { .. } => 2,
            Error::Config { .. } | Error::InvalidArgument(_) | Error::Dimension { .. } => 3,
            Error::KindMismatch { .. } | Error::Format(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension { context, expected, got }
    }
}
