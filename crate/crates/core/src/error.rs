use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ExpcaError>;

#[derive(Debug, Error)]
pub enum ExpcaError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("study design: {0}")]
    Design(String),

    #[error("reference: {0}")]
    Reference(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ExpcaError {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        ExpcaError::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}
