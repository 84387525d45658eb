use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArbError {
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("token {token}: post-trade reserve factor {factor} is not positive")]
    Domain { token: usize, factor: f64 },

    #[error("n = {n} outside supported range {min}..={max}")]
    OutOfRange { n: usize, min: usize, max: usize },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("io: {0}")]
    Io(String),
}

impl ArbError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ArbError::InvalidInput {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ArbError>;
