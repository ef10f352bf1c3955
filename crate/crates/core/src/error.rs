use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
