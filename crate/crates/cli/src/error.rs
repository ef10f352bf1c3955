use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Configuration contradictions exit with status 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Runtime failures exit with status 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<fedgbdt_core::CoreError> for CliError {
    fn from(e: fedgbdt_core::CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<fedgbdt_fed::FedError> for CliError {
    fn from(e: fedgbdt_fed::FedError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
