use thiserror::Error;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("wire error: {0}")]
    Wire(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("homomorphic overflow at round {round}, node {node}: {msg}")]
    HeOverflow { round: u64, node: u32, msg: String },
    #[error(transparent)]
    Core(#[from] fedgbdt_core::CoreError),
    #[error(transparent)]
    Crypto(#[from] fedgbdt_crypto::CryptoError),
}

impl From<std::io::Error> for FedError {
    fn from(e: std::io::Error) -> Self {
        FedError::Transport(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FedError>;
