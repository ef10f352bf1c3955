use thiserror::Error;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("key generation failed: {0}")]
    KeyGen(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("scale mismatch: {0} vs {1}")]
    ScaleMismatch(i16, i16),
    #[error("invalid public element: {0}")]
    InvalidPublic(String),
    #[error("fixed-point overflow: {0}")]
    Overflow(String),
    #[error("decode error: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, CryptoError>;
