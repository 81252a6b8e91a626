use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the enhancement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected length {expected}, got {got}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero-power {0} signal cannot be mixed at a target SNR")]
    ZeroPower(&'static str),

    #[error("model/pipeline mismatch in `{field}`: model has {model}, pipeline has {pipeline}")]
    ConfigMismatch {
        field: &'static str,
        model: String,
        pipeline: String,
    },

    #[error("unsupported format version: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
