use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("endpoint rejected credentials (HTTP {status})")]
    Auth { status: u16 },

    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("malformed endpoint response: {0}")]
    Malformed(String),

    #[error("invalid endpoint configuration: {0}")]
    Config(String),

    #[error("cache {path}: {message}")]
    Cache { path: PathBuf, message: String },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("batch aborted after an authentication failure")]
    Aborted,

    #[error(transparent)]
    Core(#[from] dcsft_core::Error),
}

impl SamplerError {
    /// 429, 5xx and transport failures are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            SamplerError::Http { status, .. } => *status == 429 || *status >= 500,
            SamplerError::Transport(_) => true,
            _ => false,
        }
    }
}
