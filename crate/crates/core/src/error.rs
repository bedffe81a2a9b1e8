use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate sample id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("unknown sample id `{0}`")]
    UnknownId(String),

    #[error("could not parse a bounding box from response")]
    BoxParse,

    #[error(
        "hard ratio {requested} is infeasible with {hard_available} hard samples; \
         maximum achievable ratio is {max_achievable:.6}"
    )]
    InfeasibleHardRatio {
        requested: f64,
        hard_available: usize,
        max_achievable: f64,
    },

    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
