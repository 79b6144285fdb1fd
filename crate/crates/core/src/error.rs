use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown token `{token}` in turn {turn}")]
    UnknownToken { token: String, turn: usize },

    #[error("token `{0}` collides with a reserved vocabulary entry")]
    ReservedCollision(String),

    #[error("{file}: session `{session}`: {path}: {message}")]
    Schema {
        file: String,
        session: String,
        path: String,
        message: String,
    },

    #[error("ontology: {0}")]
    Ontology(String),

    #[error("invalid dialog: {0}")]
    InvalidDialog(String),

    #[error("no span for turn {turn} role {role}")]
    MissingSpan { turn: usize, role: String },

    #[error("sequence of length {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no unmasked positions to average over")]
    EmptyMask,

    #[error("position {position} out of range for sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("domain `{domain}` has {available} sessions, {requested} requested")]
    InsufficientSessions {
        domain: String,
        available: usize,
        requested: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at step {step} (nll={nll}, kl={kl})")]
    Divergence { step: usize, nll: f64, kl: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
