use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("no camera ray hit the mesh")]
    EmptyView,

    #[error("positive grasp translations have zero extent")]
    DegenerateExtent,

    #[error("training labels contain a single class ({0})")]
    DegenerateLabels(String),

    #[error("non-finite gradient for parameter `{param}`")]
    OptimizerError { param: String },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("missing upstream artifact from stage `{stage}`: {path}")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
