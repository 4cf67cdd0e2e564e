use thiserror::Error;

pub type Result<T> = std::result::Result<T, DynError>;

#[derive(Debug, Error)]
pub enum DynError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("topology mismatch: {0}")]
    Topology(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] dgh_nn::NnError),
    #[error(transparent)]
    Core(#[from] dgh_core::CoreError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
