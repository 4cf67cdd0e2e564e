use dgh_core::CoreError;
use dgh_dynamics::DynError;
use dgh_eval::EvalError;
use dgh_nn::NnError;
use dgh_sim::SimError;
use dgh_splat::SplatError;
use serde_json::json;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// A runtime failure with a short machine-readable kind.
#[derive(Debug, Error)]
#[error("{kind}: {message}")]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind, "message": self.message } })
    }
}

fn core_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::Io(_) => "io",
        CoreError::Json(_) => "json",
        CoreError::Format { .. } => "format",
        CoreError::Validation(_) => "validation",
        CoreError::Shape(_) | CoreError::DegenerateSegment { .. } => "shape",
        CoreError::Empty(_) => "empty",
    }
}

fn nn_kind(e: &NnError) -> &'static str {
    match e {
        NnError::Core(c) => core_kind(c),
        NnError::Io(_) => "io",
        NnError::Json(_) => "json",
        NnError::Checkpoint(_) | NnError::UnknownParameter(_) => "checkpoint",
        NnError::NonFiniteGradient { .. } => "numeric",
        NnError::Shape(_) => "shape",
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        Self::new(core_kind(&e), e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        Self::new(nn_kind(&e), e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let kind = match &e {
            SimError::Core(c) => core_kind(c),
            SimError::Config(_) => "config",
            SimError::BlowUp { .. } => "simulation",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<DynError> for CliError {
    fn from(e: DynError) -> Self {
        let kind = match &e {
            DynError::Core(c) => core_kind(c),
            DynError::Nn(n) => nn_kind(n),
            DynError::Json(_) => "json",
            DynError::Config(_) => "config",
            DynError::Shape(_) | DynError::Topology(_) => "shape",
            DynError::Empty(_) => "empty",
            DynError::NonFinite { .. } => "numeric",
            DynError::Checkpoint(_) => "checkpoint",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SplatError> for CliError {
    fn from(e: SplatError) -> Self {
        let kind = match &e {
            SplatError::Core(c) => core_kind(c),
            SplatError::Nn(n) => nn_kind(n),
            SplatError::Json(_) => "json",
            SplatError::Config(_) => "config",
            SplatError::Shape(_) => "shape",
            SplatError::Empty(_) => "empty",
            SplatError::NonFinite { .. } => "numeric",
            SplatError::Checkpoint(_) => "checkpoint",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::Nn(n) => nn_kind(n),
            EvalError::Shape(_) => "shape",
            EvalError::Empty(_) => "empty",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e.to_string())
    }
}
