use crate::model::ParseError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseError,
    },

    #[error("unsupported schema header {found:?} (expected {expected:?})")]
    Version {
        expected: &'static str,
        found: String,
    },

    #[error("event stream error: {0}")]
    Stream(String),

    #[error("id {got} conflicts with existing record (high-water mark {high_water})")]
    Conflict { got: u64, high_water: u64 },

    #[error("id gap: expected {expected}, got {got}")]
    IdGap { expected: u64, got: u64 },

    #[error("store integrity error: {0}")]
    Integrity(String),

    #[error("embedding provider {provider_id} failed: {message}")]
    Provider {
        provider_id: String,
        message: String,
    },

    #[error("llm client {client_id} failed: {message}")]
    Llm { client_id: String, message: String },

    #[error("path {0:?} escapes the workspace root")]
    Containment(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unknown {kind} {name:?}; registered: {}", available.join(", "))]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("unknown metric key {key:?}; valid keys: {}", valid.join(", "))]
    UnknownMetric { key: String, valid: Vec<String> },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of an external service (LLM or embedding endpoint).
    pub fn is_external(&self) -> bool {
        matches!(self, Error::Provider { .. } | Error::Llm { .. })
    }
}
