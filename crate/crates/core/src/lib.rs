//! Developer behavior analytics: turns captured IDE and terminal events
//! into log-level behaviors, clusters them into summarized tasks, derives a
//! developer persona and injects it into repository Q&A prompts.

pub mod archive;
pub mod error;
pub mod ingest;
pub mod llm;
pub mod model;
pub mod persona;
pub mod pipeline;
pub mod prompts;
pub mod qa;
pub mod record_log;
pub mod similarity;
pub mod synth;
pub mod tasks;

pub use error::{Error, Result};
pub use pipeline::{Engine, EngineConfig, IngestSummary};
