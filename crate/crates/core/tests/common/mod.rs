#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use vme_core::ingest::SymbolIndex;
use vme_core::llm::{LlmClient, MockLlmClient};
use vme_core::model::EventReader;
use vme_core::similarity::HashedBagOfTokens;
use vme_core::{Engine, EngineConfig};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn open_engine(dir: &Path, client: Arc<dyn LlmClient>) -> Engine {
    Engine::open(
        dir,
        EngineConfig::default(),
        SymbolIndex::new(),
        Arc::new(HashedBagOfTokens::new()),
        client,
    )
    .unwrap()
}

/// Ingests a fixture event file into `dir` with the given client.
pub fn ingest_with(dir: &Path, name: &str, client: Arc<dyn LlmClient>) -> Engine {
    let mut engine = open_engine(dir, client);
    let reader = EventReader::new(BufReader::new(File::open(fixture(name)).unwrap()));
    engine.ingest(reader).unwrap();
    engine
}

pub fn ingest(dir: &Path, name: &str) -> Engine {
    ingest_with(dir, name, Arc::new(MockLlmClient::new()))
}
