//! `config.toml` plus `VME_*` environment overrides. API keys are never
//! read from the file; only the names of the variables that hold them.

use anyhow::Context;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use vme_core::llm::LlmConfig;
use vme_core::persona::PersonaConfig;
use vme_core::similarity::EmbeddingConfig;
use vme_core::EngineConfig;

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub engine: EngineConfig,
    pub llm: LlmConfig,
    pub embedding: EmbeddingConfig,
    pub persona: PersonaConfig,
    /// Symbol index file used to resolve edit positions to named scopes.
    pub symbols: Option<PathBuf>,
}

impl Config {
    /// Reads `path`, or `<data_dir>/config.toml` when present, or defaults.
    pub fn load(path: Option<&Path>, data_dir: &Path) -> anyhow::Result<Config> {
        let implicit = data_dir.join(CONFIG_FILE);
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if implicit.exists() => implicit,
            None => return Ok(Config::default()),
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Config> {
        Ok(toml::from_str(text)?)
    }

    /// Applies `VME_LLM_*` and `VME_EMBEDDING_*` overrides from `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(v) = var("VME_LLM_CLIENT") {
            self.llm.client_id = v;
        }
        if let Some(v) = var("VME_LLM_ENDPOINT") {
            self.llm.endpoint = Some(v);
        }
        if let Some(v) = var("VME_LLM_MODEL") {
            self.llm.model = Some(v);
        }
        if let Some(v) = var("VME_LLM_FIXTURES") {
            self.llm.fixtures = Some(v.into());
        }
        if let Some(v) = var("VME_EMBEDDING_PROVIDER") {
            self.embedding.provider_id = v;
        }
        if let Some(v) = var("VME_EMBEDDING_ENDPOINT") {
            self.embedding.endpoint = Some(v);
        }
        if let Some(v) = var("VME_EMBEDDING_MODEL") {
            self.embedding.model = Some(v);
        }
        if self.embedding.key_env.is_none() && var("VME_EMBEDDING_API_KEY").is_some() {
            self.embedding.key_env = Some("VME_EMBEDDING_API_KEY".into());
        }
    }
}
