//! Language-model clients behind a common trait, registered by name.

mod scripted;

pub use scripted::ScriptedResponder;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

pub trait LlmClient: Send + Sync {
    fn client_id(&self) -> &str;
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String>;
}

pub const FIXTURES_HEADER: &str = "#vme-llm-fixtures v1";

/// Hex SHA-256 of the prompt pair; the lookup key for canned completions.
pub fn prompt_key(system_prompt: &str, user_prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(system_prompt.as_bytes());
    h.update([0u8]);
    h.update(user_prompt.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureRecord {
    key: String,
    completion: String,
}

/// Deterministic offline client: canned completions looked up by prompt
/// hash, falling back to a scripted responder for prompts not in the table.
#[derive(Debug, Clone, Default)]
pub struct MockLlmClient {
    table: BTreeMap<String, String>,
    strict: bool,
}

impl MockLlmClient {
    pub const ID: &'static str = "mock";

    pub fn new() -> Self {
        Self::default()
    }

    /// A mock that errors on prompts missing from its table instead of
    /// falling back to the scripted responder.
    pub fn strict() -> Self {
        MockLlmClient {
            strict: true,
            ..Self::default()
        }
    }

    pub fn with_response(mut self, system: &str, user: &str, completion: &str) -> Self {
        self.insert(system, user, completion);
        self
    }

    pub fn insert(&mut self, system: &str, user: &str, completion: &str) {
        self.table
            .insert(prompt_key(system, user), completion.to_string());
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn load_fixtures(&mut self, path: &Path) -> Result<()> {
        let file = fs::File::open(path)?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line != FIXTURES_HEADER {
                    return Err(Error::Version {
                        expected: FIXTURES_HEADER,
                        found: line,
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_str(&line)?;
            self.table.insert(rec.key, rec.completion);
        }
        Ok(())
    }
}

impl LlmClient for MockLlmClient {
    fn client_id(&self) -> &str {
        Self::ID
    }

    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String> {
        if let Some(hit) = self.table.get(&prompt_key(system_prompt, user_prompt)) {
            return Ok(hit.clone());
        }
        if self.strict {
            return Err(Error::Llm {
                client_id: Self::ID.into(),
                message: "prompt not in fixture table".into(),
            });
        }
        Ok(ScriptedResponder.respond(system_prompt, user_prompt))
    }
}

/// Wraps a live client and appends every exchange to a fixture file that
/// [`MockLlmClient::load_fixtures`] can replay.
pub struct RecordingClient {
    inner: Arc<dyn LlmClient>,
    out: Mutex<fs::File>,
    id: String,
}

impl RecordingClient {
    pub fn new(inner: Arc<dyn LlmClient>, path: &Path) -> Result<Self> {
        let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
        let mut out = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        if fresh {
            writeln!(out, "{FIXTURES_HEADER}")?;
        }
        Ok(RecordingClient {
            id: format!("recording:{}", inner.client_id()),
            inner,
            out: Mutex::new(out),
        })
    }
}

impl LlmClient for RecordingClient {
    fn client_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String> {
        let completion = self.inner.complete(system_prompt, user_prompt)?;
        let rec = FixtureRecord {
            key: prompt_key(system_prompt, user_prompt),
            completion: completion.clone(),
        };
        let mut out = self.out.lock().unwrap();
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        out.flush()?;
        Ok(completion)
    }
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct RemoteChatClient {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl RemoteChatClient {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>) -> Self {
        RemoteChatClient {
            id: format!("remote:{model}"),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Llm {
            client_id: self.id.clone(),
            message: message.into(),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl LlmClient for RemoteChatClient {
    fn client_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": system_prompt },
                { "role": "user", "content": user_prompt },
            ],
        });
        let mut request = ureq::post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| self.fail(e.to_string()))?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| self.fail(format!("bad response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| self.fail("response carries no choices"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub client_id: String,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub key_env: String,
    /// Fixture table replayed by the mock client.
    pub fixtures: Option<PathBuf>,
    /// When set, exchanges with the configured client are recorded here.
    pub record_to: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            client_id: MockLlmClient::ID.to_string(),
            endpoint: None,
            model: None,
            key_env: "VME_LLM_API_KEY".to_string(),
            fixtures: None,
            record_to: None,
        }
    }
}

type LlmFactory = Box<dyn Fn(&LlmConfig) -> Result<Arc<dyn LlmClient>> + Send + Sync>;

/// Name → constructor table for language-model clients.
pub struct LlmRegistry {
    factories: BTreeMap<String, LlmFactory>,
}

impl LlmRegistry {
    pub fn empty() -> Self {
        LlmRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// `mock` and `remote`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(MockLlmClient::ID, |cfg| {
            let mut mock = MockLlmClient::new();
            if let Some(path) = &cfg.fixtures {
                if path.exists() {
                    mock.load_fixtures(path)?;
                }
            }
            Ok(Arc::new(mock))
        });
        reg.register("remote", |cfg| {
            let endpoint = cfg
                .endpoint
                .as_deref()
                .ok_or_else(|| Error::Invalid("remote llm client needs an endpoint".into()))?;
            let model = cfg.model.as_deref().unwrap_or("gpt-4o-mini");
            let key = std::env::var(&cfg.key_env).ok();
            Ok(Arc::new(RemoteChatClient::new(endpoint, model, key)))
        });
        reg
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&LlmConfig) -> Result<Arc<dyn LlmClient>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn create(&self, cfg: &LlmConfig) -> Result<Arc<dyn LlmClient>> {
        let factory = self
            .factories
            .get(&cfg.client_id)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "llm client",
                name: cfg.client_id.clone(),
                available: self.names(),
            })?;
        let client = factory(cfg)?;
        match &cfg.record_to {
            Some(path) => Ok(Arc::new(RecordingClient::new(client, path)?)),
            None => Ok(client),
        }
    }
}
