//! Embedding providers behind a common trait, registered by name.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

/// Turns text into a unit-norm vector of fixed dimension.
///
/// Implementations must be deterministic per `provider_id` and safe to call
/// from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>>;
}

/// Cosine of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(x: &[f32], y: &[f32]) -> f64 {
    let dot: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| f64::from(*a) * f64::from(*b))
        .sum();
    dot.clamp(-1.0, 1.0)
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Offline fallback: hashed bag-of-tokens term frequencies.
#[derive(Debug, Clone)]
pub struct HashedBagOfTokens {
    id: String,
    dimension: usize,
}

impl HashedBagOfTokens {
    pub const ID: &'static str = "hashed-bow";
    pub const DIMENSION: usize = 256;
    /// Hashed in place of any token when the text has none, so empty texts
    /// still embed to a unit vector.
    const EMPTY_TOKEN: &'static str = "\u{0}empty";

    pub fn new() -> Self {
        Self::with_dimension(Self::DIMENSION)
    }

    pub fn with_dimension(dimension: usize) -> Self {
        HashedBagOfTokens {
            id: if dimension == Self::DIMENSION {
                Self::ID.to_string()
            } else {
                format!("{}-{dimension}", Self::ID)
            },
            dimension: dimension.max(1),
        }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }
}

impl Default for HashedBagOfTokens {
    fn default() -> Self {
        Self::new()
    }
}

impl EmbeddingProvider for HashedBagOfTokens {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = vec![0f64; self.dimension];
        let mut any = false;
        for token in tokenize(text) {
            v[self.bucket(&token)] += 1.0;
            any = true;
        }
        if !any {
            v[self.bucket(Self::EMPTY_TOKEN)] = 1.0;
        }
        normalize(&mut v);
        Ok(v.into_iter().map(|x| x as f32).collect())
    }
}

/// Provider talking to an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedding {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dimension: Mutex<Option<usize>>,
}

impl RemoteEmbedding {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>) -> Self {
        RemoteEmbedding {
            id: format!("remote:{model}"),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            dimension: Mutex::new(None),
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Provider {
            provider_id: self.id.clone(),
            message: message.into(),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for RemoteEmbedding {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension.lock().unwrap().unwrap_or(0)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut request = ureq::post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| self.fail(e.to_string()))?;
        let parsed: EmbeddingResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| self.fail(format!("bad response: {e}")))?;
        let mut v = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| self.fail("response carries no embedding"))?
            .embedding;
        if !normalize(&mut v) {
            return Err(self.fail("zero or non-finite embedding"));
        }
        let mut dim = self.dimension.lock().unwrap();
        match *dim {
            Some(d) if d != v.len() => {
                return Err(self.fail(format!("dimension changed from {d} to {}", v.len())))
            }
            _ => *dim = Some(v.len()),
        }
        Ok(v.into_iter().map(|x| x as f32).collect())
    }
}

/// Memoizes another provider's vectors by text.
pub struct CachedProvider {
    inner: Arc<dyn EmbeddingProvider>,
    cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl CachedProvider {
    pub fn new(inner: Arc<dyn EmbeddingProvider>) -> Self {
        CachedProvider {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl EmbeddingProvider for CachedProvider {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        if let Some(v) = self.cache.lock().unwrap().get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.cache
            .lock()
            .unwrap()
            .insert(text.to_string(), v.clone());
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider_id: String,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub key_env: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider_id: HashedBagOfTokens::ID.to_string(),
            endpoint: None,
            model: None,
            key_env: None,
        }
    }
}

type EmbeddingFactory =
    Box<dyn Fn(&EmbeddingConfig) -> Result<Arc<dyn EmbeddingProvider>> + Send + Sync>;

/// Name → constructor table for embedding providers.
pub struct EmbeddingRegistry {
    factories: BTreeMap<String, EmbeddingFactory>,
}

impl EmbeddingRegistry {
    pub fn empty() -> Self {
        EmbeddingRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// `hashed-bow` and `remote`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(HashedBagOfTokens::ID, |_| {
            Ok(Arc::new(HashedBagOfTokens::new()))
        });
        reg.register("remote", |cfg| {
            let endpoint = cfg.endpoint.as_deref().ok_or_else(|| {
                Error::Invalid("remote embedding provider needs an endpoint".into())
            })?;
            let model = cfg.model.as_deref().unwrap_or("all-MiniLM-L6-v2");
            let key = cfg.key_env.as_deref().and_then(|k| std::env::var(k).ok());
            let remote: Arc<dyn EmbeddingProvider> =
                Arc::new(RemoteEmbedding::new(endpoint, model, key));
            Ok(Arc::new(CachedProvider::new(remote)))
        });
        reg
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&EmbeddingConfig) -> Result<Arc<dyn EmbeddingProvider>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn create(&self, cfg: &EmbeddingConfig) -> Result<Arc<dyn EmbeddingProvider>> {
        let factory =
            self.factories
                .get(&cfg.provider_id)
                .ok_or_else(|| Error::UnknownStrategy {
                    kind: "embedding provider",
                    name: cfg.provider_id.clone(),
                    available: self.names(),
                })?;
        factory(cfg)
    }
}
