//! Personalized repository Q&A: route the question to persona metrics,
//! retrieve their snippets, compose the prompt, ask the model.

pub mod compose;

pub use compose::{compose, PromptBundle, WorkspaceFile};

use crate::error::{Error, Result};
use crate::llm::LlmClient;
use crate::persona::{MetricRegistry, Persona};
use crate::prompts;
use crate::record_log::RecordLog;
use crate::similarity::{cosine, EmbeddingProvider};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const RETRIEVE_TOP_K: usize = 5;
/// Minimum embedding cosine between a requested key and a metric
/// description for a semantic match.
pub const SEMANTIC_THRESHOLD: f64 = 0.6;
pub const AUDIT_LOG: &str = "audit.log";
pub const AUDIT_HEADER: &str = "#vme-audit v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Personalized,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub text: String,
    pub mode: Mode,
}

impl Query {
    pub fn new(text: &str, mode: Mode) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Invalid("question is empty".into()));
        }
        Ok(Query {
            text: text.trim().to_string(),
            mode,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequiredMetrics {
    pub keys: Vec<String>,
    /// Keys the router named that are not in the catalog.
    pub dropped: Vec<String>,
    /// The router named nothing usable and the default set was applied.
    pub defaulted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSnippet {
    pub key: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaContext {
    pub snippets: Vec<PersonaSnippet>,
}

impl PersonaContext {
    pub fn keys(&self) -> Vec<String> {
        self.snippets.iter().map(|s| s.key.clone()).collect()
    }
}

/// Keys used when the router selects nothing: the language distribution
/// and every productivity metric the persona has.
pub fn default_keys(persona: &Persona) -> Vec<String> {
    let mut keys = vec!["language_distribution".to_string()];
    keys.extend(
        persona
            .metrics()
            .filter(|m| m.key.starts_with("productivity."))
            .map(|m| m.key.clone()),
    );
    keys
}

/// Parses a router completion into catalog keys, dropping unknown ones.
pub fn parse_route(
    completion: &str,
    persona: &Persona,
    registry: &MetricRegistry,
) -> RequiredMetrics {
    let mut out = RequiredMetrics::default();
    for raw in completion.lines() {
        let key = raw
            .trim()
            .trim_start_matches(['-', '*'])
            .trim()
            .trim_matches('`');
        if key.is_empty() || out.keys.iter().any(|k| k == key) {
            continue;
        }
        if registry.is_catalog_key(key) {
            out.keys.push(key.to_string());
        } else {
            log::warn!("router named unknown metric key {key:?}; dropped");
            out.dropped.push(key.to_string());
        }
    }
    if out.keys.is_empty() {
        out.keys = default_keys(persona);
        out.defaulted = true;
    }
    out
}

/// Asks the model which metrics the question needs. The model sees the
/// persona's keys and descriptions, never its values.
pub fn route(
    q: &Query,
    persona: &Persona,
    registry: &MetricRegistry,
    client: &dyn LlmClient,
) -> Result<RequiredMetrics> {
    let system = prompts::router_prompt(&persona.schema_listing());
    let completion = client.complete(&system, &q.text)?;
    Ok(parse_route(&completion, persona, registry))
}

fn key_text(key: &str) -> String {
    key.replace(['_', '.'], " ")
}

/// Exact key hits first, then metrics whose description is close to a
/// requested key that had no exact hit, at most [`RETRIEVE_TOP_K`] in all.
pub fn retrieve(
    m: &RequiredMetrics,
    persona: &Persona,
    provider: &dyn EmbeddingProvider,
) -> Result<PersonaContext> {
    let mut picked: Vec<String> = Vec::new();
    let mut unmatched = Vec::new();
    for key in &m.keys {
        if persona.metric(key).is_some() {
            if !picked.contains(key) {
                picked.push(key.clone());
            }
        } else {
            unmatched.push(key);
        }
    }
    if !unmatched.is_empty() && picked.len() < RETRIEVE_TOP_K {
        let mut scored: Vec<(f64, String)> = Vec::new();
        let described: Vec<(String, Vec<f32>)> = persona
            .metrics()
            .map(|metric| Ok((metric.key.clone(), provider.embed(&metric.description)?)))
            .collect::<Result<_>>()?;
        for key in unmatched {
            let q = provider.embed(&key_text(key))?;
            for (candidate, v) in &described {
                let score = cosine(&q, v);
                if score >= SEMANTIC_THRESHOLD {
                    scored.push((score, candidate.clone()));
                }
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        for (_, key) in scored {
            if picked.len() >= RETRIEVE_TOP_K {
                break;
            }
            if !picked.contains(&key) {
                picked.push(key);
            }
        }
    }
    picked.truncate(RETRIEVE_TOP_K);
    Ok(PersonaContext {
        snippets: picked
            .into_iter()
            .filter_map(|key| {
                let metric = persona.metric(&key)?;
                Some(PersonaSnippet {
                    text: metric.render(),
                    key,
                })
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub mode: Mode,
    pub provenance: Vec<String>,
    pub client_id: String,
}

/// One completion on the rendered prompt.
pub fn answer(bundle: &PromptBundle, client: &dyn LlmClient) -> Result<Answer> {
    let text = client.complete(bundle.system_prompt(), &bundle.render())?;
    Ok(Answer {
        text,
        mode: bundle.mode,
        provenance: bundle.provenance.clone(),
        client_id: client.client_id().to_string(),
    })
}

/// Runs the whole chain. Baseline mode never consults the router or the
/// persona.
pub fn ask(
    q: &Query,
    persona: Option<&Persona>,
    workspace: &[WorkspaceFile],
    registry: &MetricRegistry,
    provider: &dyn EmbeddingProvider,
    client: &dyn LlmClient,
) -> Result<(PromptBundle, Answer)> {
    let context = match q.mode {
        Mode::Baseline => PersonaContext::default(),
        Mode::Personalized => {
            let persona = persona.ok_or_else(|| {
                Error::Invalid("no persona snapshot; run `vme persona` first".into())
            })?;
            let required = route(q, persona, registry, client)?;
            retrieve(&required, persona, provider)?
        }
    };
    let bundle = compose(&q.text, q.mode, context, workspace);
    let reply = answer(&bundle, client)?;
    Ok((bundle, reply))
}

#[derive(Serialize)]
struct AuditEntry<'a> {
    timestamp: i64,
    query: &'a str,
    mode: Mode,
    provenance: &'a [String],
    client_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
}

/// Appends the answer's audit record; the rendered prompt is included when
/// `with_prompt` is set.
pub fn record_audit(
    data_dir: &Path,
    timestamp: i64,
    bundle: &PromptBundle,
    reply: &Answer,
    with_prompt: bool,
) -> Result<()> {
    let mut log = RecordLog::open(&data_dir.join(AUDIT_LOG), AUDIT_HEADER, |_| Ok(()))?;
    let entry = AuditEntry {
        timestamp,
        query: &bundle.query,
        mode: reply.mode,
        provenance: &reply.provenance,
        client_id: &reply.client_id,
        prompt: with_prompt.then(|| bundle.render()),
    };
    log.append(&serde_json::to_string(&entry)?)?;
    log.sync()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockLlmClient;
    use crate::persona::{Dimension, MetricValue, PersonaMetric};
    use crate::similarity::HashedBagOfTokens;

    fn persona() -> Persona {
        let mut p = Persona::empty();
        let mut add = |key: &str, dim: Dimension, desc: &str, value: MetricValue, unit: &str| {
            p.dimensions.get_mut(&dim).unwrap().push(PersonaMetric {
                key: key.into(),
                dimension: dim,
                description: desc.into(),
                qualifier: String::new(),
                value,
                unit: unit.into(),
                sample_count: 10,
                converged: true,
            });
        };
        add(
            "language_loc.swift",
            Dimension::TechnicalFeatures,
            "Proficiency in Swift",
            MetricValue::Number(523.0),
            "lines of code",
        );
        add(
            "productivity.python",
            Dimension::Efficiency,
            "Average Python productivity",
            MetricValue::Number(55.0),
            "LOC/hour",
        );
        add(
            "command_success_rate.run",
            Dimension::Efficiency,
            "Success rate of run commands",
            MetricValue::Ratio(0.42),
            "",
        );
        p.dimensions.get_mut(&Dimension::TechnicalFeatures).unwrap()[0].qualifier =
            "cumulative".into();
        p
    }

    #[test]
    fn unknown_router_keys_are_dropped_and_empty_defaults() {
        let p = persona();
        let reg = MetricRegistry::with_builtins();
        let r = parse_route("favorite_editor\ncommand_success_rate.run", &p, &reg);
        assert_eq!(r.keys, vec!["command_success_rate.run"]);
        assert_eq!(r.dropped, vec!["favorite_editor"]);
        let r = parse_route("", &p, &reg);
        assert!(r.defaulted);
        assert_eq!(r.keys, vec!["language_distribution", "productivity.python"]);
    }

    #[test]
    fn semantic_fallback_finds_descriptions() {
        let p = persona();
        let provider = HashedBagOfTokens::new();
        let m = RequiredMetrics {
            keys: vec!["swift proficiency".into()],
            ..Default::default()
        };
        let ctx = retrieve(&m, &p, &provider).unwrap();
        assert_eq!(
            ctx.snippets
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>(),
            vec!["Proficiency in Swift: cumulative 523 lines of code"]
        );
        let m = RequiredMetrics {
            keys: vec!["productivity.haskell".into()],
            ..Default::default()
        };
        assert!(retrieve(&m, &p, &provider).unwrap().snippets.is_empty());
    }

    #[test]
    fn modes_differ_only_in_the_persona_section() {
        let p = persona();
        let provider = HashedBagOfTokens::new();
        let client = MockLlmClient::new();
        let reg = MetricRegistry::with_builtins();
        let ws = vec![WorkspaceFile {
            path: "README.md".into(),
            text: "# App\nRun with `cargo run`.\n".into(),
        }];
        let q = Query::new("How do I run this App project?", Mode::Personalized).unwrap();
        let (personal, reply) = ask(&q, Some(&p), &ws, &reg, &provider, &client).unwrap();
        assert_eq!(personal.provenance, vec!["command_success_rate.run"]);
        assert!(reply.text.contains("Success rate of run commands: 42%"));

        let q = Query::new("How do I run this App project?", Mode::Baseline).unwrap();
        let (base, _) = ask(&q, None, &ws, &reg, &provider, &client).unwrap();
        assert!(base.provenance.is_empty());
        let (a, b) = (personal.render(), base.render());
        assert!(!b.contains(compose::SECTION_PERSONA));
        assert_eq!(a.replacen(&persona_section_of(&a), "", 1), b);
    }

    fn persona_section_of(rendered: &str) -> String {
        let start = rendered.find(compose::SECTION_PERSONA).unwrap();
        let end = rendered.find(compose::SECTION_WORKSPACE).unwrap();
        rendered[start..end].to_string()
    }
}
