//! Developer persona: rule-based metrics over the behavior and task stores,
//! grouped into four dimensions.

pub mod lang;
pub mod metrics;
pub mod snapshot;
pub mod validation;

pub use metrics::{
    metric_command_failure_rate, metric_productivity, CommandFilter, MetricInputs, MetricRegistry,
    MetricRule, PersonaConfig,
};
pub use snapshot::{load_persona, PersonaStore};
pub use validation::{compute_accuracy, parse_confirmations, ValidationRecord};

use crate::error::{Error, Result};
use crate::model::{LogLevelBehavior, TaskLevelBehavior, TimestampMs};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub const PERSONA_SCHEMA: &str = "vme-persona v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    /// Coding technical features: languages, libraries, domains.
    #[serde(rename = "CTF")]
    TechnicalFeatures,
    /// Programming efficiency: productivity, success rates, time to fix.
    #[serde(rename = "PDE")]
    Efficiency,
    /// Programming habits: comments, active hours, shortcuts.
    #[serde(rename = "PDN")]
    Habits,
    /// Technology adaptation: adoption, navigation load, learning.
    #[serde(rename = "TA")]
    Adaptation,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::TechnicalFeatures,
        Dimension::Efficiency,
        Dimension::Habits,
        Dimension::Adaptation,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Dimension::TechnicalFeatures => "CTF",
            Dimension::Efficiency => "PDE",
            Dimension::Habits => "PDN",
            Dimension::Adaptation => "TA",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Dimension::TechnicalFeatures => "Coding technical features",
            Dimension::Efficiency => "Programming efficiency",
            Dimension::Habits => "Programming habits",
            Dimension::Adaptation => "Technology adaptation",
        }
    }

    pub fn from_code(code: &str) -> Option<Dimension> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.code().eq_ignore_ascii_case(code))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MetricValue {
    Number(f64),
    /// A fraction in `[0, 1]`, shown as a percentage.
    Ratio(f64),
    Text(String),
    /// Shares summing to 1.
    Distribution(BTreeMap<String, f64>),
    /// Counts per bin.
    Histogram(Vec<u64>),
    /// Ranked `(item, count)` pairs.
    TopK(Vec<(String, u64)>),
}

pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        let s = format!("{x:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn percent(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Number(x) => f.write_str(&format_number(*x)),
            MetricValue::Ratio(x) => f.write_str(&percent(*x)),
            MetricValue::Text(s) => f.write_str(s),
            MetricValue::Distribution(shares) => {
                let mut items: Vec<_> = shares.iter().collect();
                items.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
                let parts: Vec<String> = items
                    .into_iter()
                    .map(|(k, v)| format!("{k} {}", percent(*v)))
                    .collect();
                f.write_str(&parts.join(", "))
            }
            MetricValue::Histogram(bins) => {
                let parts: Vec<String> = bins
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| **n > 0)
                    .map(|(i, n)| format!("{i:02}h {n}"))
                    .collect();
                f.write_str(&parts.join(", "))
            }
            MetricValue::TopK(items) => {
                let parts: Vec<String> = items.iter().map(|(k, n)| format!("{k} ({n})")).collect();
                f.write_str(&parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaMetric {
    pub key: String,
    pub dimension: Dimension,
    pub description: String,
    /// Word placed before the value when rendered ("cumulative").
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub qualifier: String,
    pub value: MetricValue,
    pub unit: String,
    pub sample_count: u64,
    pub converged: bool,
}

impl PersonaMetric {
    /// `description: [qualifier ]value[ unit]`.
    pub fn render(&self) -> String {
        let mut out = format!("{}: ", self.description);
        if !self.qualifier.is_empty() {
            out.push_str(&self.qualifier);
            out.push(' ');
        }
        out.push_str(&self.value.to_string());
        if !self.unit.is_empty() {
            out.push(' ');
            out.push_str(&self.unit);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub schema: String,
    /// Timestamp of the newest behavior the persona was computed from.
    pub computed_at: TimestampMs,
    /// Last tb_id included.
    pub source_high_water: u64,
    pub dimensions: BTreeMap<Dimension, Vec<PersonaMetric>>,
}

impl Persona {
    pub fn empty() -> Self {
        Persona {
            schema: PERSONA_SCHEMA.to_string(),
            computed_at: 0,
            source_high_water: 0,
            dimensions: Dimension::ALL
                .into_iter()
                .map(|d| (d, Vec::new()))
                .collect(),
        }
    }

    pub fn metrics(&self) -> impl Iterator<Item = &PersonaMetric> {
        self.dimensions.values().flatten()
    }

    pub fn metric(&self, key: &str) -> Option<&PersonaMetric> {
        self.metrics().find(|m| m.key == key)
    }

    /// `(key, description)` for every metric; what the router sees.
    pub fn schema_listing(&self) -> Vec<(String, String)> {
        self.metrics()
            .map(|m| (m.key.clone(), m.description.clone()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Human-readable report grouped by dimension.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (dim, metrics) in &self.dimensions {
            out.push_str(&format!("{} ({})\n", dim.title(), dim.code()));
            if metrics.is_empty() {
                out.push_str("  (no data yet)\n");
            }
            for m in metrics {
                let flag = if m.converged { "" } else { " [provisional]" };
                out.push_str(&format!("  {}{flag}\n", m.render()));
            }
        }
        out
    }
}

/// Full recomputation of the persona from store snapshots.
pub fn compute_persona(
    tbs: &[TaskLevelBehavior],
    lbs: &[LogLevelBehavior],
    registry: &MetricRegistry,
    config: &PersonaConfig,
) -> Result<Persona> {
    let known: BTreeSet<u64> = lbs.iter().map(|lb| lb.lb_id).collect();
    for tb in tbs {
        if let Some(missing) = tb.lbs.iter().find(|id| !known.contains(id)) {
            return Err(Error::Integrity(format!(
                "tb {} references lb {missing}, which is not in the store",
                tb.tb_id
            )));
        }
    }
    let inputs = MetricInputs::new(tbs, lbs, config);
    let mut persona = Persona::empty();
    for m in registry.evaluate(&inputs) {
        persona.dimensions.entry(m.dimension).or_default().push(m);
    }
    persona.computed_at = lbs.iter().map(|lb| lb.timestamp).max().unwrap_or(0);
    persona.source_high_water = tbs.iter().map(|tb| tb.tb_id).max().unwrap_or(0);
    Ok(persona)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stores_give_four_empty_dimensions() {
        let p = compute_persona(
            &[],
            &[],
            &MetricRegistry::with_builtins(),
            &PersonaConfig::default(),
        )
        .unwrap();
        assert_eq!(p.dimensions.len(), 4);
        assert!(p.dimensions.values().all(Vec::is_empty));
        let json = p.to_json().unwrap();
        assert!(json.contains("\"CTF\"") && json.contains("\"TA\""));
    }

    #[test]
    fn rendering() {
        let m = PersonaMetric {
            key: "language_loc.swift".into(),
            dimension: Dimension::TechnicalFeatures,
            description: "Proficiency in Swift".into(),
            qualifier: "cumulative".into(),
            value: MetricValue::Number(523.0),
            unit: "lines of code".into(),
            sample_count: 1,
            converged: false,
        };
        assert_eq!(
            m.render(),
            "Proficiency in Swift: cumulative 523 lines of code"
        );
        assert_eq!(MetricValue::Ratio(7.0 / 12.0).to_string(), "58%");
        assert_eq!(MetricValue::Number(0.82).to_string(), "0.82");
        assert_eq!(MetricValue::Number(55.0).to_string(), "55");
    }

    #[test]
    fn dangling_references_are_integrity_errors() {
        let tb = TaskLevelBehavior {
            tb_id: 1,
            delta_t: 0.0,
            task: String::new(),
            lbs: vec![9],
            start_ts: 0,
            end_ts: 0,
            key_objects: vec![],
            needs_retry: false,
        };
        let err = compute_persona(
            &[tb],
            &[],
            &MetricRegistry::with_builtins(),
            &PersonaConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }
}
