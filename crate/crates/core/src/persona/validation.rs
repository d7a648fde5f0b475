//! Accuracy of each persona dimension from developer confirmations.

use super::{Dimension, Persona};
use crate::error::{Error, Result};
use crate::record_log::RecordLog;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const VALIDATION_LOG: &str = "validation.log";
pub const VALIDATION_HEADER: &str = "#vme-validation v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub dimension: Dimension,
    /// `(metric key, confirmed)`.
    pub confirmations: Vec<(String, bool)>,
}

impl ValidationRecord {
    pub fn correct(&self) -> usize {
        self.confirmations.iter().filter(|(_, ok)| *ok).count()
    }

    pub fn total(&self) -> usize {
        self.confirmations.len()
    }
}

/// Confirmed metrics over all confirmed-or-rejected metrics.
pub fn compute_accuracy(v: &ValidationRecord) -> Result<f64> {
    if v.total() == 0 {
        return Err(Error::Invalid(format!(
            "no confirmations for dimension {}",
            v.dimension
        )));
    }
    Ok(v.correct() as f64 / v.total() as f64)
}

/// Parses `key yes|no` lines (`#` starts a comment) and groups them by the
/// dimension each key belongs to in `persona`.
pub fn parse_confirmations(text: &str, persona: &Persona) -> Result<Vec<ValidationRecord>> {
    let mut grouped: BTreeMap<Dimension, Vec<(String, bool)>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(key), Some(answer), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Invalid(format!(
                "line {}: expected `<metric key> yes|no`",
                i + 1
            )));
        };
        let ok = match answer.to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" => true,
            "no" | "n" | "false" => false,
            other => {
                return Err(Error::Invalid(format!(
                    "line {}: answer {other:?} is not yes or no",
                    i + 1
                )))
            }
        };
        let metric = persona.metric(key).ok_or_else(|| Error::UnknownMetric {
            key: key.to_string(),
            valid: persona.metrics().map(|m| m.key.clone()).collect(),
        })?;
        grouped
            .entry(metric.dimension)
            .or_default()
            .push((key.to_string(), ok));
    }
    Ok(grouped
        .into_iter()
        .map(|(dimension, confirmations)| ValidationRecord {
            dimension,
            confirmations,
        })
        .collect())
}

#[derive(Serialize)]
struct ValidationEntry<'a> {
    persona_computed_at: i64,
    dimension: Dimension,
    correct: usize,
    total: usize,
    accuracy: f64,
    confirmations: &'a [(String, bool)],
}

/// Appends the records and their accuracies to `validation.log`.
pub fn record_validation(
    data_dir: &Path,
    persona: &Persona,
    records: &[ValidationRecord],
) -> Result<()> {
    let mut log = RecordLog::open(
        &data_dir.join(VALIDATION_LOG),
        VALIDATION_HEADER,
        |_| Ok(()),
    )?;
    for r in records {
        let entry = ValidationEntry {
            persona_computed_at: persona.computed_at,
            dimension: r.dimension,
            correct: r.correct(),
            total: r.total(),
            accuracy: compute_accuracy(r)?,
            confirmations: &r.confirmations,
        };
        log.append(&serde_json::to_string(&entry)?)?;
    }
    log.sync()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(flags: &[bool]) -> ValidationRecord {
        ValidationRecord {
            dimension: Dimension::Efficiency,
            confirmations: flags
                .iter()
                .enumerate()
                .map(|(i, ok)| (format!("m{i}"), *ok))
                .collect(),
        }
    }

    #[test]
    fn accuracy_examples() {
        let seven_of_ten: Vec<bool> = (0..10).map(|i| i < 7).collect();
        assert_eq!(compute_accuracy(&record(&seven_of_ten)).unwrap(), 0.7);
        assert_eq!(compute_accuracy(&record(&[true; 4])).unwrap(), 1.0);
        assert_eq!(compute_accuracy(&record(&[false; 4])).unwrap(), 0.0);
        assert!(compute_accuracy(&record(&[])).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_is_the_confirmed_fraction(flags in prop::collection::vec(any::<bool>(), 1..60)) {
            let yes = flags.iter().filter(|f| **f).count();
            let acc = compute_accuracy(&record(&flags)).unwrap();
            prop_assert_eq!(acc, yes as f64 / flags.len() as f64);
            prop_assert!((0.0..=1.0).contains(&acc));
        }
    }

    #[test]
    fn confirmation_files_group_by_dimension() {
        let mut p = Persona::empty();
        for (key, dim) in [
            ("time_to_fix", Dimension::Efficiency),
            ("active_hours", Dimension::Habits),
        ] {
            p.dimensions
                .get_mut(&dim)
                .unwrap()
                .push(crate::persona::PersonaMetric {
                    key: key.into(),
                    dimension: dim,
                    description: key.into(),
                    qualifier: String::new(),
                    value: crate::persona::MetricValue::Number(1.0),
                    unit: String::new(),
                    sample_count: 1,
                    converged: true,
                });
        }
        let recs = parse_confirmations("# review\ntime_to_fix yes\nactive_hours no # wrong\n", &p)
            .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(
            recs[0].confirmations,
            vec![("time_to_fix".to_string(), true)]
        );
        assert!(matches!(
            parse_confirmations("nope yes", &p),
            Err(Error::UnknownMetric { .. })
        ));
        assert!(parse_confirmations("time_to_fix maybe", &p).is_err());
    }
}
