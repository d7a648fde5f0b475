//! The metric catalog. Each rule turns the store snapshots into zero or
//! more metrics of one dimension; rules are registered by name.

use super::lang::{language_by_id, language_of, Language};
use super::{Dimension, MetricValue, PersonaMetric};
use crate::model::{
    ActionVerb, CommandDomain, CommandInfo, LogLevelBehavior, TaskLevelBehavior, TimestampMs,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

const HOUR_MS: f64 = 3_600_000.0;
const DAY_MS: i64 = 86_400_000;
const WEEK_MS: f64 = 7.0 * DAY_MS as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonaConfig {
    /// Idle gap that ends a working session.
    pub session_gap_ms: i64,
    /// Width of the buckets that make up active editing time.
    pub bucket_ms: i64,
    pub top_k: usize,
    /// Adoption rate (per week) that earns the full adoption share of the
    /// learning score.
    pub learning_adoption_ceiling: f64,
    /// Daily failure-rate drop that earns the full improvement share.
    pub learning_slope_ceiling: f64,
    pub learning_adoption_weight: f64,
    /// Minimum sample count per metric (by key or key family) before the
    /// metric is marked converged.
    pub min_samples: BTreeMap<String, u64>,
}

impl Default for PersonaConfig {
    fn default() -> Self {
        let min_samples = [
            ("language_distribution", 50),
            ("language_loc", 20),
            ("top_libraries", 5),
            ("tech_stack_domains", 5),
            ("productivity", 60),
            ("command_success_rate", 5),
            ("terminal_failure_rate", 10),
            ("time_to_fix", 3),
            ("tb_completion_ratio", 5),
            ("comment_density", 200),
            ("active_hours", 28),
            ("shortcut_usage", 20),
            ("adoption_rate", 14),
            ("unfamiliar_repo_navigation_load", 3),
            ("revisit_cyclicality", 50),
            ("learning_score", 7),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        PersonaConfig {
            session_gap_ms: 30 * 60 * 1000,
            bucket_ms: 5 * 60 * 1000,
            top_k: 10,
            learning_adoption_ceiling: 3.0,
            learning_slope_ceiling: 0.05,
            learning_adoption_weight: 0.4,
            min_samples,
        }
    }
}

impl PersonaConfig {
    fn min_samples_for(&self, key: &str) -> u64 {
        let family = key.split('.').next().unwrap_or(key);
        self.min_samples
            .get(key)
            .or_else(|| self.min_samples.get(family))
            .copied()
            .unwrap_or(1)
    }
}

/// Store snapshots plus derived views shared by the rules.
pub struct MetricInputs<'a> {
    pub tbs: &'a [TaskLevelBehavior],
    /// Behaviors in time order.
    pub lbs: Vec<&'a LogLevelBehavior>,
    pub by_id: HashMap<u64, &'a LogLevelBehavior>,
    /// Index ranges of `lbs`, one per working session.
    pub sessions: Vec<std::ops::Range<usize>>,
    pub config: &'a PersonaConfig,
}

impl<'a> MetricInputs<'a> {
    pub fn new(
        tbs: &'a [TaskLevelBehavior],
        lbs: &'a [LogLevelBehavior],
        config: &'a PersonaConfig,
    ) -> Self {
        let mut sorted: Vec<&LogLevelBehavior> = lbs.iter().collect();
        sorted.sort_by_key(|lb| (lb.timestamp, lb.lb_id));
        let mut sessions = Vec::new();
        let mut start = 0;
        for i in 1..sorted.len() {
            if sorted[i].timestamp - sorted[i - 1].timestamp >= config.session_gap_ms {
                sessions.push(start..i);
                start = i;
            }
        }
        if !sorted.is_empty() {
            sessions.push(start..sorted.len());
        }
        MetricInputs {
            tbs,
            by_id: lbs.iter().map(|lb| (lb.lb_id, lb)).collect(),
            lbs: sorted,
            sessions,
            config,
        }
    }

    fn metric(
        &self,
        key: impl Into<String>,
        dimension: Dimension,
        description: impl Into<String>,
        value: MetricValue,
        unit: &str,
        sample_count: u64,
    ) -> PersonaMetric {
        let key = key.into();
        PersonaMetric {
            converged: sample_count >= self.config.min_samples_for(&key),
            key,
            dimension,
            description: description.into(),
            qualifier: String::new(),
            value,
            unit: unit.to_string(),
            sample_count,
        }
    }

    fn edits(&self) -> impl Iterator<Item = (&'a LogLevelBehavior, &'static Language)> + '_ {
        self.lbs
            .iter()
            .filter(|lb| lb.action.verb.is_edit())
            .filter_map(|lb| language_of(&lb.object.path).map(|l| (*lb, l)))
    }

    fn commands(&self) -> impl Iterator<Item = (&'a LogLevelBehavior, &'a CommandInfo)> + '_ {
        self.lbs
            .iter()
            .filter_map(|lb| lb.context.command.as_ref().map(|c| (*lb, c)))
    }

    /// First time each language and each library shows up in added code.
    fn first_appearances(&self) -> BTreeMap<String, TimestampMs> {
        let mut first: BTreeMap<String, TimestampMs> = BTreeMap::new();
        for (lb, lang) in self.edits() {
            first
                .entry(format!("lang:{}", lang.id))
                .or_insert(lb.timestamp);
            if let Some(diff) = &lb.context.diff {
                for lib in lang.imports(&diff.added_text) {
                    first.entry(format!("lib:{lib}")).or_insert(lb.timestamp);
                }
            }
        }
        first
    }

    /// `(adoptions per week, span in whole days)`.
    fn adoption(&self) -> Option<(f64, u64)> {
        let start = self.lbs.first()?.timestamp;
        let end = self.lbs.last()?.timestamp;
        let events = self
            .first_appearances()
            .values()
            .filter(|ts| **ts >= start + DAY_MS)
            .count();
        let span = (end - start).max(DAY_MS) as f64;
        Some((
            events as f64 * WEEK_MS / span,
            ((end - start) / DAY_MS) as u64,
        ))
    }
}

/// How a rule's metric keys look, used to validate requested keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyPattern {
    Exact(&'static str),
    /// `prefix.<suffix>` with a non-empty suffix.
    Family(&'static str),
}

impl KeyPattern {
    pub fn matches(&self, key: &str) -> bool {
        match self {
            KeyPattern::Exact(k) => key == *k,
            KeyPattern::Family(prefix) => key
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .is_some_and(|suffix| !suffix.is_empty()),
        }
    }
}

pub trait MetricRule: Send + Sync {
    fn name(&self) -> &'static str;
    fn dimension(&self) -> Dimension;
    fn key_pattern(&self) -> KeyPattern;
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric>;
}

pub struct MetricRegistry {
    rules: Vec<Box<dyn MetricRule>>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        MetricRegistry { rules: Vec::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(LanguageDistribution));
        reg.register(Box::new(LanguageLoc));
        reg.register(Box::new(TopLibraries));
        reg.register(Box::new(TechStackDomains));
        reg.register(Box::new(Productivity));
        reg.register(Box::new(CommandSuccessRate));
        reg.register(Box::new(TerminalFailureRate));
        reg.register(Box::new(TimeToFix));
        reg.register(Box::new(TbCompletionRatio));
        reg.register(Box::new(CommentDensity));
        reg.register(Box::new(ActiveHours));
        reg.register(Box::new(ShortcutUsage));
        reg.register(Box::new(AdoptionRate));
        reg.register(Box::new(NavigationLoad));
        reg.register(Box::new(RevisitCyclicality));
        reg.register(Box::new(LearningScore));
        reg
    }

    /// Adds a rule, replacing any rule of the same name in place.
    pub fn register(&mut self, rule: Box<dyn MetricRule>) {
        match self.rules.iter().position(|r| r.name() == rule.name()) {
            Some(i) => self.rules[i] = rule,
            None => self.rules.push(rule),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.rules.iter().map(|r| r.name()).collect()
    }

    pub fn key_patterns(&self) -> Vec<KeyPattern> {
        self.rules.iter().map(|r| r.key_pattern()).collect()
    }

    pub fn is_catalog_key(&self, key: &str) -> bool {
        self.rules.iter().any(|r| r.key_pattern().matches(key))
    }

    /// Printable form of every key pattern.
    pub fn catalog_keys(&self) -> Vec<String> {
        self.rules
            .iter()
            .map(|r| match r.key_pattern() {
                KeyPattern::Exact(k) => k.to_string(),
                KeyPattern::Family(p) => format!("{p}.<name>"),
            })
            .collect()
    }

    pub fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        self.rules
            .iter()
            .flat_map(|r| {
                let mut out = r.evaluate(inputs);
                for m in &mut out {
                    m.dimension = r.dimension();
                }
                out
            })
            .collect()
    }
}

fn top_k(counts: BTreeMap<String, u64>, k: usize) -> Vec<(String, u64)> {
    let mut items: Vec<(String, u64)> = counts.into_iter().collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.truncate(k);
    items
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 0 {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Least-squares slope of `y` over `x`; zero with fewer than two points.
fn slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

/// Added lines per hour of active editing in one language, where active
/// time is the number of distinct buckets holding an edit in that
/// language. `None` when there is no such edit.
pub fn productivity(
    lbs: &[&LogLevelBehavior],
    language: &str,
    bucket_ms: i64,
) -> Option<(f64, u64)> {
    let mut buckets = BTreeSet::new();
    let mut added = 0u64;
    for lb in lbs.iter().filter(|lb| lb.action.verb.is_edit()) {
        if language_of(&lb.object.path).is_none_or(|l| l.id != language) {
            continue;
        }
        buckets.insert(lb.timestamp.div_euclid(bucket_ms));
        added += lb
            .context
            .diff
            .as_ref()
            .map_or(0, |d| u64::from(d.added_lines));
    }
    if buckets.is_empty() {
        return None;
    }
    let hours = buckets.len() as f64 * bucket_ms as f64 / HOUR_MS;
    Some((added as f64 / hours, buckets.len() as u64))
}

/// LOC/hour for a language with five-minute buckets.
pub fn metric_productivity(lbs: &[LogLevelBehavior], language: &str) -> Option<f64> {
    let refs: Vec<&LogLevelBehavior> = lbs.iter().collect();
    productivity(&refs, language, PersonaConfig::default().bucket_ms).map(|p| p.0)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandFilter {
    pub domain: Option<CommandDomain>,
    /// Matches command lines starting with this text (after trimming).
    pub prefix: Option<String>,
}

impl CommandFilter {
    pub fn matches(&self, cmd: &CommandInfo) -> bool {
        self.domain.is_none_or(|d| d == cmd.domain)
            && self
                .prefix
                .as_deref()
                .is_none_or(|p| cmd.command_line.trim_start().starts_with(p))
    }
}

/// Failures over matching commands. Commands without a reported exit
/// status count as failures. `None` when nothing matches.
pub fn metric_command_failure_rate(
    lbs: &[LogLevelBehavior],
    filter: &CommandFilter,
) -> Option<f64> {
    let (mut total, mut failed) = (0u64, 0u64);
    for cmd in lbs.iter().filter_map(|lb| lb.context.command.as_ref()) {
        if filter.matches(cmd) {
            total += 1;
            failed += u64::from(!cmd.success);
        }
    }
    (total > 0).then(|| failed as f64 / total as f64)
}

struct LanguageDistribution;

impl MetricRule for LanguageDistribution {
    fn name(&self) -> &'static str {
        "language_distribution"
    }
    fn dimension(&self) -> Dimension {
        Dimension::TechnicalFeatures
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("language_distribution")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut lines: BTreeMap<String, u64> = BTreeMap::new();
        let mut samples = 0;
        for (lb, lang) in inputs.edits() {
            samples += 1;
            let added = lb.context.diff.as_ref().map_or(0, |d| d.added_lines);
            *lines.entry(lang.id.to_string()).or_default() += u64::from(added);
        }
        let total: u64 = lines.values().sum();
        if total == 0 {
            return Vec::new();
        }
        let shares = lines
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .map(|(k, n)| (k, n as f64 / total as f64))
            .collect();
        vec![inputs.metric(
            "language_distribution",
            self.dimension(),
            "Languages written (share of added lines)",
            MetricValue::Distribution(shares),
            "",
            samples,
        )]
    }
}

struct LanguageLoc;

impl MetricRule for LanguageLoc {
    fn name(&self) -> &'static str {
        "language_loc"
    }
    fn dimension(&self) -> Dimension {
        Dimension::TechnicalFeatures
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Family("language_loc")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut per_lang: BTreeMap<&'static str, (u64, u64)> = BTreeMap::new();
        for (lb, lang) in inputs.edits() {
            let e = per_lang.entry(lang.id).or_default();
            e.0 += lb
                .context
                .diff
                .as_ref()
                .map_or(0, |d| u64::from(d.added_lines));
            e.1 += 1;
        }
        per_lang
            .into_iter()
            .filter(|(_, (loc, _))| *loc > 0)
            .map(|(id, (loc, samples))| {
                let display = language_by_id(id).map_or(id, |l| l.display);
                let mut m = inputs.metric(
                    format!("language_loc.{id}"),
                    self.dimension(),
                    format!("Proficiency in {display}"),
                    MetricValue::Number(loc as f64),
                    "lines of code",
                    samples,
                );
                m.qualifier = "cumulative".into();
                m
            })
            .collect()
    }
}

struct TopLibraries;

impl MetricRule for TopLibraries {
    fn name(&self) -> &'static str {
        "top_libraries"
    }
    fn dimension(&self) -> Dimension {
        Dimension::TechnicalFeatures
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("top_libraries")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for (lb, lang) in inputs.edits() {
            if let Some(diff) = &lb.context.diff {
                for lib in lang.imports(&diff.added_text) {
                    *counts.entry(lib).or_default() += 1;
                }
            }
        }
        let samples: u64 = counts.values().sum();
        if samples == 0 {
            return Vec::new();
        }
        vec![inputs.metric(
            "top_libraries",
            self.dimension(),
            "Most imported libraries",
            MetricValue::TopK(top_k(counts, inputs.config.top_k)),
            "imports",
            samples,
        )]
    }
}

/// Task keywords and the domain tag they indicate.
const DOMAIN_KEYWORDS: &[(&[&str], &str)] = &[
    (
        &[
            "api", "endpoint", "route", "server", "handler", "http", "rest",
        ],
        "web backend",
    ),
    (
        &[
            "ui",
            "view",
            "component",
            "layout",
            "css",
            "page",
            "screen",
            "app",
        ],
        "frontend/app",
    ),
    (&["test", "tests", "testing"], "testing"),
    (
        &[
            "config",
            "configured",
            "environment",
            "docker",
            "deployment",
            "ci",
        ],
        "devops",
    ),
    (
        &["database", "sql", "query", "migration", "schema"],
        "data storage",
    ),
    (
        &["model", "training", "dataset", "tensor"],
        "machine learning",
    ),
    (&["cli", "command", "commands", "script"], "tooling"),
    (&["exception", "panic", "fix", "bug", "error"], "debugging"),
];

struct TechStackDomains;

impl MetricRule for TechStackDomains {
    fn name(&self) -> &'static str {
        "tech_stack_domains"
    }
    fn dimension(&self) -> Dimension {
        Dimension::TechnicalFeatures
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("tech_stack_domains")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut samples = 0;
        for tb in inputs.tbs.iter().filter(|tb| !tb.needs_retry) {
            samples += 1;
            let words: BTreeSet<String> =
                crate::similarity::embedding::tokenize(&tb.task).collect();
            for (keywords, tag) in DOMAIN_KEYWORDS {
                if keywords.iter().any(|k| words.contains(*k)) {
                    *counts.entry(tag.to_string()).or_default() += 1;
                }
            }
        }
        if counts.is_empty() {
            return Vec::new();
        }
        vec![inputs.metric(
            "tech_stack_domains",
            self.dimension(),
            "Programming domains worked on",
            MetricValue::TopK(top_k(counts, inputs.config.top_k)),
            "tasks",
            samples,
        )]
    }
}

struct Productivity;

impl MetricRule for Productivity {
    fn name(&self) -> &'static str {
        "productivity"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Efficiency
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Family("productivity")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let langs: BTreeSet<&'static str> = inputs.edits().map(|(_, l)| l.id).collect();
        langs
            .into_iter()
            .filter_map(|id| {
                let (rate, buckets) = productivity(&inputs.lbs, id, inputs.config.bucket_ms)?;
                let display = language_by_id(id).map_or(id, |l| l.display);
                Some(inputs.metric(
                    format!("productivity.{id}"),
                    self.dimension(),
                    format!("Average {display} productivity"),
                    MetricValue::Number(rate),
                    "LOC/hour",
                    buckets,
                ))
            })
            .collect()
    }
}

struct CommandSuccessRate;

impl MetricRule for CommandSuccessRate {
    fn name(&self) -> &'static str {
        "command_success_rate"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Efficiency
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Family("command_success_rate")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut per: BTreeMap<CommandDomain, (u64, u64)> = BTreeMap::new();
        for (_, cmd) in inputs.commands() {
            let e = per.entry(cmd.domain).or_default();
            e.0 += u64::from(cmd.success);
            e.1 += 1;
        }
        per.into_iter()
            .map(|(domain, (ok, total))| {
                inputs.metric(
                    format!("command_success_rate.{domain}"),
                    self.dimension(),
                    format!("Success rate of {domain} commands"),
                    MetricValue::Ratio(ok as f64 / total as f64),
                    "",
                    total,
                )
            })
            .collect()
    }
}

struct TerminalFailureRate;

impl MetricRule for TerminalFailureRate {
    fn name(&self) -> &'static str {
        "terminal_failure_rate"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Efficiency
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("terminal_failure_rate")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let (mut failed, mut total) = (0u64, 0u64);
        for (_, cmd) in inputs.commands() {
            failed += u64::from(!cmd.success);
            total += 1;
        }
        if total == 0 {
            return Vec::new();
        }
        vec![inputs.metric(
            "terminal_failure_rate",
            self.dimension(),
            "Terminal command failure rate",
            MetricValue::Ratio(failed as f64 / total as f64),
            "",
            total,
        )]
    }
}

/// Seconds from a failing command to the next success of the same domain,
/// per task.
fn fix_durations(inputs: &MetricInputs<'_>) -> Vec<f64> {
    let mut out = Vec::new();
    for tb in inputs.tbs {
        let mut open: BTreeMap<CommandDomain, TimestampMs> = BTreeMap::new();
        let mut members: Vec<&LogLevelBehavior> = tb
            .lbs
            .iter()
            .filter_map(|id| inputs.by_id.get(id).copied())
            .collect();
        members.sort_by_key(|lb| (lb.timestamp, lb.lb_id));
        for lb in members {
            let Some(cmd) = &lb.context.command else {
                continue;
            };
            if !cmd.success {
                open.entry(cmd.domain).or_insert(lb.timestamp);
            } else if let Some(start) = open.remove(&cmd.domain) {
                out.push((lb.timestamp - start) as f64 / 1000.0);
            }
        }
    }
    out
}

struct TimeToFix;

impl MetricRule for TimeToFix {
    fn name(&self) -> &'static str {
        "time_to_fix"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Efficiency
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("time_to_fix")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut durations = fix_durations(inputs);
        let n = durations.len() as u64;
        let Some(m) = median(&mut durations) else {
            return Vec::new();
        };
        vec![inputs.metric(
            "time_to_fix",
            self.dimension(),
            "Median time to fix a failing command",
            MetricValue::Number(m),
            "seconds",
            n,
        )]
    }
}

struct TbCompletionRatio;

impl MetricRule for TbCompletionRatio {
    fn name(&self) -> &'static str {
        "tb_completion_ratio"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Efficiency
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("tb_completion_ratio")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let (mut done, mut total) = (0u64, 0u64);
        for tb in inputs.tbs {
            let last_cmd = tb
                .lbs
                .iter()
                .filter_map(|id| inputs.by_id.get(id))
                .filter_map(|lb| {
                    lb.context
                        .command
                        .as_ref()
                        .map(|c| (lb.timestamp, lb.lb_id, c))
                })
                .max_by_key(|(ts, id, _)| (*ts, *id));
            if let Some((_, _, cmd)) = last_cmd {
                total += 1;
                done += u64::from(cmd.success);
            }
        }
        if total == 0 {
            return Vec::new();
        }
        vec![inputs.metric(
            "tb_completion_ratio",
            self.dimension(),
            "Tasks whose last command succeeded",
            MetricValue::Ratio(done as f64 / total as f64),
            "",
            total,
        )]
    }
}

struct CommentDensity;

impl MetricRule for CommentDensity {
    fn name(&self) -> &'static str {
        "comment_density"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Habits
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("comment_density")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let (mut comments, mut lines) = (0u64, 0u64);
        for (lb, lang) in inputs.edits() {
            let Some(diff) = &lb.context.diff else {
                continue;
            };
            for line in diff.added_text.lines().filter(|l| !l.trim().is_empty()) {
                lines += 1;
                comments += u64::from(lang.is_comment(line));
            }
        }
        if lines == 0 {
            return Vec::new();
        }
        vec![inputs.metric(
            "comment_density",
            self.dimension(),
            "Share of written lines that are comments",
            MetricValue::Ratio(comments as f64 / lines as f64),
            "",
            lines,
        )]
    }
}

struct ActiveHours;

impl MetricRule for ActiveHours {
    fn name(&self) -> &'static str {
        "active_hours"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Habits
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("active_hours")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        if inputs.lbs.is_empty() {
            return Vec::new();
        }
        let mut bins = vec![0u64; 24];
        let mut days = BTreeSet::new();
        for lb in &inputs.lbs {
            bins[(lb.timestamp.rem_euclid(DAY_MS) / 3_600_000) as usize] += 1;
            days.insert(lb.timestamp.div_euclid(DAY_MS));
        }
        vec![inputs.metric(
            "active_hours",
            self.dimension(),
            "Activity by hour of day (UTC)",
            MetricValue::Histogram(bins),
            "behaviors",
            days.len() as u64,
        )]
    }
}

struct ShortcutUsage;

impl MetricRule for ShortcutUsage {
    fn name(&self) -> &'static str {
        "shortcut_usage"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Habits
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("shortcut_usage")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for lb in inputs
            .lbs
            .iter()
            .filter(|lb| lb.action.verb == ActionVerb::UseShortcut)
        {
            let name = lb.context.note.clone().unwrap_or_else(|| "unknown".into());
            *counts.entry(name).or_default() += 1;
        }
        let samples: u64 = counts.values().sum();
        if samples == 0 {
            return Vec::new();
        }
        vec![inputs.metric(
            "shortcut_usage",
            self.dimension(),
            "Most used IDE shortcuts",
            MetricValue::TopK(top_k(counts, inputs.config.top_k)),
            "uses",
            samples,
        )]
    }
}

struct AdoptionRate;

impl MetricRule for AdoptionRate {
    fn name(&self) -> &'static str {
        "adoption_rate"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Adaptation
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("adoption_rate")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let Some((rate, days)) = inputs.adoption() else {
            return Vec::new();
        };
        vec![inputs.metric(
            "adoption_rate",
            self.dimension(),
            "New languages and libraries adopted",
            MetricValue::Number(rate),
            "per week",
            days,
        )]
    }
}

fn is_navigation(lb: &LogLevelBehavior) -> bool {
    matches!(lb.action.verb, ActionVerb::Navigate | ActionVerb::OpenFile)
}

/// Top-level directory of a path, `.` for files at the root.
fn workspace_of(path: &str) -> &str {
    match path.split_once('/') {
        Some((top, _)) if !top.is_empty() => top,
        _ => ".",
    }
}

struct NavigationLoad;

impl MetricRule for NavigationLoad {
    fn name(&self) -> &'static str {
        "unfamiliar_repo_navigation_load"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Adaptation
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("unfamiliar_repo_navigation_load")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut loads = Vec::new();
        for session in &inputs.sessions {
            let members = &inputs.lbs[session.clone()];
            let mut fresh: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
            for lb in members.iter().filter(|lb| lb.context.command.is_none()) {
                let ws = workspace_of(&lb.object.path);
                if seen.contains(ws) {
                    continue;
                }
                let e = fresh.entry(ws).or_default();
                e.0 += u64::from(is_navigation(lb));
                e.1 += u64::from(lb.action.verb.is_edit());
            }
            for (ws, (navs, edits)) in fresh {
                seen.insert(ws);
                loads.push(navs as f64 / edits.max(1) as f64);
            }
        }
        if loads.is_empty() {
            return Vec::new();
        }
        let mean = loads.iter().sum::<f64>() / loads.len() as f64;
        vec![inputs.metric(
            "unfamiliar_repo_navigation_load",
            self.dimension(),
            "Navigation load in unfamiliar code",
            MetricValue::Number(mean),
            "navigations per edit",
            loads.len() as u64,
        )]
    }
}

struct RevisitCyclicality;

impl MetricRule for RevisitCyclicality {
    fn name(&self) -> &'static str {
        "revisit_cyclicality"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Adaptation
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("revisit_cyclicality")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let (mut revisits, mut navs) = (0u64, 0u64);
        for session in &inputs.sessions {
            let mut visited: BTreeSet<&str> = BTreeSet::new();
            for lb in inputs.lbs[session.clone()]
                .iter()
                .filter(|lb| is_navigation(lb))
            {
                navs += 1;
                revisits += u64::from(!visited.insert(lb.object.path.as_str()));
            }
        }
        if navs == 0 {
            return Vec::new();
        }
        vec![inputs.metric(
            "revisit_cyclicality",
            self.dimension(),
            "Revisit cyclicality of navigation",
            MetricValue::Number(revisits as f64 / navs as f64),
            "",
            navs,
        )]
    }
}

struct LearningScore;

impl LearningScore {
    /// Per-day command failure rates, day 0 being the first day with a
    /// command.
    fn daily_failure_rates(inputs: &MetricInputs<'_>) -> Vec<(f64, f64)> {
        let mut days: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
        let mut first = None;
        for (lb, cmd) in inputs.commands() {
            let start = *first.get_or_insert(lb.timestamp);
            let e = days
                .entry((lb.timestamp - start).div_euclid(DAY_MS))
                .or_default();
            e.0 += u64::from(!cmd.success);
            e.1 += 1;
        }
        days.into_iter()
            .map(|(d, (f, t))| (d as f64, f as f64 / t as f64))
            .collect()
    }
}

impl MetricRule for LearningScore {
    fn name(&self) -> &'static str {
        "learning_score"
    }
    fn dimension(&self) -> Dimension {
        Dimension::Adaptation
    }
    fn key_pattern(&self) -> KeyPattern {
        KeyPattern::Exact("learning_score")
    }
    fn evaluate(&self, inputs: &MetricInputs<'_>) -> Vec<PersonaMetric> {
        let rates = Self::daily_failure_rates(inputs);
        let Some((adoption, _)) = inputs.adoption() else {
            return Vec::new();
        };
        let cfg = inputs.config;
        let adoption_part = (adoption / cfg.learning_adoption_ceiling).clamp(0.0, 1.0);
        let improvement_part = (-slope(&rates) / cfg.learning_slope_ceiling).clamp(0.0, 1.0);
        let w = cfg.learning_adoption_weight.clamp(0.0, 1.0);
        let score = (10.0 * (w * adoption_part + (1.0 - w) * improvement_part)).round();
        vec![inputs.metric(
            "learning_score",
            self.dimension(),
            "Learning score",
            MetricValue::Number(score),
            "out of 10",
            rates.len() as u64,
        )]
    }
}
