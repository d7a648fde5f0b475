//! Relatedness between log-level behaviors.
//!
//! `R = a·R(T) + b·R(A) + c·R(O) + d·R(C)` where the time component decays
//! exponentially with the gap, the object component falls off linearly
//! with tree distance, and the action/context components are rescaled
//! embedding cosines.

pub mod embedding;

pub use embedding::{
    cosine, EmbeddingConfig, EmbeddingProvider, EmbeddingRegistry, HashedBagOfTokens,
};

use crate::error::{Error, Result};
use crate::model::{CodeObject, LogLevelBehavior, TimestampMs};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelatednessParams {
    /// Weight of the time component.
    pub a: f64,
    /// Weight of the action component.
    pub b: f64,
    /// Weight of the object component.
    pub c: f64,
    /// Weight of the context component.
    pub d: f64,
    /// Temporal decay constant in seconds.
    pub tau: f64,
    /// Tree distance at which object similarity reaches zero.
    pub d_max: u32,
    /// Pruning threshold.
    pub theta_p: f64,
    /// Clustering radius on `1 - R`.
    pub eps: f64,
    pub min_pts: usize,
    /// Temporal neighbors considered on each side when pruning.
    pub prune_neighbors: usize,
}

impl Default for RelatednessParams {
    fn default() -> Self {
        RelatednessParams {
            a: 0.35,
            b: 0.30,
            c: 0.25,
            d: 0.10,
            tau: 60.0,
            d_max: 6,
            theta_p: 0.35,
            eps: 0.45,
            min_pts: 3,
            prune_neighbors: 3,
        }
    }
}

impl RelatednessParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.a, self.b, self.c, self.d];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParams("weights must be non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParams("tau must be positive".into()));
        }
        if self.d_max < 1 {
            return Err(Error::InvalidParams("d_max must be at least 1".into()));
        }
        for (name, v) in [("theta_p", self.theta_p), ("eps", self.eps)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.min_pts < 2 {
            return Err(Error::InvalidParams("min_pts must be at least 2".into()));
        }
        Ok(())
    }
}

pub fn temporal_similarity(t_x: TimestampMs, t_y: TimestampMs, tau: f64) -> f64 {
    let gap_ms = (i128::from(t_x) - i128::from(t_y)).unsigned_abs() as f64;
    (-gap_ms / (1000.0 * tau)).exp()
}

fn tree_nodes(o: &CodeObject) -> impl Iterator<Item = &str> {
    o.path
        .split('/')
        .filter(|c| !c.is_empty() && *c != ".")
        .chain(o.symbol_path.iter().map(String::as_str))
}

/// Edge count between two objects in the tree of directories, files and
/// named scopes.
pub fn object_distance(x: &CodeObject, y: &CodeObject) -> usize {
    let xs: Vec<&str> = tree_nodes(x).collect();
    let ys: Vec<&str> = tree_nodes(y).collect();
    let common = xs.iter().zip(&ys).take_while(|(a, b)| a == b).count();
    xs.len() + ys.len() - 2 * common
}

pub fn object_similarity(x: &CodeObject, y: &CodeObject, d_max: u32) -> f64 {
    let d = object_distance(x, y) as f64;
    (1.0 - d / f64::from(d_max.max(1))).max(0.0)
}

/// Embedding cosine rescaled from `[-1, 1]` to `[0, 1]`.
pub fn semantic_similarity(x: &str, y: &str, p: &dyn EmbeddingProvider) -> Result<f64> {
    let vx = p.embed(x)?;
    let vy = p.embed(y)?;
    Ok(rescaled_cosine(&vx, &vy))
}

pub fn rescaled_cosine(x: &[f32], y: &[f32]) -> f64 {
    ((cosine(x, y) + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// The four component scores of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub time: f64,
    pub action: f64,
    pub object: f64,
    pub context: f64,
}

impl Components {
    pub fn weighted(&self, params: &RelatednessParams) -> f64 {
        let r = params.a * self.time
            + params.b * self.action
            + params.c * self.object
            + params.d * self.context;
        r.clamp(0.0, 1.0)
    }
}

/// A behavior with its embeddings precomputed, so pairwise scoring inside a
/// batch does not re-embed.
#[derive(Debug, Clone)]
pub struct BehaviorFeatures {
    pub lb_id: u64,
    pub timestamp: TimestampMs,
    pub object: CodeObject,
    pub action: Vec<f32>,
    pub context: Vec<f32>,
}

impl BehaviorFeatures {
    pub fn compute(lb: &LogLevelBehavior, p: &dyn EmbeddingProvider) -> Result<Self> {
        Ok(BehaviorFeatures {
            lb_id: lb.lb_id,
            timestamp: lb.timestamp,
            object: lb.object.clone(),
            action: p.embed(lb.action.verb.phrase())?,
            context: p.embed(&lb.context.text())?,
        })
    }

    pub fn components(&self, other: &Self, params: &RelatednessParams) -> Components {
        Components {
            time: temporal_similarity(self.timestamp, other.timestamp, params.tau),
            action: rescaled_cosine(&self.action, &other.action),
            object: object_similarity(&self.object, &other.object, params.d_max),
            context: rescaled_cosine(&self.context, &other.context),
        }
    }

    pub fn relatedness(&self, other: &Self, params: &RelatednessParams) -> f64 {
        self.components(other, params).weighted(params)
    }
}

pub fn relatedness(
    x: &LogLevelBehavior,
    y: &LogLevelBehavior,
    params: &RelatednessParams,
    p: &dyn EmbeddingProvider,
) -> Result<f64> {
    let fx = BehaviorFeatures::compute(x, p)?;
    let fy = BehaviorFeatures::compute(y, p)?;
    Ok(fx.relatedness(&fy, params))
}

/// Features for a window, embedding each distinct action phrase once.
pub fn window_features(
    lbs: &[LogLevelBehavior],
    p: &dyn EmbeddingProvider,
) -> Result<Vec<BehaviorFeatures>> {
    let mut action_cache: Vec<(crate::model::ActionVerb, Vec<f32>)> = Vec::new();
    lbs.iter()
        .map(|lb| {
            let verb = lb.action.verb;
            let action = match action_cache.iter().find(|(v, _)| *v == verb) {
                Some((_, vec)) => vec.clone(),
                None => {
                    let vec = p.embed(verb.phrase())?;
                    action_cache.push((verb, vec.clone()));
                    vec
                }
            };
            Ok(BehaviorFeatures {
                lb_id: lb.lb_id,
                timestamp: lb.timestamp,
                object: lb.object.clone(),
                action,
                context: p.embed(&lb.context.text())?,
            })
        })
        .collect()
}

/// Dense symmetric relatedness matrix over a window.
#[derive(Debug, Clone)]
pub struct RelatednessMatrix {
    n: usize,
    values: Vec<f64>,
}

impl RelatednessMatrix {
    pub fn build(features: &[BehaviorFeatures], params: &RelatednessParams) -> Self {
        let n = features.len();
        let mut values = vec![1.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = features[i].relatedness(&features[j], params);
                values[i * n + j] = r;
                values[j * n + i] = r;
            }
        }
        RelatednessMatrix { n, values }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![1.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = f(i, j);
                values[i * n + j] = r;
                values[j * n + i] = r;
            }
        }
        RelatednessMatrix { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        1.0 - self.get(i, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn obj(path: &str, symbols: &[&str]) -> CodeObject {
        CodeObject {
            path: path.into(),
            symbol_path: symbols.iter().map(|s| s.to_string()).collect(),
            span: None,
        }
    }

    #[test]
    fn temporal_examples() {
        assert_eq!(temporal_similarity(5, 5, 60.0), 1.0);
        let at_tau = temporal_similarity(0, 60_000, 60.0);
        assert!((at_tau - (-1f64).exp()).abs() < 1e-12);
        assert!((at_tau - 0.3679).abs() < 1e-4);
        // exp(-10/60)
        let ten_s = temporal_similarity(10_000, 0, 60.0);
        assert!((ten_s - 0.846_481_724_890_614).abs() < 1e-12);
    }

    #[test]
    fn object_examples() {
        let a = obj("src/bar.rs", &["Bar", "foo"]);
        assert_eq!(object_similarity(&a, &a.clone(), 6), 1.0);
        let sibling = obj("src/bar.rs", &["Bar", "baz"]);
        assert_eq!(object_distance(&a, &sibling), 2);
        assert!((object_similarity(&a, &sibling, 6) - 2.0 / 3.0).abs() < 1e-12);
        let far = obj("docs/guide/intro.md", &[]);
        assert_eq!(object_similarity(&a, &far, 6), 0.0);
        assert_eq!(
            object_distance(&obj("./src/a.rs", &[]), &obj("src/a.rs", &[])),
            0
        );
    }

    /// Exact term-frequency cosine, independent of hashing.
    fn tf_cosine(x: &str, y: &str) -> f64 {
        let tf = |s: &str| {
            let mut m = BTreeMap::new();
            for t in embedding::tokenize(s) {
                *m.entry(t).or_insert(0f64) += 1.0;
            }
            m
        };
        let (mx, my) = (tf(x), tf(y));
        let dot: f64 = mx.iter().map(|(k, v)| v * my.get(k).unwrap_or(&0.0)).sum();
        let n = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
        dot / (n(&mx) * n(&my))
    }

    #[test]
    fn semantic_examples_match_hand_cosine() {
        let p = HashedBagOfTokens::new();
        assert!((semantic_similarity("same text", "same text", &p).unwrap() - 1.0).abs() < 1e-6);
        for (x, y) in [
            ("run tests", "execute test suite"),
            ("run the tests", "run tests now"),
            ("cargo build release", "cargo test"),
        ] {
            let tokens: Vec<String> = embedding::tokenize(x)
                .chain(embedding::tokenize(y))
                .collect();
            let mut buckets: BTreeMap<usize, &str> = BTreeMap::new();
            let collision = tokens
                .iter()
                .any(|t| buckets.insert(p.bucket(t), t).is_some_and(|prev| prev != t));
            assert!(!collision, "hash collision in {x:?}/{y:?}");
            let expected = (tf_cosine(x, y) + 1.0) / 2.0;
            let got = semantic_similarity(x, y, &p).unwrap();
            assert!(
                (got - expected).abs() < 1e-6,
                "{x:?} vs {y:?}: {got} != {expected}"
            );
        }
        // Disjoint vocabularies are orthogonal.
        assert!(
            (semantic_similarity("run tests", "execute test suite", &p).unwrap() - 0.5).abs()
                < 1e-6
        );
        assert!(
            (semantic_similarity("run the tests", "run tests now", &p).unwrap() - 5.0 / 6.0).abs()
                < 1e-6
        );
    }

    #[test]
    fn weighted_sum_example() {
        let c = Components {
            time: 0.8465,
            action: 1.0,
            object: 1.0,
            context: 0.5,
        };
        let r = c.weighted(&RelatednessParams::default());
        assert!((r - 0.896_275).abs() < 1e-9);
        assert!((r - 0.8963).abs() < 1e-4);
    }

    #[test]
    fn params_validation() {
        assert!(RelatednessParams::default().validate().is_ok());
        let bad = RelatednessParams {
            a: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RelatednessParams {
            min_pts: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RelatednessParams {
            tau: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
