//! Task recognition: prune noisy behaviors, cluster the rest into
//! task-level behaviors, and summarize each cluster.

pub mod batching;
pub mod dbscan;
pub mod prune;
pub mod store;
pub mod summarize;

pub use batching::{BatchPolicy, Batcher, FlushReason};
pub use dbscan::{dbscan, Clustering};
pub use prune::{prune, PruneOutcome};
pub use store::{read_batches, read_task_state, read_tbs, TaskLogRecord, TaskState, TaskStore};
pub use summarize::{
    retrieve_snippets, select_key_objects, summarize_tb, synthesize_task, KeyObjectSelection,
    Snippet,
};

use crate::error::Result;
use crate::llm::LlmClient;
use crate::model::{LogLevelBehavior, TaskLevelBehavior};
use crate::similarity::{window_features, EmbeddingProvider, RelatednessMatrix, RelatednessParams};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedLb {
    pub lb_id: u64,
    /// Best relatedness to any temporal neighbor, below the threshold.
    pub max_relatedness: f64,
}

/// Everything one batch decided, committed as a unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch_id: u64,
    pub reason: FlushReason,
    /// Behaviors entering the pipeline for the first time.
    pub new_lbs: Vec<u64>,
    /// Noise carried in from the previous batch.
    pub carried_in: Vec<u64>,
    pub tbs: Vec<TaskLevelBehavior>,
    /// Unclustered behaviors deferred to the next batch, with the number of
    /// batches each has now been carried.
    pub carry_over: Vec<(u64, u32)>,
    /// Unclustered behaviors that exhausted their carries.
    pub noise: Vec<u64>,
    pub pruned: Vec<PrunedLb>,
}

impl BatchRecord {
    /// Every window behavior lands in exactly one outcome.
    pub fn reconciles(&self) -> bool {
        let mut window: Vec<u64> = self
            .new_lbs
            .iter()
            .chain(&self.carried_in)
            .copied()
            .collect();
        let mut outcomes: Vec<u64> = self
            .tbs
            .iter()
            .flat_map(|tb| tb.lbs.iter().copied())
            .chain(self.carry_over.iter().map(|(id, _)| *id))
            .chain(self.noise.iter().copied())
            .chain(self.pruned.iter().map(|p| p.lb_id))
            .collect();
        window.sort_unstable();
        outcomes.sort_unstable();
        window == outcomes
    }
}

/// Builds a TB from a non-empty cluster, leaving the task empty.
pub fn assemble_tb(tb_id: u64, cluster: &[&LogLevelBehavior]) -> TaskLevelBehavior {
    let mut members: Vec<(i64, u64)> = cluster.iter().map(|lb| (lb.timestamp, lb.lb_id)).collect();
    members.sort_unstable();
    let start_ts = members.first().map_or(0, |m| m.0);
    let end_ts = members.last().map_or(0, |m| m.0);
    TaskLevelBehavior {
        tb_id,
        delta_t: (end_ts - start_ts) as f64 / 1000.0,
        task: String::new(),
        lbs: members.into_iter().map(|m| m.1).collect(),
        start_ts,
        end_ts,
        key_objects: Vec::new(),
        needs_retry: false,
    }
}

/// Result of clustering one window, before summarization.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPartition {
    /// Clusters as window behaviors, each sorted by time.
    pub clusters: Vec<Vec<LogLevelBehavior>>,
    pub carry_over: Vec<(u64, u32)>,
    pub noise: Vec<u64>,
    pub pruned: Vec<PrunedLb>,
}

/// Prunes and clusters a window made of new behaviors plus carried noise
/// (with the number of batches each was already carried).
pub fn partition_window(
    new_lbs: &[LogLevelBehavior],
    carried: &[(LogLevelBehavior, u32)],
    params: &RelatednessParams,
    max_carry: u32,
    provider: &dyn EmbeddingProvider,
) -> Result<WindowPartition> {
    let mut window: Vec<(&LogLevelBehavior, u32)> = carried
        .iter()
        .map(|(lb, age)| (lb, *age))
        .chain(new_lbs.iter().map(|lb| (lb, 0)))
        .collect();
    window.sort_by_key(|(lb, _)| (lb.timestamp, lb.lb_id));

    let lbs: Vec<LogLevelBehavior> = window.iter().map(|(lb, _)| (*lb).clone()).collect();
    let features = window_features(&lbs, provider)?;
    let matrix = RelatednessMatrix::build(&features, params);
    let pruned_out = prune(&matrix, params.prune_neighbors, params.theta_p);

    let mut kept = pruned_out.retained;
    kept.sort_by_key(|&i| lbs[i].lb_id);
    let clustering = dbscan(kept.len(), params.eps, params.min_pts, |i, j| {
        matrix.distance(kept[i], kept[j])
    });

    let clusters = clustering
        .clusters()
        .into_iter()
        .map(|members| {
            let mut c: Vec<LogLevelBehavior> =
                members.into_iter().map(|m| lbs[kept[m]].clone()).collect();
            c.sort_by_key(|lb| (lb.timestamp, lb.lb_id));
            c
        })
        .collect();
    let mut carry_over = Vec::new();
    let mut noise = Vec::new();
    for m in clustering.noise() {
        let (lb, age) = window[kept[m]];
        if age < max_carry {
            carry_over.push((lb.lb_id, age + 1));
        } else {
            noise.push(lb.lb_id);
        }
    }
    let pruned = pruned_out
        .pruned
        .into_iter()
        .map(|(i, r)| PrunedLb {
            lb_id: lbs[i].lb_id,
            max_relatedness: r,
        })
        .collect();
    Ok(WindowPartition {
        clusters,
        carry_over,
        noise,
        pruned,
    })
}

/// Batch processor bound to one embedding provider and one LLM client.
pub struct Recognizer<'a> {
    pub params: RelatednessParams,
    pub max_carry: u32,
    pub provider: &'a dyn EmbeddingProvider,
    pub client: &'a dyn LlmClient,
    pub workspace_root: Option<PathBuf>,
}

impl Recognizer<'_> {
    pub fn process(
        &self,
        batch_id: u64,
        first_tb_id: u64,
        reason: FlushReason,
        new_lbs: &[LogLevelBehavior],
        carried: &[(LogLevelBehavior, u32)],
    ) -> Result<BatchRecord> {
        let part = partition_window(
            new_lbs,
            carried,
            &self.params,
            self.max_carry,
            self.provider,
        )?;
        let mut tbs = Vec::with_capacity(part.clusters.len());
        for (k, cluster) in part.clusters.iter().enumerate() {
            let refs: Vec<&LogLevelBehavior> = cluster.iter().collect();
            let mut tb = assemble_tb(first_tb_id + k as u64, &refs);
            summarize_tb(
                &mut tb,
                cluster,
                self.client,
                self.workspace_root.as_deref(),
            );
            tbs.push(tb);
        }
        Ok(BatchRecord {
            batch_id,
            reason,
            new_lbs: new_lbs.iter().map(|lb| lb.lb_id).collect(),
            carried_in: carried.iter().map(|(lb, _)| lb.lb_id).collect(),
            tbs,
            carry_over: part.carry_over,
            noise: part.noise,
            pruned: part.pruned,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionKind, ActionVerb, CodeObject, ContextInfo, DiffInfo};

    fn lb(id: u64, ts: i64) -> LogLevelBehavior {
        LogLevelBehavior {
            lb_id: id,
            timestamp: ts,
            action: ActionKind::new(ActionVerb::AddText),
            object: CodeObject::file("src/a.rs"),
            context: ContextInfo {
                diff: Some(DiffInfo::default()),
                ..Default::default()
            },
        }
    }

    #[test]
    fn assembly_sorts_and_measures() {
        let (a, b, c) = (lb(3, 61_000), lb(1, 1_000), lb(2, 30_000));
        let tb = assemble_tb(7, &[&a, &b, &c]);
        assert_eq!(tb.lbs, vec![1, 2, 3]);
        assert_eq!(tb.delta_t, 60.0);
        assert_eq!(assemble_tb(1, &[&a]).delta_t, 0.0);
    }
}
