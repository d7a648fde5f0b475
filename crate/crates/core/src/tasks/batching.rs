//! Density-adaptive batching: dense activity gets small batches, sparse
//! activity larger ones.

use crate::model::{LogLevelBehavior, TimestampMs};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchPolicy {
    /// Numerator of the size rule, in LBs·(LB/min).
    pub size_budget: f64,
    pub min_batch: usize,
    pub max_batch: usize,
    pub idle_flush_s: f64,
    pub elapsed_flush_s: f64,
    /// Batches a noise LB may be carried into before it is finalized.
    pub max_carry: u32,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy {
            size_budget: 600.0,
            min_batch: 40,
            max_batch: 400,
            idle_flush_s: 120.0,
            elapsed_flush_s: 900.0,
            max_carry: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlushReason {
    Size,
    Idle,
    Elapsed,
    EndOfStream,
    /// Tasks restored from an archive rather than recognized.
    Import,
}

impl BatchPolicy {
    /// `clamp(round(size_budget / max(rate, 1)), min_batch, max_batch)`.
    pub fn max_batch_size(&self, rate_per_min: f64) -> usize {
        let raw = (self.size_budget / rate_per_min.max(1.0)).round();
        (raw.max(0.0) as usize).clamp(self.min_batch, self.max_batch)
    }

    pub fn flush_decision(
        &self,
        rate_per_min: f64,
        pending: usize,
        idle_gap_s: f64,
        elapsed_s: f64,
    ) -> Option<FlushReason> {
        if pending == 0 {
            return None;
        }
        if pending >= self.max_batch_size(rate_per_min) {
            Some(FlushReason::Size)
        } else if idle_gap_s >= self.idle_flush_s {
            Some(FlushReason::Idle)
        } else if elapsed_s >= self.elapsed_flush_s {
            Some(FlushReason::Elapsed)
        } else {
            None
        }
    }
}

/// Accumulates LBs and decides, on event time, when a batch is due.
#[derive(Debug, Clone)]
pub struct Batcher {
    policy: BatchPolicy,
    pending: Vec<LogLevelBehavior>,
}

impl Batcher {
    pub fn new(policy: BatchPolicy) -> Self {
        Batcher {
            policy,
            pending: Vec::new(),
        }
    }

    pub fn policy(&self) -> &BatchPolicy {
        &self.policy
    }

    pub fn pending(&self) -> &[LogLevelBehavior] {
        &self.pending
    }

    /// LBs per minute over the pending window, with the window floored at
    /// one minute.
    pub fn rate_at(&self, now: TimestampMs) -> f64 {
        let Some(first) = self.pending.first() else {
            return 0.0;
        };
        let elapsed_ms = (now - first.timestamp).max(60_000) as f64;
        self.pending.len() as f64 * 60_000.0 / elapsed_ms
    }

    /// Whether the pending LBs are due at time `now`.
    pub fn due_at(&self, now: TimestampMs) -> Option<FlushReason> {
        let first = self.pending.first()?.timestamp;
        let last = self.pending.last()?.timestamp;
        self.policy.flush_decision(
            self.rate_at(now),
            self.pending.len(),
            (now - last) as f64 / 1000.0,
            (now - first) as f64 / 1000.0,
        )
    }

    /// Adds a behavior. A batch cut by the idle or elapsed rule excludes the
    /// new behavior; one cut by the size rule includes it.
    pub fn push(&mut self, lb: LogLevelBehavior) -> Option<(FlushReason, Vec<LogLevelBehavior>)> {
        let before = match self.due_at(lb.timestamp) {
            Some(reason @ (FlushReason::Idle | FlushReason::Elapsed)) => {
                Some((reason, std::mem::take(&mut self.pending)))
            }
            _ => None,
        };
        let now = lb.timestamp;
        self.pending.push(lb);
        if before.is_some() {
            return before;
        }
        let size = self.policy.max_batch_size(self.rate_at(now));
        (self.pending.len() >= size).then(|| (FlushReason::Size, std::mem::take(&mut self.pending)))
    }

    /// Cuts whatever is pending.
    pub fn flush(&mut self) -> Vec<LogLevelBehavior> {
        std::mem::take(&mut self.pending)
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
            action: ActionKind::new(ActionVerb::Navigate),
            object: CodeObject::file("a.rs"),
            context: ContextInfo {
                diff: Some(DiffInfo::default()),
                ..Default::default()
            },
        }
    }

    #[test]
    fn size_rule_tracks_density() {
        let p = BatchPolicy::default();
        assert_eq!(p.max_batch_size(30.0), 40);
        assert_eq!(p.max_batch_size(2.0), 300);
        assert_eq!(p.max_batch_size(0.0), 400);
        assert_eq!(p.max_batch_size(1.0), 400);
        assert_eq!(p.max_batch_size(1000.0), 40);
    }

    #[test]
    fn idle_gap_flushes() {
        let p = BatchPolicy::default();
        assert_eq!(
            p.flush_decision(2.0, 5, 180.0, 200.0),
            Some(FlushReason::Idle)
        );
        assert_eq!(p.flush_decision(2.0, 5, 60.0, 200.0), None);
        assert_eq!(
            p.flush_decision(2.0, 5, 60.0, 900.0),
            Some(FlushReason::Elapsed)
        );
        assert_eq!(p.flush_decision(2.0, 0, 999.0, 999.0), None);
    }

    #[test]
    fn batcher_cuts_on_idle_before_the_new_lb() {
        let mut b = Batcher::new(BatchPolicy::default());
        for i in 0..5 {
            assert!(b.push(lb(i + 1, i as i64 * 1000)).is_none());
        }
        let (reason, batch) = b.push(lb(6, 4000 + 180_000)).unwrap();
        assert_eq!(reason, FlushReason::Idle);
        assert_eq!(batch.len(), 5);
        assert_eq!(b.pending().len(), 1);
    }

    #[test]
    fn batcher_cuts_dense_streams_at_the_floor() {
        let mut b = Batcher::new(BatchPolicy::default());
        // 60 LB/min: one per second.
        let mut cuts = Vec::new();
        for i in 0..100u64 {
            if let Some((reason, batch)) = b.push(lb(i + 1, i as i64 * 1000)) {
                cuts.push((reason, batch.len()));
            }
        }
        assert_eq!(cuts, vec![(FlushReason::Size, 40), (FlushReason::Size, 40)]);
    }
}
