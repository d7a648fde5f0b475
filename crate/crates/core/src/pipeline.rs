//! The ingest engine: raw events in, behaviors and tasks out, all durable
//! under one data directory.

use crate::error::{Error, Result};
use crate::ingest::{
    extract_lb, read_event_log, read_lbs, replay_lbs, BehaviorStore, Preprocessor, SymbolIndex,
    DEFAULT_MERGE_GAP_MS,
};
use crate::llm::LlmClient;
use crate::model::{LogLevelBehavior, RawEvent};
use crate::persona::{compute_persona, MetricRegistry, Persona, PersonaConfig};
use crate::similarity::{EmbeddingProvider, RelatednessParams};
use crate::tasks::{
    summarize_tb, BatchPolicy, BatchRecord, Batcher, FlushReason, Recognizer, TaskStore,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub merge_gap_ms: i64,
    pub relatedness: RelatednessParams,
    pub batching: BatchPolicy,
    /// Root that snippet retrieval reads source files from.
    pub workspace_root: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            merge_gap_ms: DEFAULT_MERGE_GAP_MS,
            relatedness: RelatednessParams::default(),
            batching: BatchPolicy::default(),
            workspace_root: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub events_read: u64,
    pub events_filtered: u64,
    pub edits_merged: u64,
    pub outputs_folded: u64,
    /// Preprocessed events with no developer action (file close, debugger
    /// steps, stray output).
    pub unclassified: u64,
    pub lbs_created: u64,
    pub batches: u64,
    pub tbs_created: u64,
    pub tbs_unsummarized: u64,
    pub retries_resolved: u64,
    pub pruned: u64,
    pub noise_finalized: u64,
    pub carried_over: u64,
}

impl IngestSummary {
    fn add_batch(&mut self, b: &BatchRecord) {
        self.batches += 1;
        self.tbs_created += b.tbs.len() as u64;
        self.tbs_unsummarized += b.tbs.iter().filter(|tb| tb.needs_retry).count() as u64;
        self.pruned += b.pruned.len() as u64;
        self.noise_finalized += b.noise.len() as u64;
        self.carried_over = b.carry_over.len() as u64;
    }
}

pub struct Engine {
    dir: PathBuf,
    config: EngineConfig,
    store: BehaviorStore,
    tasks: TaskStore,
    batcher: Batcher,
    pre: Preprocessor,
    symbols: SymbolIndex,
    provider: Arc<dyn EmbeddingProvider>,
    client: Arc<dyn LlmClient>,
    /// Behaviors a later batch may still need: carried noise and members of
    /// tasks awaiting a summarization retry.
    live: BTreeMap<u64, LogLevelBehavior>,
    last_event_id: Option<u64>,
    emitted: Vec<RawEvent>,
    summary: IngestSummary,
}

impl Engine {
    pub fn open(
        dir: &Path,
        config: EngineConfig,
        symbols: SymbolIndex,
        provider: Arc<dyn EmbeddingProvider>,
        client: Arc<dyn LlmClient>,
    ) -> Result<Self> {
        config.relatedness.validate()?;
        let store = BehaviorStore::open(dir)?;
        let tasks = TaskStore::open(dir)?;
        let mut engine = Engine {
            dir: dir.to_path_buf(),
            batcher: Batcher::new(config.batching.clone()),
            pre: Preprocessor::new(config.merge_gap_ms),
            config,
            store,
            tasks,
            symbols,
            provider,
            client,
            live: BTreeMap::new(),
            last_event_id: None,
            emitted: Vec::new(),
            summary: IngestSummary::default(),
        };
        engine.recover()?;
        Ok(engine)
    }

    /// Rebuilds in-memory state after a restart: behaviors lost with a
    /// crashed preprocessor, carried noise, retry candidates, and behaviors
    /// stored but not yet batched.
    fn recover(&mut self) -> Result<()> {
        if self.store.recovered_stream() {
            self.replay_lost_behaviors()?;
        }
        let state = self.tasks.state();
        let mut needed: BTreeMap<u64, ()> =
            state.carry_over().iter().map(|(id, _)| (*id, ())).collect();
        for tb_id in state.pending_retries() {
            for id in &state.tbs[&tb_id].lbs {
                needed.insert(*id, ());
            }
        }
        let batched_through = state.batched_through;
        if needed.is_empty() && self.store.high_water() <= batched_through {
            return Ok(());
        }
        let mut unbatched = Vec::new();
        for lb in read_lbs(&self.dir)? {
            if lb.lb_id > batched_through {
                unbatched.push(lb);
            } else if needed.contains_key(&lb.lb_id) {
                self.live.insert(lb.lb_id, lb);
            }
        }
        for lb in unbatched {
            self.enqueue(lb)?;
        }
        Ok(())
    }

    fn replay_lost_behaviors(&mut self) -> Result<()> {
        let entries = read_event_log(&self.dir)?;
        let first = self.store.first_lb_id().unwrap_or(1);
        let replayed = replay_lbs(&entries, &self.symbols, self.config.merge_gap_ms, first)?;
        let stored = read_lbs(&self.dir)?;
        if replayed.len() < stored.len() || replayed[..stored.len()] != stored[..] {
            log::warn!("event log replay does not match the behavior store; skipping recovery");
            return Ok(());
        }
        for lb in &replayed[stored.len()..] {
            self.store.append(lb)?;
        }
        Ok(())
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    pub fn summary(&self) -> IngestSummary {
        let mut s = self.summary;
        let pre = self.pre.stats();
        s.events_read = pre.read;
        s.events_filtered = pre.filtered;
        s.edits_merged = pre.merged;
        s.outputs_folded = pre.folded;
        s
    }

    pub fn pending(&self) -> usize {
        self.batcher.pending().len()
    }

    pub fn last_event_timestamp(&self) -> Option<i64> {
        self.store.last_event_timestamp()
    }

    /// Forces everything appended so far to stable storage.
    pub fn sync(&mut self) -> Result<()> {
        self.store.sync()?;
        self.tasks.sync()
    }

    /// Accepts one event of the current capture stream.
    pub fn push_event(&mut self, e: RawEvent) -> Result<()> {
        if let Err(field) = e.validate() {
            return Err(Error::Stream(format!(
                "event {} lacks required field {field}",
                e.event_id
            )));
        }
        if let Some(last) = self.last_event_id {
            if e.event_id <= last {
                return Err(Error::Stream(format!(
                    "event_id {} does not increase (previous {last})",
                    e.event_id
                )));
            }
        }
        self.store.append_event(&e)?;
        self.last_event_id = Some(e.event_id);
        let mut out = std::mem::take(&mut self.emitted);
        self.pre.push(e, &mut out)?;
        let result = self.extract_all(&mut out);
        self.emitted = out;
        result
    }

    fn extract_all(&mut self, events: &mut Vec<RawEvent>) -> Result<()> {
        for e in events.drain(..) {
            match extract_lb(&e, &self.symbols, self.store.high_water() + 1) {
                Some(lb) => {
                    self.store.append(&lb)?;
                    self.summary.lbs_created += 1;
                    self.enqueue(lb)?;
                }
                None => self.summary.unclassified += 1,
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, lb: LogLevelBehavior) -> Result<()> {
        if let Some((reason, batch)) = self.batcher.push(lb) {
            self.process_batch(reason, batch)?;
        }
        Ok(())
    }

    /// Flushes pending batch work if the batching policy says it is due at
    /// `now` (used by long-running listeners on wall-clock ticks).
    pub fn tick(&mut self, now: i64) -> Result<()> {
        if let Some(reason) = self.batcher.due_at(now) {
            let batch = self.batcher.flush();
            self.process_batch(reason, batch)?;
        }
        Ok(())
    }

    /// Ends the current capture stream: releases held events and cuts a
    /// batch from everything pending.
    pub fn end_stream(&mut self) -> Result<()> {
        let mut out = std::mem::take(&mut self.emitted);
        self.pre.finish(&mut out);
        self.extract_all(&mut out)?;
        self.emitted = out;
        self.pre = Preprocessor::new(self.config.merge_gap_ms).with_stats(self.pre.stats());
        self.last_event_id = None;
        self.store.end_stream()?;
        let batch = self.batcher.flush();
        if !batch.is_empty() {
            self.process_batch(FlushReason::EndOfStream, batch)?;
        }
        self.sync()
    }

    /// Ingests a whole stream and ends it.
    pub fn ingest(&mut self, events: impl IntoIterator<Item = Result<RawEvent>>) -> Result<()> {
        for e in events {
            self.push_event(e?)?;
        }
        self.end_stream()
    }

    fn retry_summaries(&mut self) -> Result<()> {
        for tb_id in self.tasks.state().pending_retries() {
            let mut tb = self.tasks.state().tbs[&tb_id].clone();
            let Some(members) = tb
                .lbs
                .iter()
                .map(|id| self.live.get(id).cloned())
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            summarize_tb(
                &mut tb,
                &members,
                self.client.as_ref(),
                self.config.workspace_root.as_deref(),
            );
            if !tb.needs_retry {
                self.tasks.update_task(tb_id, &tb.task, &tb.key_objects)?;
                self.summary.retries_resolved += 1;
                for id in &tb.lbs {
                    self.live.remove(id);
                }
            }
        }
        Ok(())
    }

    fn process_batch(&mut self, reason: FlushReason, new_lbs: Vec<LogLevelBehavior>) -> Result<()> {
        self.retry_summaries()?;
        let state = self.tasks.state();
        let carried: Vec<(LogLevelBehavior, u32)> = state
            .carry_over()
            .iter()
            .filter_map(|(id, age)| self.live.get(id).map(|lb| (lb.clone(), *age)))
            .collect();
        let recognizer = Recognizer {
            params: self.config.relatedness.clone(),
            max_carry: self.config.batching.max_carry,
            provider: self.provider.as_ref(),
            client: self.client.as_ref(),
            workspace_root: self.config.workspace_root.clone(),
        };
        let record = recognizer.process(
            state.batch_count + 1,
            state.next_tb_id(),
            reason,
            &new_lbs,
            &carried,
        )?;
        debug_assert!(record.reconciles());

        let mut by_id: BTreeMap<u64, LogLevelBehavior> =
            new_lbs.into_iter().map(|lb| (lb.lb_id, lb)).collect();
        for (lb, _) in carried {
            self.live.remove(&lb.lb_id);
            by_id.insert(lb.lb_id, lb);
        }
        let keep: Vec<u64> = record
            .carry_over
            .iter()
            .map(|(id, _)| *id)
            .chain(
                record
                    .tbs
                    .iter()
                    .filter(|tb| tb.needs_retry)
                    .flat_map(|tb| tb.lbs.iter().copied()),
            )
            .collect();
        self.summary.add_batch(&record);
        self.tasks.commit_batch(record)?;
        for id in keep {
            if let Some(lb) = by_id.remove(&id) {
                self.live.insert(id, lb);
            }
        }
        Ok(())
    }

    /// Recomputes the persona from the current stores.
    pub fn compute_persona(
        &self,
        registry: &MetricRegistry,
        config: &PersonaConfig,
    ) -> Result<Persona> {
        let lbs = read_lbs(&self.dir)?;
        let tbs: Vec<_> = self.tasks.state().tbs.values().cloned().collect();
        compute_persona(&tbs, &lbs, registry, config)
    }
}
