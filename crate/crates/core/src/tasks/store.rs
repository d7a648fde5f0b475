//! `tbs.log`: one record per committed batch (its TBs and noise
//! accounting) plus task updates from summarization retries. A batch is a
//! single line, so a batch commit is atomic.

use super::BatchRecord;
use crate::error::{Error, Result};
use crate::model::TaskLevelBehavior;
use crate::record_log::{read_records, RecordLog};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const TBS_LOG: &str = "tbs.log";
pub const TBS_HEADER: &str = "#vme-tbs v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskLogRecord {
    Batch(BatchRecord),
    Task {
        tb_id: u64,
        task: String,
        key_objects: Vec<String>,
    },
}

/// In-memory fold of `tbs.log`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskState {
    pub tbs: BTreeMap<u64, TaskLevelBehavior>,
    pub last_batch: Option<BatchRecord>,
    pub batch_count: u64,
    /// Highest lb_id that entered any batch window as a new behavior.
    pub batched_through: u64,
}

impl TaskState {
    /// Folds one record in; a rejected record leaves the state unchanged.
    fn apply(&mut self, rec: TaskLogRecord) -> Result<()> {
        match rec {
            TaskLogRecord::Batch(batch) => {
                if batch.batch_id != self.batch_count + 1 {
                    return Err(Error::Integrity(format!(
                        "{TBS_LOG}: batch {} follows batch {}",
                        batch.batch_id, self.batch_count
                    )));
                }
                if let Some(tb) = batch.tbs.iter().find(|tb| self.tbs.contains_key(&tb.tb_id)) {
                    return Err(Error::Integrity(format!(
                        "{TBS_LOG}: tb {} committed twice",
                        tb.tb_id
                    )));
                }
                for tb in &batch.tbs {
                    self.tbs.insert(tb.tb_id, tb.clone());
                }
                self.batch_count = batch.batch_id;
                if let Some(last) = batch.new_lbs.last() {
                    self.batched_through = self.batched_through.max(*last);
                }
                self.last_batch = Some(batch);
            }
            TaskLogRecord::Task {
                tb_id,
                task,
                key_objects,
            } => {
                let tb = self.tbs.get_mut(&tb_id).ok_or_else(|| {
                    Error::Integrity(format!("{TBS_LOG}: task update for unknown tb {tb_id}"))
                })?;
                tb.task = task;
                tb.key_objects = key_objects;
                tb.needs_retry = false;
            }
        }
        Ok(())
    }

    pub fn next_tb_id(&self) -> u64 {
        self.tbs.keys().next_back().map_or(1, |id| id + 1)
    }

    pub fn pending_retries(&self) -> Vec<u64> {
        self.tbs
            .values()
            .filter(|tb| tb.needs_retry)
            .map(|tb| tb.tb_id)
            .collect()
    }

    /// Carried-over `(lb_id, times carried)` from the last batch.
    pub fn carry_over(&self) -> &[(u64, u32)] {
        self.last_batch.as_ref().map_or(&[], |b| &b.carry_over)
    }
}

pub struct TaskStore {
    log: RecordLog,
    state: TaskState,
}

impl TaskStore {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut state = TaskState::default();
        let log = RecordLog::open(&dir.join(TBS_LOG), TBS_HEADER, |line| {
            state.apply(serde_json::from_str(line)?)
        })?;
        Ok(TaskStore { log, state })
    }

    pub fn state(&self) -> &TaskState {
        &self.state
    }

    pub fn commit_batch(&mut self, batch: BatchRecord) -> Result<()> {
        let rec = TaskLogRecord::Batch(batch);
        let line = serde_json::to_string(&rec)?;
        self.state.apply(rec)?;
        self.log.append(&line)
    }

    pub fn update_task(&mut self, tb_id: u64, task: &str, key_objects: &[String]) -> Result<()> {
        let rec = TaskLogRecord::Task {
            tb_id,
            task: task.to_string(),
            key_objects: key_objects.to_vec(),
        };
        let line = serde_json::to_string(&rec)?;
        self.state.apply(rec)?;
        self.log.append(&line)
    }

    pub fn sync(&mut self) -> Result<()> {
        self.log.sync()
    }
}

/// Reads the TB state without opening the log for writing.
pub fn read_task_state(dir: &Path) -> Result<TaskState> {
    let mut state = TaskState::default();
    for line in read_records(&dir.join(TBS_LOG), TBS_HEADER)? {
        state.apply(serde_json::from_str(&line)?)?;
    }
    Ok(state)
}

/// Committed batch records in commit order.
pub fn read_batches(dir: &Path) -> Result<Vec<BatchRecord>> {
    let mut out = Vec::new();
    for line in read_records(&dir.join(TBS_LOG), TBS_HEADER)? {
        if let TaskLogRecord::Batch(b) = serde_json::from_str(&line)? {
            out.push(b);
        }
    }
    Ok(out)
}

pub fn read_tbs(dir: &Path) -> Result<Vec<TaskLevelBehavior>> {
    Ok(read_task_state(dir)?.tbs.into_values().collect())
}
