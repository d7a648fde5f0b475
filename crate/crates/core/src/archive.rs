//! Portable archives of a time range: raw events, behaviors and tasks in
//! one text file that another data directory can import.

use crate::error::{Error, Result};
use crate::ingest::store::END_OF_STREAM;
use crate::ingest::{read_event_log, read_lbs, BehaviorStore, EventLogEntry};
use crate::model::{serialize_event, LogLevelBehavior, TaskLevelBehavior, TimestampMs};
use crate::tasks::{read_task_state, BatchRecord, FlushReason, TaskStore};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

pub const ARCHIVE_HEADER: &str = "#vme-archive v1";
const SECTION_EVENTS: &str = "#section events";
const SECTION_LBS: &str = "#section lbs";
const SECTION_TBS: &str = "#section tbs";

/// Half-open `[from, to)` range of event time; `None` is unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimeRange {
    pub from: Option<TimestampMs>,
    pub to: Option<TimestampMs>,
}

impl TimeRange {
    pub fn all() -> Self {
        TimeRange::default()
    }

    pub fn new(from: Option<TimestampMs>, to: Option<TimestampMs>) -> Result<Self> {
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(Error::Invalid(format!(
                    "range start {f} is after its end {t}"
                )));
            }
        }
        Ok(TimeRange { from, to })
    }

    pub fn contains(&self, ts: TimestampMs) -> bool {
        self.from.is_none_or(|f| ts >= f) && self.to.is_none_or(|t| ts < t)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    /// Event log lines: serialized events and stream markers.
    pub event_lines: Vec<String>,
    pub lbs: Vec<LogLevelBehavior>,
    pub tbs: Vec<TaskLevelBehavior>,
}

impl Archive {
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{ARCHIVE_HEADER}")?;
        writeln!(out, "{SECTION_EVENTS}")?;
        for line in &self.event_lines {
            writeln!(out, "{line}")?;
        }
        writeln!(out, "{SECTION_LBS}")?;
        for lb in &self.lbs {
            writeln!(out, "{}", serde_json::to_string(lb)?)?;
        }
        writeln!(out, "{SECTION_TBS}")?;
        for tb in &self.tbs {
            writeln!(out, "{}", serde_json::to_string(tb)?)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn read(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header != ARCHIVE_HEADER {
            return Err(Error::Version {
                expected: ARCHIVE_HEADER,
                found: header,
            });
        }
        let mut archive = Archive::default();
        let mut section = None;
        for (i, line) in lines.enumerate() {
            let line = line?;
            let at = |e: serde_json::Error| Error::Invalid(format!("archive line {}: {e}", i + 2));
            match line.as_str() {
                SECTION_EVENTS | SECTION_LBS | SECTION_TBS => section = Some(line.clone()),
                _ => match section.as_deref() {
                    Some(SECTION_EVENTS) => archive.event_lines.push(line),
                    Some(SECTION_LBS) => archive.lbs.push(serde_json::from_str(&line).map_err(at)?),
                    Some(SECTION_TBS) => archive.tbs.push(serde_json::from_str(&line).map_err(at)?),
                    _ => {
                        return Err(Error::Invalid(format!(
                            "archive line {}: record outside any section",
                            i + 2
                        )))
                    }
                },
            }
        }
        Ok(archive)
    }
}

/// Collects the range from a data directory. Behaviors are widened to a
/// contiguous id run; a task is included when all its behaviors are.
pub fn export(dir: &Path, range: TimeRange) -> Result<Archive> {
    let mut event_lines = Vec::new();
    let mut stream_has_events = false;
    for entry in read_event_log(dir)? {
        match entry {
            EventLogEntry::Event(e) if range.contains(e.timestamp) => {
                event_lines.push(serialize_event(&e));
                stream_has_events = true;
            }
            EventLogEntry::Event(_) => {}
            EventLogEntry::EndOfStream => {
                if stream_has_events {
                    event_lines.push(END_OF_STREAM.to_string());
                    stream_has_events = false;
                }
            }
        }
    }

    let all = read_lbs(dir)?;
    let in_range: Vec<usize> = (0..all.len())
        .filter(|&i| range.contains(all[i].timestamp))
        .collect();
    let lbs = match (in_range.first(), in_range.last()) {
        (Some(&lo), Some(&hi)) => all[lo..=hi].to_vec(),
        _ => Vec::new(),
    };
    let ids: BTreeSet<u64> = lbs.iter().map(|lb| lb.lb_id).collect();
    let tbs = read_task_state(dir)?
        .tbs
        .into_values()
        .filter(|tb| !tb.lbs.is_empty() && tb.lbs.iter().all(|id| ids.contains(id)))
        .collect();
    Ok(Archive {
        event_lines,
        lbs,
        tbs,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImportSummary {
    pub events: usize,
    pub lbs: usize,
    pub tbs: usize,
}

/// Appends an archive to a data directory. Everything is checked before
/// anything is written, so a rejected import leaves the stores untouched.
pub fn import(dir: &Path, archive: &Archive) -> Result<ImportSummary> {
    let mut store = BehaviorStore::open(dir)?;
    let mut tasks = TaskStore::open(dir)?;

    let mut expected = if store.is_empty() {
        archive.lbs.first().map_or(1, |lb| lb.lb_id)
    } else {
        store.high_water() + 1
    };
    for lb in &archive.lbs {
        if lb.lb_id < expected {
            return Err(Error::Conflict {
                got: lb.lb_id,
                high_water: expected - 1,
            });
        }
        if lb.lb_id > expected {
            return Err(Error::IdGap {
                expected,
                got: lb.lb_id,
            });
        }
        expected += 1;
    }
    let ids: BTreeSet<u64> = archive.lbs.iter().map(|lb| lb.lb_id).collect();
    let state = tasks.state();
    let mut seen = BTreeSet::new();
    let mut in_tb = BTreeSet::new();
    for tb in &archive.tbs {
        if state.tbs.contains_key(&tb.tb_id) || !seen.insert(tb.tb_id) {
            return Err(Error::Conflict {
                got: tb.tb_id,
                high_water: state.next_tb_id() - 1,
            });
        }
        for id in &tb.lbs {
            if !ids.contains(id) || !in_tb.insert(*id) {
                return Err(Error::Integrity(format!(
                    "archived tb {} references lb {id} outside the archive or twice",
                    tb.tb_id
                )));
            }
        }
    }
    let mut last_ts = store.last_event_timestamp();
    for line in &archive.event_lines {
        if line == END_OF_STREAM {
            continue;
        }
        let e =
            crate::model::parse_event(line).map_err(|source| Error::Parse { line: 0, source })?;
        if last_ts.is_some_and(|t| e.timestamp < t) {
            return Err(Error::Stream(format!(
                "archived event {} precedes the store's last event",
                e.event_id
            )));
        }
        last_ts = Some(e.timestamp);
    }

    for line in &archive.event_lines {
        store.append_event_line(line)?;
    }
    store.end_stream()?;
    for lb in &archive.lbs {
        store.append_imported(lb)?;
    }
    store.sync()?;
    if !archive.lbs.is_empty() || !archive.tbs.is_empty() {
        let batch = BatchRecord {
            batch_id: state.batch_count + 1,
            reason: FlushReason::Import,
            new_lbs: archive.lbs.iter().map(|lb| lb.lb_id).collect(),
            carried_in: Vec::new(),
            tbs: archive.tbs.clone(),
            carry_over: Vec::new(),
            noise: ids.difference(&in_tb).copied().collect(),
            pruned: Vec::new(),
        };
        tasks.commit_batch(batch)?;
        tasks.sync()?;
    }
    Ok(ImportSummary {
        events: archive
            .event_lines
            .iter()
            .filter(|l| *l != END_OF_STREAM)
            .count(),
        lbs: archive.lbs.len(),
        tbs: archive.tbs.len(),
    })
}
