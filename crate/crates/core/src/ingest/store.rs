//! Durable behavior store: the raw event log plus the log-level behaviors
//! derived from it, both append-only under one data directory.

use crate::error::{Error, Result};
use crate::model::{parse_event, serialize_event, LogLevelBehavior, RawEvent, TimestampMs};
use crate::record_log::{read_records, RecordLog};
use std::path::{Path, PathBuf};

pub const EVENTS_LOG: &str = "events.log";
pub const LBS_LOG: &str = "lbs.log";
pub const LBS_HEADER: &str = "#vme-lbs v1";
pub use crate::model::EVENTS_HEADER;

/// Separates capture streams inside `events.log`; preprocessing state does
/// not carry across it.
pub const END_OF_STREAM: &str = "#end-of-stream";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventLogEntry {
    Event(RawEvent),
    EndOfStream,
}

pub struct BehaviorStore {
    dir: PathBuf,
    events: RecordLog,
    lbs: RecordLog,
    high_water: u64,
    lb_count: u64,
    last_event_ts: Option<TimestampMs>,
    /// Whether the current capture stream has unterminated events.
    stream_open: bool,
    first_lb_id: Option<u64>,
    recovered_stream: bool,
}

impl BehaviorStore {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut last_event_ts = None;
        let mut stream_open = false;
        let events = RecordLog::open(&dir.join(EVENTS_LOG), EVENTS_HEADER, |line| {
            if line == END_OF_STREAM {
                stream_open = false;
            } else {
                let e = parse_event(line).map_err(|source| Error::Parse { line: 0, source })?;
                last_event_ts = Some(e.timestamp);
                stream_open = true;
            }
            Ok(())
        })?;
        let mut high_water = 0u64;
        let mut lb_count = 0u64;
        let mut first_lb_id = None;
        let lbs = RecordLog::open(&dir.join(LBS_LOG), LBS_HEADER, |line| {
            let lb: LogLevelBehavior = serde_json::from_str(line)?;
            if lb_count > 0 && lb.lb_id != high_water + 1 {
                return Err(Error::Integrity(format!(
                    "{LBS_LOG}: lb_id {} follows {high_water}",
                    lb.lb_id
                )));
            }
            high_water = lb.lb_id;
            first_lb_id.get_or_insert(lb.lb_id);
            lb_count += 1;
            Ok(())
        })?;
        let mut store = BehaviorStore {
            dir: dir.to_path_buf(),
            events,
            lbs,
            high_water,
            lb_count,
            last_event_ts,
            stream_open: false,
            first_lb_id,
            recovered_stream: stream_open,
        };
        if stream_open {
            // A previous writer died mid-stream; close that stream so replay
            // sees the same boundary the live pipeline now starts from.
            store.end_stream()?;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Last assigned lb_id (0 for an empty store).
    pub fn high_water(&self) -> u64 {
        self.high_water
    }

    pub fn len(&self) -> u64 {
        self.lb_count
    }

    pub fn is_empty(&self) -> bool {
        self.lb_count == 0
    }

    pub fn first_lb_id(&self) -> Option<u64> {
        self.first_lb_id
    }

    /// True when open found a capture stream a crashed writer left
    /// unterminated; behaviors still held in preprocessing were lost and
    /// can be recovered by replaying the event log.
    pub fn recovered_stream(&self) -> bool {
        self.recovered_stream
    }

    pub fn last_event_timestamp(&self) -> Option<TimestampMs> {
        self.last_event_ts
    }

    pub fn append_event(&mut self, e: &RawEvent) -> Result<()> {
        if let Some(last) = self.last_event_ts {
            if e.timestamp < last {
                return Err(Error::Stream(format!(
                    "event {} at {} precedes the store's last event at {last}",
                    e.event_id, e.timestamp
                )));
            }
        }
        self.events.append(&serialize_event(e))?;
        self.last_event_ts = Some(e.timestamp);
        self.stream_open = true;
        Ok(())
    }

    /// Marks the end of the current capture stream (no-op when none is open).
    pub fn end_stream(&mut self) -> Result<()> {
        if self.stream_open {
            self.events.append(END_OF_STREAM)?;
            self.stream_open = false;
        }
        Ok(())
    }

    /// Appends a behavior; its id must be exactly `high_water + 1`.
    pub fn append(&mut self, lb: &LogLevelBehavior) -> Result<()> {
        let expected = self.high_water + 1;
        if lb.lb_id < expected {
            return Err(Error::Conflict {
                got: lb.lb_id,
                high_water: self.high_water,
            });
        }
        if lb.lb_id > expected {
            return Err(Error::IdGap {
                expected,
                got: lb.lb_id,
            });
        }
        self.write_lb(lb)
    }

    /// Like [`append`](Self::append), but an empty store adopts the id of
    /// its first record as the base (archives may start mid-history).
    pub fn append_imported(&mut self, lb: &LogLevelBehavior) -> Result<()> {
        if self.lb_count == 0 && lb.lb_id > 0 {
            return self.write_lb(lb);
        }
        self.append(lb)
    }

    fn write_lb(&mut self, lb: &LogLevelBehavior) -> Result<()> {
        if !lb.is_valid() {
            return Err(Error::Invalid(format!(
                "lb {} violates its invariants",
                lb.lb_id
            )));
        }
        self.lbs.append(&serde_json::to_string(lb)?)?;
        self.first_lb_id.get_or_insert(lb.lb_id);
        self.high_water = lb.lb_id;
        self.lb_count += 1;
        Ok(())
    }

    /// Appends an event log line verbatim (event record or stream marker).
    pub fn append_event_line(&mut self, line: &str) -> Result<()> {
        if line == END_OF_STREAM {
            self.events.append(line)?;
            self.stream_open = false;
            return Ok(());
        }
        let e = parse_event(line).map_err(|source| Error::Parse { line: 0, source })?;
        self.append_event(&e)
    }

    pub fn sync(&mut self) -> Result<()> {
        self.events.sync()?;
        self.lbs.sync()
    }
}

pub fn read_lbs(dir: &Path) -> Result<Vec<LogLevelBehavior>> {
    read_records(&dir.join(LBS_LOG), LBS_HEADER)?
        .iter()
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn read_event_log(dir: &Path) -> Result<Vec<EventLogEntry>> {
    read_records(&dir.join(EVENTS_LOG), EVENTS_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l == END_OF_STREAM {
                Ok(EventLogEntry::EndOfStream)
            } else {
                parse_event(l)
                    .map(EventLogEntry::Event)
                    .map_err(|source| Error::Parse {
                        line: i + 2,
                        source,
                    })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionKind, ActionVerb, CodeObject, ContextInfo, DiffInfo};
    use std::fs;
    use std::io::Write;

    fn lb(id: u64) -> LogLevelBehavior {
        LogLevelBehavior {
            lb_id: id,
            timestamp: id as i64 * 1000,
            action: ActionKind::new(ActionVerb::AddText),
            object: CodeObject::file("a.rs"),
            context: ContextInfo {
                diff: Some(DiffInfo::default()),
                ..Default::default()
            },
        }
    }

    #[test]
    fn append_to_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = BehaviorStore::open(dir.path()).unwrap();
        store.append(&lb(1)).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(read_lbs(dir.path()).unwrap(), vec![lb(1)]);
    }

    #[test]
    fn duplicate_and_gap_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = BehaviorStore::open(dir.path()).unwrap();
        store.append(&lb(1)).unwrap();
        assert!(matches!(store.append(&lb(1)), Err(Error::Conflict { .. })));
        assert!(matches!(store.append(&lb(3)), Err(Error::IdGap { .. })));
        assert_eq!(store.high_water(), 1);
    }

    #[test]
    fn reopen_after_torn_write_keeps_flushed_prefix() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = BehaviorStore::open(dir.path()).unwrap();
            for id in 1..=5 {
                store.append(&lb(id)).unwrap();
            }
        }
        let line = serde_json::to_string(&lb(6)).unwrap();
        fs::OpenOptions::new()
            .append(true)
            .open(dir.path().join(LBS_LOG))
            .unwrap()
            .write_all(&line.as_bytes()[..line.len() / 2])
            .unwrap();

        let mut store = BehaviorStore::open(dir.path()).unwrap();
        assert_eq!(store.high_water(), 5);
        assert_eq!(
            read_lbs(dir.path()).unwrap(),
            (1..=5).map(lb).collect::<Vec<_>>()
        );
        store.append(&lb(6)).unwrap();
        assert_eq!(read_lbs(dir.path()).unwrap().len(), 6);
    }

    #[test]
    fn imported_store_adopts_base() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = BehaviorStore::open(dir.path()).unwrap();
        store.append_imported(&lb(40)).unwrap();
        store.append(&lb(41)).unwrap();
        drop(store);
        let store = BehaviorStore::open(dir.path()).unwrap();
        assert_eq!(store.high_water(), 41);
    }
}
