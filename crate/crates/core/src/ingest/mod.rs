//! Log-level behavior extraction: preprocessing, context enrichment,
//! object resolution and the durable behavior store.

pub mod enrich;
pub mod extract;
pub mod preprocess;
pub mod store;
pub mod symbols;

pub use enrich::{classify_domain, enrich_context};
pub use extract::{classify_action, extract_lb};
pub use preprocess::{preprocess, PreprocessStats, Preprocessor, DEFAULT_MERGE_GAP_MS};
pub use store::{read_event_log, read_lbs, BehaviorStore, EventLogEntry};
pub use symbols::{resolve_object, SymbolIndex};

use crate::error::Result;
use crate::model::{LogLevelBehavior, RawEvent};

/// Recomputes the behaviors a store should hold from its raw event log.
pub fn replay_lbs(
    entries: &[EventLogEntry],
    idx: &SymbolIndex,
    merge_gap_ms: i64,
    first_id: u64,
) -> Result<Vec<LogLevelBehavior>> {
    let mut pre = Preprocessor::new(merge_gap_ms);
    let mut emitted: Vec<RawEvent> = Vec::new();
    let mut out = Vec::new();
    let mut next_id = first_id;
    let mut drain = |emitted: &mut Vec<RawEvent>, out: &mut Vec<LogLevelBehavior>| {
        for e in emitted.drain(..) {
            if let Some(lb) = extract_lb(&e, idx, next_id) {
                next_id += 1;
                out.push(lb);
            }
        }
    };
    for entry in entries {
        match entry {
            EventLogEntry::Event(e) => pre.push(e.clone(), &mut emitted)?,
            EventLogEntry::EndOfStream => pre.finish(&mut emitted),
        }
        drain(&mut emitted, &mut out);
    }
    pre.finish(&mut emitted);
    drain(&mut emitted, &mut out);
    Ok(out)
}
