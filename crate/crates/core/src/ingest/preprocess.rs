//! Provenance filtering, terminal output folding and edit consolidation.

use crate::error::{Error, Result};
use crate::model::{count_lines, EventKind, RawEvent, Source, TextRange, TimestampMs};

/// Maximum pause between keystrokes that still belong to one edit.
pub const DEFAULT_MERGE_GAP_MS: i64 = 2000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessStats {
    pub read: u64,
    /// Events dropped because the user did not initiate them.
    pub filtered: u64,
    /// Edit events absorbed into a preceding edit.
    pub merged: u64,
    /// Terminal output chunks folded into their command.
    pub folded: u64,
}

struct PendingEdit {
    event: RawEvent,
    first_line: u32,
    last_line: u32,
    last_ts: TimestampMs,
}

impl PendingEdit {
    fn new(event: RawEvent) -> Self {
        let (first_line, last_line) = line_hull(&event);
        let last_ts = event.timestamp;
        PendingEdit {
            event,
            first_line,
            last_line,
            last_ts,
        }
    }

    fn accepts(&self, next: &RawEvent, gap_ms: i64) -> bool {
        if next.path != self.event.path || next.timestamp - self.last_ts > gap_ms {
            return false;
        }
        let (first, last) = line_hull(next);
        first <= self.last_line.saturating_add(1) && self.first_line <= last.saturating_add(1)
    }

    fn absorb(&mut self, next: RawEvent) {
        let (first, last) = line_hull(&next);
        self.first_line = self.first_line.min(first);
        self.last_line = self.last_line.max(last);
        self.last_ts = next.timestamp;

        let merged_kind = if self.event.kind == next.kind {
            next.kind
        } else {
            EventKind::EditReplace
        };
        // A replace keeps only the text that ends up in the buffer.
        let carry_text = |kind: EventKind, text: Option<String>| match (merged_kind, kind) {
            (EventKind::EditReplace, EventKind::EditDelete) => String::new(),
            _ => text.unwrap_or_default(),
        };
        let prior = carry_text(self.event.kind, self.event.payload.take());
        let mut payload = prior;
        payload.push_str(&carry_text(next.kind, next.payload));
        self.event.kind = merged_kind;
        self.event.payload = Some(payload);

        let start = self.event.range.unwrap_or(TextRange(first, 0, first, 0));
        let end = next.range.unwrap_or(start);
        self.event.range = Some(TextRange(
            self.first_line,
            start.start_col(),
            self.last_line,
            end.end_col(),
        ));
    }
}

fn line_hull(e: &RawEvent) -> (u32, u32) {
    let range = e.range.unwrap_or_default();
    let lo = range.start_line().min(range.end_line());
    let mut hi = range.start_line().max(range.end_line());
    if e.kind != EventKind::EditDelete {
        let text = e.payload.as_deref().unwrap_or("");
        let extra = count_lines(text).saturating_sub(1) + u32::from(text.ends_with('\n'));
        hi = hi.max(range.start_line().saturating_add(extra));
    }
    (lo, hi)
}

/// Streaming preprocessor. Feed events in capture order with [`push`],
/// then call [`finish`] at end of stream to release held events.
///
/// [`push`]: Preprocessor::push
/// [`finish`]: Preprocessor::finish
pub struct Preprocessor {
    merge_gap_ms: i64,
    pending_edit: Option<PendingEdit>,
    /// Held command plus whether output has been folded into it.
    open_command: Option<(RawEvent, bool)>,
    last_ts: Option<TimestampMs>,
    stats: PreprocessStats,
}

impl Preprocessor {
    pub fn new(merge_gap_ms: i64) -> Self {
        Preprocessor {
            merge_gap_ms,
            pending_edit: None,
            open_command: None,
            last_ts: None,
            stats: PreprocessStats::default(),
        }
    }

    /// Continues counting from `stats` (a new stream on the same pipeline).
    pub fn with_stats(mut self, stats: PreprocessStats) -> Self {
        self.stats = stats;
        self
    }

    pub fn stats(&self) -> PreprocessStats {
        self.stats
    }

    pub fn push(&mut self, event: RawEvent, out: &mut Vec<RawEvent>) -> Result<()> {
        if let Some(last) = self.last_ts {
            if event.timestamp < last {
                return Err(Error::Stream(format!(
                    "event {} at {} precedes previous timestamp {last}",
                    event.event_id, event.timestamp
                )));
            }
        }
        self.last_ts = Some(event.timestamp);
        self.stats.read += 1;

        if event.kind == EventKind::TerminalOutput {
            if let Some((cmd, has_output)) = self.open_command.as_mut() {
                fold_output(cmd, has_output, event.payload.as_deref().unwrap_or(""));
                self.stats.folded += 1;
                return Ok(());
            }
        }
        if event.source != Source::User {
            self.stats.filtered += 1;
            return Ok(());
        }

        if let Some((cmd, _)) = self.open_command.take() {
            out.push(cmd);
        }
        if event.kind.is_edit() {
            match self.pending_edit.as_mut() {
                Some(pending) if pending.accepts(&event, self.merge_gap_ms) => {
                    pending.absorb(event);
                    self.stats.merged += 1;
                }
                _ => {
                    self.flush_edit(out);
                    self.pending_edit = Some(PendingEdit::new(event));
                }
            }
            return Ok(());
        }
        self.flush_edit(out);
        if event.kind == EventKind::TerminalCommand {
            self.open_command = Some((event, false));
        } else {
            out.push(event);
        }
        Ok(())
    }

    pub fn finish(&mut self, out: &mut Vec<RawEvent>) {
        self.flush_edit(out);
        if let Some((cmd, _)) = self.open_command.take() {
            out.push(cmd);
        }
        self.last_ts = None;
    }

    fn flush_edit(&mut self, out: &mut Vec<RawEvent>) {
        if let Some(pending) = self.pending_edit.take() {
            out.push(pending.event);
        }
    }
}

/// Output chunks are concatenated verbatim after the command line.
fn fold_output(cmd: &mut RawEvent, has_output: &mut bool, chunk: &str) {
    let payload = cmd.payload.get_or_insert_with(String::new);
    if !*has_output && !payload.ends_with('\n') {
        payload.push('\n');
    }
    *has_output = true;
    payload.push_str(chunk);
}

/// Runs a whole stream through a fresh [`Preprocessor`].
pub fn preprocess(
    events: impl IntoIterator<Item = RawEvent>,
    merge_gap_ms: i64,
) -> Result<(Vec<RawEvent>, PreprocessStats)> {
    let mut pre = Preprocessor::new(merge_gap_ms);
    let mut out = Vec::new();
    for e in events {
        pre.push(e, &mut out)?;
    }
    pre.finish(&mut out);
    Ok((out, pre.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(id: u64, ts: i64, source: Source, kind: EventKind) -> RawEvent {
        RawEvent {
            event_id: id,
            timestamp: ts,
            source,
            kind,
            path: Some("src/main.rs".into()),
            range: Some(TextRange::new(10, 0, 10, 0)),
            payload: Some(String::new()),
        }
    }

    fn insert(id: u64, ts: i64, line: u32, col: u32, text: &str) -> RawEvent {
        RawEvent {
            range: Some(TextRange::new(line, col, line, col)),
            payload: Some(text.into()),
            ..ev(id, ts, Source::User, EventKind::EditInsert)
        }
    }

    fn terminal(id: u64, ts: i64, source: Source, kind: EventKind, text: &str) -> RawEvent {
        RawEvent {
            path: None,
            range: None,
            payload: Some(text.into()),
            ..ev(id, ts, source, kind)
        }
    }

    #[test]
    fn drops_non_user_events() {
        let events = vec![
            insert(1, 0, 1, 0, "a"),
            ev(2, 10_000, Source::Ide, EventKind::FileSave),
            RawEvent {
                path: Some("other.rs".into()),
                ..insert(3, 20_000, 1, 0, "b")
            },
        ];
        let (out, stats) = preprocess(events, DEFAULT_MERGE_GAP_MS).unwrap();
        assert_eq!(
            out.iter().map(|e| e.event_id).collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert_eq!(stats.filtered, 1);
    }

    #[test]
    fn keystroke_burst_becomes_one_edit() {
        let events: Vec<_> = "hello"
            .chars()
            .enumerate()
            .map(|(i, c)| insert(i as u64 + 1, i as i64 * 300, 4, i as u32, &c.to_string()))
            .collect();
        let (out, stats) = preprocess(events, DEFAULT_MERGE_GAP_MS).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].payload.as_deref(), Some("hello"));
        assert_eq!(out[0].kind, EventKind::EditInsert);
        assert_eq!(out[0].timestamp, 0);
        assert_eq!(stats.merged, 4);
    }

    #[test]
    fn long_pause_or_distant_lines_split_edits() {
        let events = vec![
            insert(1, 0, 4, 0, "a"),
            insert(2, 2_500, 4, 1, "b"),
            insert(3, 2_600, 90, 0, "c"),
        ];
        let (out, _) = preprocess(events, DEFAULT_MERGE_GAP_MS).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn mixed_edits_merge_into_replace() {
        let del = RawEvent {
            payload: Some("x".into()),
            ..ev(2, 100, Source::User, EventKind::EditDelete)
        };
        let events = vec![insert(1, 0, 10, 0, "ab"), del, insert(3, 200, 10, 1, "c")];
        let (out, _) = preprocess(events, DEFAULT_MERGE_GAP_MS).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, EventKind::EditReplace);
        assert_eq!(out[0].payload.as_deref(), Some("abc"));
    }

    #[test]
    fn terminal_output_folds_into_command() {
        let events = vec![
            terminal(1, 0, Source::User, EventKind::TerminalCommand, "cargo test"),
            terminal(
                2,
                100,
                Source::Ide,
                EventKind::TerminalOutput,
                "running 3 tests\n",
            ),
            terminal(
                3,
                200,
                Source::Ide,
                EventKind::TerminalOutput,
                "test a ... ok\n",
            ),
            terminal(4, 300, Source::Ide, EventKind::TerminalOutput, "#exit 0\n"),
            insert(5, 1_000, 1, 0, "x"),
        ];
        let (out, stats) = preprocess(events, DEFAULT_MERGE_GAP_MS).unwrap();
        // Hand-built expectation.
        let expected_payload = "cargo test\nrunning 3 tests\ntest a ... ok\n#exit 0\n";
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].kind, EventKind::TerminalCommand);
        assert_eq!(out[0].payload.as_deref(), Some(expected_payload));
        assert_eq!(stats.folded, 3);
    }

    #[test]
    fn orphan_ide_output_is_dropped() {
        let events = vec![terminal(1, 0, Source::Ide, EventKind::TerminalOutput, "x")];
        let (out, stats) = preprocess(events, DEFAULT_MERGE_GAP_MS).unwrap();
        assert!(out.is_empty());
        assert_eq!(stats.filtered, 1);
    }

    #[test]
    fn out_of_order_is_a_stream_error() {
        let events = vec![insert(1, 100, 1, 0, "a"), insert(2, 50, 1, 1, "b")];
        assert!(matches!(
            preprocess(events, DEFAULT_MERGE_GAP_MS),
            Err(Error::Stream(_))
        ));
    }

    fn arb_edit_stream() -> impl Strategy<Value = Vec<RawEvent>> {
        proptest::collection::vec(
            (
                0i64..5_000,
                0u32..12,
                0usize..2,
                any::<bool>(),
                any::<bool>(),
            ),
            0..40,
        )
        .prop_map(|steps| {
            let mut ts = 0;
            steps
                .into_iter()
                .enumerate()
                .map(|(i, (gap, line, file, newline, nav))| {
                    ts += gap;
                    let mut e =
                        insert(i as u64 + 1, ts, line, 0, if newline { "x\n" } else { "x" });
                    e.path = Some(["a.rs", "b.rs"][file].into());
                    if nav && i % 5 == 0 {
                        e.kind = EventKind::Navigate;
                    }
                    e
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn larger_merge_gap_never_adds_events(
            events in arb_edit_stream(),
            g1 in 0i64..6_000,
            extra in 0i64..6_000,
        ) {
            let (small, _) = preprocess(events.clone(), g1).unwrap();
            let (large, _) = preprocess(events, g1 + extra).unwrap();
            prop_assert!(large.len() <= small.len());
        }
    }
}
