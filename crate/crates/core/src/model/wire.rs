//! Newline-delimited event records.
//!
//! Each record is a JSON object with the fields in a fixed order:
//! `event_id, timestamp, source, kind, path, range, payload`. Absent
//! optional fields are written as `null`. Files and streams start with the
//! [`EVENTS_HEADER`] line.

use super::{EventKind, RawEvent, Source, TextRange, TimestampMs};
use crate::error::{Error, Result};
use serde_json::{Map, Value};
use std::io::{BufRead, Write};
use thiserror::Error as ThisError;

pub const EVENTS_HEADER: &str = "#vme-events v1";

#[derive(Debug, Clone, PartialEq, Eq, ThisError)]
pub enum ParseError {
    #[error("malformed record at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("record is not an object")]
    NotAnObject,
    #[error("missing field: {0}")]
    MissingField(&'static str),
    #[error("invalid field {field}: {message}")]
    InvalidField {
        field: &'static str,
        message: String,
    },
    #[error("unknown field: {0}")]
    UnknownField(String),
    #[error("unknown event kind: {0}")]
    UnknownKind(String),
}

impl ParseError {
    /// The field the error names, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            ParseError::MissingField(f) | ParseError::InvalidField { field: f, .. } => Some(f),
            ParseError::UnknownField(f) => Some(f),
            ParseError::UnknownKind(_) => Some("kind"),
            _ => None,
        }
    }
}

const FIELDS: [&str; 7] = [
    "event_id",
    "timestamp",
    "source",
    "kind",
    "path",
    "range",
    "payload",
];

pub fn serialize_event(e: &RawEvent) -> String {
    // Derived serialization keeps declaration order and escapes newlines.
    serde_json::to_string(e).expect("raw events always serialize")
}

pub fn parse_event(line: &str) -> std::result::Result<RawEvent, ParseError> {
    let value: Value = serde_json::from_str(line).map_err(|e| {
        let offset = if e.classify() == serde_json::error::Category::Eof {
            line.len()
        } else {
            e.column().saturating_sub(1).min(line.len())
        };
        ParseError::Syntax {
            offset,
            message: e.to_string(),
        }
    })?;
    let obj = value.as_object().ok_or(ParseError::NotAnObject)?;
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(ParseError::UnknownField(extra.clone()));
    }

    let event_id = req_u64(obj, "event_id")?;
    let timestamp = req_i64(obj, "timestamp")?;
    let source = match req_str(obj, "source")? {
        "user" => Source::User,
        "ide" => Source::Ide,
        "agent" => Source::Agent,
        other => {
            return Err(ParseError::InvalidField {
                field: "source",
                message: format!("unknown source {other:?}"),
            })
        }
    };
    let kind_name = req_str(obj, "kind")?;
    let kind =
        EventKind::from_name(kind_name).ok_or_else(|| ParseError::UnknownKind(kind_name.into()))?;
    let path = opt_string(obj, "path")?;
    let range = match present(obj, "range")? {
        Value::Null => None,
        Value::Array(items) if items.len() == 4 => {
            let mut parts = [0u32; 4];
            for (slot, item) in parts.iter_mut().zip(items) {
                *slot = item
                    .as_u64()
                    .and_then(|v| u32::try_from(v).ok())
                    .ok_or_else(|| invalid("range", "expected four non-negative integers"))?;
            }
            Some(TextRange(parts[0], parts[1], parts[2], parts[3]))
        }
        _ => return Err(invalid("range", "expected null or a 4-element array")),
    };
    let payload = opt_string(obj, "payload")?;

    let event = RawEvent {
        event_id,
        timestamp,
        source,
        kind,
        path,
        range,
        payload,
    };
    if let Err(field) = event.validate() {
        return Err(ParseError::InvalidField {
            field,
            message: format!("required for {} events", event.kind),
        });
    }
    Ok(event)
}

fn invalid(field: &'static str, message: &str) -> ParseError {
    ParseError::InvalidField {
        field,
        message: message.to_string(),
    }
}

fn present<'a>(
    obj: &'a Map<String, Value>,
    field: &'static str,
) -> std::result::Result<&'a Value, ParseError> {
    obj.get(field).ok_or(ParseError::MissingField(field))
}

fn req_u64(obj: &Map<String, Value>, field: &'static str) -> std::result::Result<u64, ParseError> {
    present(obj, field)?
        .as_u64()
        .ok_or_else(|| invalid(field, "expected a non-negative integer"))
}

fn req_i64(obj: &Map<String, Value>, field: &'static str) -> std::result::Result<i64, ParseError> {
    present(obj, field)?
        .as_i64()
        .ok_or_else(|| invalid(field, "expected an integer"))
}

fn req_str<'a>(
    obj: &'a Map<String, Value>,
    field: &'static str,
) -> std::result::Result<&'a str, ParseError> {
    present(obj, field)?
        .as_str()
        .ok_or_else(|| invalid(field, "expected a string"))
}

fn opt_string(
    obj: &Map<String, Value>,
    field: &'static str,
) -> std::result::Result<Option<String>, ParseError> {
    match present(obj, field)? {
        Value::Null => Ok(None),
        Value::String(s) => Ok(Some(s.clone())),
        _ => Err(invalid(field, "expected null or a string")),
    }
}

/// Reads a versioned event stream and enforces the per-stream ordering
/// invariants.
pub struct EventReader<R> {
    inner: R,
    line_no: usize,
    header_checked: bool,
    last: Option<(u64, TimestampMs)>,
    buf: String,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(inner: R) -> Self {
        EventReader {
            inner,
            line_no: 0,
            header_checked: false,
            last: None,
            buf: String::new(),
        }
    }

    /// Line number of the most recently read line (1-based).
    pub fn line_no(&self) -> usize {
        self.line_no
    }

    fn next_line(&mut self) -> Result<Option<&str>> {
        self.buf.clear();
        let n = self.inner.read_line(&mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        let trimmed = self.buf.strip_suffix('\n').unwrap_or(&self.buf);
        let trimmed = trimmed.strip_suffix('\r').unwrap_or(trimmed);
        Ok(Some(trimmed))
    }

    pub fn check_header(&mut self) -> Result<()> {
        if self.header_checked {
            return Ok(());
        }
        self.header_checked = true;
        match self.next_line()? {
            Some(EVENTS_HEADER) => Ok(()),
            Some(other) => Err(Error::Version {
                expected: EVENTS_HEADER,
                found: other.to_string(),
            }),
            None => Err(Error::Version {
                expected: EVENTS_HEADER,
                found: String::new(),
            }),
        }
    }

    pub fn next_event(&mut self) -> Result<Option<RawEvent>> {
        self.check_header()?;
        loop {
            let line_no = self.line_no + 1;
            let Some(line) = self.next_line()? else {
                return Ok(None);
            };
            if line.trim().is_empty() {
                continue;
            }
            let event = parse_event(line).map_err(|source| Error::Parse {
                line: line_no,
                source,
            })?;
            if let Some((id, ts)) = self.last {
                if event.event_id <= id {
                    return Err(Error::Stream(format!(
                        "line {line_no}: event_id {} does not increase (previous {id})",
                        event.event_id
                    )));
                }
                if event.timestamp < ts {
                    return Err(Error::Stream(format!(
                        "line {line_no}: timestamp {} precedes previous {ts}",
                        event.timestamp
                    )));
                }
            }
            self.last = Some((event.event_id, event.timestamp));
            return Ok(Some(event));
        }
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<RawEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_event().transpose()
    }
}

/// Writes a versioned event stream.
pub struct EventWriter<W: Write> {
    inner: W,
}

impl<W: Write> EventWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        writeln!(inner, "{EVENTS_HEADER}")?;
        Ok(EventWriter { inner })
    }

    pub fn write(&mut self, event: &RawEvent) -> Result<()> {
        writeln!(self.inner, "{}", serialize_event(event))?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn terminal(id: u64, payload: &str) -> RawEvent {
        RawEvent {
            event_id: id,
            timestamp: 1_700_000_000_000,
            source: Source::User,
            kind: EventKind::TerminalCommand,
            path: None,
            range: None,
            payload: Some(payload.to_string()),
        }
    }

    #[test]
    fn minimal_terminal_event_has_all_fields_in_order() {
        let line = serialize_event(&terminal(7, "cargo run"));
        assert_eq!(
            line,
            r#"{"event_id":7,"timestamp":1700000000000,"source":"user","kind":"terminal_command","path":null,"range":null,"payload":"cargo run"}"#
        );
    }

    #[test]
    fn multiline_payload_stays_on_one_line() {
        let e = terminal(1, "echo a\nb\r\nc");
        let line = serialize_event(&e);
        assert!(!line.contains('\n'));
        assert_eq!(parse_event(&line).unwrap(), e);
    }

    #[test]
    fn missing_timestamp_is_named() {
        let line = r#"{"event_id":1,"source":"user","kind":"navigate","path":"a.rs","range":null,"payload":null}"#;
        let err = parse_event(line).unwrap_err();
        assert_eq!(err.to_string(), "missing field: timestamp");
        assert_eq!(err.field(), Some("timestamp"));
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let line = r#"{"event_id":1,"timestamp":0,"source":"user","kind":"telepathy","path":null,"range":null,"payload":null}"#;
        assert_eq!(
            parse_event(line).unwrap_err(),
            ParseError::UnknownKind("telepathy".into())
        );
    }

    #[test]
    fn edit_without_range_is_rejected() {
        let line = r#"{"event_id":1,"timestamp":0,"source":"user","kind":"edit_insert","path":"a.rs","range":null,"payload":"x"}"#;
        assert_eq!(parse_event(line).unwrap_err().field(), Some("range"));
    }

    #[test]
    fn every_truncation_reports_its_offset() {
        let line = serialize_event(&RawEvent {
            event_id: 3,
            timestamp: 5,
            source: Source::Ide,
            kind: EventKind::EditReplace,
            path: Some("src/ü.rs".into()),
            range: Some(TextRange::new(1, 2, 3, 4)),
            payload: Some("é\n".into()),
        });
        for cut in (0..line.len()).filter(|i| line.is_char_boundary(*i)) {
            match parse_event(&line[..cut]) {
                Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, cut),
                other => panic!("cut {cut}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn reader_checks_header_and_order() {
        let good = format!(
            "{EVENTS_HEADER}\n{}\n{}\n",
            serialize_event(&terminal(1, "ls")),
            serialize_event(&terminal(2, "ls"))
        );
        let events: Vec<_> = EventReader::new(good.as_bytes())
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(events.len(), 2);

        let v2 = "#vme-events v2\n";
        let err = EventReader::new(v2.as_bytes()).next().unwrap().unwrap_err();
        assert!(matches!(err, Error::Version { .. }));

        let backwards = format!(
            "{EVENTS_HEADER}\n{}\n{}\n",
            serialize_event(&terminal(2, "ls")),
            serialize_event(&terminal(1, "ls"))
        );
        let mut reader = EventReader::new(backwards.as_bytes());
        assert!(reader.next().unwrap().is_ok());
        assert!(matches!(reader.next().unwrap(), Err(Error::Stream(_))));
    }

    pub(crate) fn arb_event() -> impl Strategy<Value = RawEvent> {
        let kind = proptest::sample::select(EventKind::ALL.to_vec());
        let source = prop_oneof![Just(Source::User), Just(Source::Ide), Just(Source::Agent)];
        (
            any::<u64>(),
            any::<i64>(),
            source,
            kind,
            proptest::option::of("[a-zA-Z0-9_/.ü -]{0,24}"),
            proptest::option::of(any::<(u32, u32, u32, u32)>()),
            proptest::option::of(any::<String>()),
        )
            .prop_map(|(id, ts, source, kind, path, range, payload)| {
                let mut e = RawEvent {
                    event_id: id,
                    timestamp: ts,
                    source,
                    kind,
                    path,
                    range: range.map(|(a, b, c, d)| TextRange(a, b, c, d)),
                    payload,
                };
                if kind.is_edit() {
                    e.path.get_or_insert_with(|| "f.rs".into());
                    e.range.get_or_insert(TextRange(0, 0, 0, 0));
                }
                if kind.is_terminal() {
                    e.payload.get_or_insert_with(String::new);
                }
                e
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn round_trip_is_identity_and_canonical(e in arb_event()) {
            let line = serialize_event(&e);
            prop_assert!(!line.contains('\n'));
            let back = parse_event(&line).unwrap();
            prop_assert_eq!(&back, &e);
            prop_assert_eq!(serialize_event(&back), line);
        }
    }
}
