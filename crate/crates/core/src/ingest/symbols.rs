//! Precomputed symbol index and object resolution.
//!
//! Index files start with `#vme-symbols v1`; each following line is a JSON
//! array `[path, "Outer::inner", start_line, end_line]`.

use crate::error::{Error, Result};
use crate::model::{CodeObject, EventKind, RawEvent};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

pub const SYMBOLS_HEADER: &str = "#vme-symbols v1";

/// Object path used for terminal commands without a working directory.
pub const CWD_MARKER: &str = ".";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolEntry {
    pub symbol_path: Vec<String>,
    pub start_line: u32,
    pub end_line: u32,
}

impl SymbolEntry {
    fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }

    fn nests_with(&self, other: &SymbolEntry) -> bool {
        let disjoint = self.end_line < other.start_line || other.end_line < self.start_line;
        let self_inside = other.start_line <= self.start_line && self.end_line <= other.end_line;
        let other_inside = self.start_line <= other.start_line && other.end_line <= self.end_line;
        disjoint || self_inside || other_inside
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolIndex {
    by_path: BTreeMap<String, Vec<SymbolEntry>>,
}

impl SymbolIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.by_path.is_empty()
    }

    pub fn entries(&self, path: &str) -> &[SymbolEntry] {
        self.by_path.get(path).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn insert(
        &mut self,
        path: &str,
        symbol_path: Vec<String>,
        start_line: u32,
        end_line: u32,
    ) -> Result<()> {
        if start_line > end_line {
            return Err(Error::Invalid(format!(
                "symbol {} in {path}: start line {start_line} after end line {end_line}",
                symbol_path.join("::")
            )));
        }
        if symbol_path.is_empty() || symbol_path.iter().any(|s| s.is_empty()) {
            return Err(Error::Invalid(format!(
                "symbol in {path}: empty scope name"
            )));
        }
        let entry = SymbolEntry {
            symbol_path,
            start_line,
            end_line,
        };
        let entries = self.by_path.entry(path.to_string()).or_default();
        if let Some(clash) = entries.iter().find(|e| !e.nests_with(&entry)) {
            return Err(Error::Invalid(format!(
                "symbol {} in {path} partially overlaps {}",
                entry.symbol_path.join("::"),
                clash.symbol_path.join("::")
            )));
        }
        entries.push(entry);
        Ok(())
    }

    pub fn load(reader: impl BufRead) -> Result<Self> {
        let mut index = SymbolIndex::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line != SYMBOLS_HEADER {
                    return Err(Error::Version {
                        expected: SYMBOLS_HEADER,
                        found: line,
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (path, symbols, start, end): (String, String, u32, u32) =
                serde_json::from_str(&line)
                    .map_err(|e| Error::Invalid(format!("symbol index line {}: {e}", i + 1)))?;
            let symbol_path = symbols.split("::").map(str::to_string).collect();
            index.insert(&path, symbol_path, start, end)?;
        }
        Ok(index)
    }

    pub fn write(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{SYMBOLS_HEADER}")?;
        for (path, entries) in &self.by_path {
            for e in entries {
                let record = (path, e.symbol_path.join("::"), e.start_line, e.end_line);
                writeln!(out, "{}", serde_json::to_string(&record)?)?;
            }
        }
        Ok(())
    }

    /// Deepest scope containing `line`; ties go to the narrower span.
    pub fn innermost(&self, path: &str, line: u32) -> Option<&SymbolEntry> {
        self.entries(path)
            .iter()
            .filter(|e| e.contains_line(line))
            .min_by_key(|e| {
                (
                    std::cmp::Reverse(e.symbol_path.len()),
                    e.end_line - e.start_line,
                )
            })
    }
}

/// Resolves the event's file and line to the innermost indexed scope, or
/// a file-level object when nothing covers it.
pub fn resolve_object(e: &RawEvent, idx: &SymbolIndex) -> CodeObject {
    if e.kind == EventKind::TerminalCommand {
        return CodeObject::file(e.path.as_deref().unwrap_or(CWD_MARKER));
    }
    let path = e.path.as_deref().unwrap_or(CWD_MARKER);
    let Some(range) = e.range else {
        return CodeObject::file(path);
    };
    match idx.innermost(path, range.start_line()) {
        Some(entry) => CodeObject {
            path: path.to_string(),
            symbol_path: entry.symbol_path.clone(),
            span: Some((entry.start_line, entry.end_line)),
        },
        None => CodeObject::file(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Source, TextRange};
    use proptest::prelude::*;

    fn edit_at(path: &str, line: u32) -> RawEvent {
        RawEvent {
            event_id: 1,
            timestamp: 0,
            source: Source::User,
            kind: EventKind::EditInsert,
            path: Some(path.into()),
            range: Some(TextRange::new(line, 0, line, 0)),
            payload: Some("x".into()),
        }
    }

    fn sample() -> SymbolIndex {
        let mut idx = SymbolIndex::new();
        idx.insert("src/bar.rs", vec!["Bar".into()], 10, 80)
            .unwrap();
        idx.insert("src/bar.rs", vec!["Bar".into(), "foo".into()], 40, 50)
            .unwrap();
        idx.insert("src/bar.rs", vec!["Bar".into(), "baz".into()], 52, 60)
            .unwrap();
        idx
    }

    #[test]
    fn line_inside_method_resolves_to_method() {
        let obj = resolve_object(&edit_at("src/bar.rs", 42), &sample());
        assert_eq!(obj.symbol_path, vec!["Bar", "foo"]);
        assert_eq!(obj.span, Some((40, 50)));
    }

    #[test]
    fn unindexed_file_is_file_level() {
        let obj = resolve_object(&edit_at("README.md", 1), &sample());
        assert!(obj.symbol_path.is_empty());
        let obj = resolve_object(&edit_at("src/bar.rs", 1), &sample());
        assert!(obj.symbol_path.is_empty());
    }

    #[test]
    fn partial_overlap_is_rejected() {
        let mut idx = sample();
        assert!(idx
            .insert("src/bar.rs", vec!["Other".into()], 70, 90)
            .is_err());
    }

    #[test]
    fn load_and_write_agree() {
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains(r#"["src/bar.rs","Bar::foo",40,50]"#));
        let back = SymbolIndex::load(buf.as_slice()).unwrap();
        assert_eq!(back, sample());
    }

    // Nested spans built from a random tree: each child sits strictly inside
    // its parent.
    fn arb_index() -> impl Strategy<Value = Vec<(Vec<String>, u32, u32)>> {
        proptest::collection::vec((0usize..4, 1u32..20, 0u32..20), 1..12).prop_map(|specs| {
            let mut out: Vec<(Vec<String>, u32, u32)> = Vec::new();
            let mut cursor = 0u32;
            for (i, (depth, len, gap)) in specs.into_iter().enumerate() {
                let parent = out
                    .iter()
                    .rev()
                    .find(|(p, _, _)| p.len() == depth && depth > 0)
                    .cloned();
                match parent {
                    Some((mut path, s, e)) if e - s >= 2 => {
                        let start = s + 1 + (gap % (e - s - 1));
                        let end = (start + len).min(e);
                        path.push(format!("s{i}"));
                        if out.iter().all(|(_, os, oe)| (*os, *oe) != (start, end))
                            && out.iter().all(|(_, os, oe)| {
                                oe < &start
                                    || &end < os
                                    || (os <= &start && &end <= oe)
                                    || (start <= *os && *oe <= end)
                            })
                        {
                            out.push((path, start, end));
                        }
                    }
                    _ => {
                        let start = cursor + gap + 1;
                        let end = start + len * 4;
                        cursor = end;
                        out.push((vec![format!("s{i}")], start, end));
                    }
                }
            }
            out
        })
    }

    proptest! {
        #[test]
        fn innermost_matches_brute_force(entries in arb_index(), line in 0u32..400) {
            let mut idx = SymbolIndex::new();
            for (p, s, e) in &entries {
                idx.insert("f.rs", p.clone(), *s, *e).unwrap();
            }
            // Brute force: among all containing entries, maximal depth wins;
            // a deeper nested scope is always strictly narrower.
            let expected = entries
                .iter()
                .filter(|(_, s, e)| *s <= line && line <= *e)
                .max_by(|a, b| a.0.len().cmp(&b.0.len()).then((b.2 - b.1).cmp(&(a.2 - a.1))))
                .map(|(p, _, _)| p.clone())
                .unwrap_or_default();
            let got = resolve_object(&edit_at("f.rs", line), &idx);
            prop_assert_eq!(got.symbol_path, expected);
            // deterministic
            prop_assert_eq!(resolve_object(&edit_at("f.rs", line), &idx),
                            resolve_object(&edit_at("f.rs", line), &idx));
        }
    }
}
