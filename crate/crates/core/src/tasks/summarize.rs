//! Three-stage task summarization: key-object selection (LLM), snippet
//! retrieval (file reads), task synthesis (LLM).

use crate::error::{Error, Result};
use crate::llm::LlmClient;
use crate::model::{CodeObject, LogLevelBehavior, TaskLevelBehavior};
use crate::prompts;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Component, Path, PathBuf};

pub const SECTION_BEHAVIORS: &str = "Behaviors:";
pub const SECTION_CANDIDATES: &str = "Candidates:";
pub const SECTION_KEY_OBJECTS: &str = "Key objects:";
pub const SECTION_SNIPPETS: &str = "Snippets:";
pub const SECTION_COMMANDS: &str = "Commands:";
pub const OBJECT_PREFIX: &str = "OBJECT:";
pub const RATIONALE_PREFIX: &str = "RATIONALE:";
/// Prefix of command-output lines inside the Commands section.
pub const OUTPUT_PREFIX: &str = "  | ";
pub const SNIPPET_CAP: usize = 8 * 1024;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyObjectSelection {
    pub objects: Vec<CodeObject>,
    pub rationale: String,
    /// The completion named no objects at all.
    pub unparseable: bool,
    /// Names the completion gave that match nothing in the batch.
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub object: CodeObject,
    pub text: String,
    pub missing: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct ObjectStats {
    first_seen: usize,
    edits: usize,
    touches: usize,
}

/// Distinct objects of the behaviors in order of first appearance, with
/// edit and touch counts.
fn candidates(lbs: &[LogLevelBehavior]) -> Vec<(CodeObject, usize, usize)> {
    let mut stats: BTreeMap<&CodeObject, ObjectStats> = BTreeMap::new();
    for (i, lb) in lbs.iter().enumerate() {
        let s = stats.entry(&lb.object).or_insert(ObjectStats {
            first_seen: i,
            ..Default::default()
        });
        s.touches += 1;
        if lb.action.verb.is_edit() {
            s.edits += 1;
        }
    }
    let mut out: Vec<_> = stats.into_iter().collect();
    out.sort_by_key(|(_, s)| s.first_seen);
    out.into_iter()
        .map(|(o, s)| (o.clone(), s.edits, s.touches))
        .collect()
}

fn describe_lb(lb: &LogLevelBehavior, start_ts: i64) -> String {
    let offset_s = (lb.timestamp - start_ts) / 1000;
    let mut line = format!(
        "- [lb {}] t+{offset_s}s {} {}",
        lb.lb_id,
        lb.action.verb.phrase(),
        lb.object.display_name()
    );
    if let Some(cmd) = &lb.context.command {
        let _ = write!(line, " `{}` -> {}", cmd.command_line, outcome(cmd));
    } else if let Some(diff) = &lb.context.diff {
        if lb.action.verb.is_edit() {
            let _ = write!(line, " (+{}/-{})", diff.added_lines, diff.removed_lines);
        }
    }
    line
}

fn outcome(cmd: &crate::model::CommandInfo) -> String {
    match cmd.exit_code {
        _ if cmd.success => "ok".to_string(),
        Some(code) => format!("failed (exit {code})"),
        None => "failed (exit unknown)".to_string(),
    }
}

fn behaviors_section(lbs: &[LogLevelBehavior]) -> String {
    let start = lbs.first().map_or(0, |lb| lb.timestamp);
    let mut out = String::from(SECTION_BEHAVIORS);
    for lb in lbs {
        out.push('\n');
        out.push_str(&describe_lb(lb, start));
    }
    out
}

pub fn key_objects_prompt(lbs: &[LogLevelBehavior]) -> String {
    let mut out = behaviors_section(lbs);
    out.push_str("\n\n");
    out.push_str(SECTION_CANDIDATES);
    for (object, edits, touches) in candidates(lbs) {
        let _ = write!(
            out,
            "\n- {} | edits={edits} touches={touches}",
            object.display_name()
        );
    }
    out.push('\n');
    out
}

/// Maps the names in a stage-1 completion back to objects of the batch.
pub fn parse_key_objects(completion: &str, lbs: &[LogLevelBehavior]) -> KeyObjectSelection {
    let cands = candidates(lbs);
    let mut sel = KeyObjectSelection::default();
    let mut named_any = false;
    let mut rationale = Vec::new();
    for raw in completion.lines() {
        let line = raw.trim().trim_start_matches("- ").trim();
        if let Some(rest) = line.strip_prefix(RATIONALE_PREFIX) {
            rationale.push(rest.trim().to_string());
            continue;
        }
        let Some(name) = line.strip_prefix(OBJECT_PREFIX) else {
            continue;
        };
        let name = name.trim().trim_matches('`');
        if name.is_empty() {
            continue;
        }
        named_any = true;
        let hit = cands
            .iter()
            .find(|(o, _, _)| o.display_name() == name)
            .or_else(|| cands.iter().find(|(o, _, _)| o.path == name));
        match hit {
            Some((o, _, _)) if !sel.objects.contains(o) => sel.objects.push(o.clone()),
            Some(_) => {}
            None => {
                log::warn!("key-object selection names {name:?}, which is not in the batch");
                sel.dropped.push(name.to_string());
            }
        }
    }
    sel.rationale = rationale.join(" ");
    sel.unparseable = !named_any;
    sel
}

pub fn select_key_objects(
    lbs: &[LogLevelBehavior],
    client: &dyn LlmClient,
) -> Result<KeyObjectSelection> {
    let completion = client.complete(prompts::KEY_OBJECTS, &key_objects_prompt(lbs))?;
    let sel = parse_key_objects(&completion, lbs);
    if sel.unparseable {
        log::warn!("key-object completion named no objects; summarizing from context only");
    }
    Ok(sel)
}

/// Resolves a workspace-relative path under `root`, refusing anything that
/// would leave it.
pub fn contained_path(root: &Path, rel: &str) -> Result<PathBuf> {
    let rel_path = Path::new(rel);
    let mut depth = 0usize;
    for c in rel_path.components() {
        match c {
            Component::Normal(_) => depth += 1,
            Component::CurDir => {}
            Component::ParentDir if depth > 0 => depth -= 1,
            _ => return Err(Error::Containment(rel.to_string())),
        }
    }
    let full = root.join(rel_path);
    if let (Ok(real_root), Ok(real)) = (root.canonicalize(), full.canonicalize()) {
        if !real.starts_with(&real_root) {
            return Err(Error::Containment(rel.to_string()));
        }
    }
    Ok(full)
}

fn cap_text(mut text: String, cap: usize) -> (String, bool) {
    if text.len() <= cap {
        return (text, false);
    }
    let mut cut = cap;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    text.truncate(cut);
    (text, true)
}

/// Reads one object's span (1-based inclusive lines) or the head of its file.
pub fn read_snippet(root: &Path, object: &CodeObject) -> Result<Snippet> {
    let path = contained_path(root, &object.path)?;
    let Ok(bytes) = fs::read(&path) else {
        return Ok(Snippet {
            object: object.clone(),
            text: String::new(),
            missing: true,
            truncated: false,
        });
    };
    let content = String::from_utf8_lossy(&bytes);
    let text = match object.span {
        Some((start, end)) => {
            let skip = start.saturating_sub(1) as usize;
            let take = (end.max(start) - start.max(1) + 1) as usize;
            content
                .lines()
                .skip(skip)
                .take(take)
                .collect::<Vec<_>>()
                .join("\n")
        }
        None => content.into_owned(),
    };
    let (text, truncated) = cap_text(text, SNIPPET_CAP);
    Ok(Snippet {
        object: object.clone(),
        text,
        missing: false,
        truncated,
    })
}

pub fn retrieve_snippets(sel: &KeyObjectSelection, root: &Path) -> Result<Vec<Snippet>> {
    sel.objects.iter().map(|o| read_snippet(root, o)).collect()
}

pub fn synthesis_prompt(
    lbs: &[LogLevelBehavior],
    sel: &KeyObjectSelection,
    snippets: &[Snippet],
) -> String {
    let mut out = behaviors_section(lbs);
    out.push_str("\n\n");
    out.push_str(SECTION_KEY_OBJECTS);
    for o in &sel.objects {
        let _ = write!(out, "\n- {}", o.display_name());
    }
    out.push_str("\n\n");
    out.push_str(SECTION_SNIPPETS);
    for s in snippets {
        let name = s.object.display_name();
        match (s.missing, s.object.span) {
            (true, _) => {
                let _ = write!(out, "\n--- {name} (missing)");
            }
            (false, Some((a, b))) => {
                let _ = write!(out, "\n--- {name} (lines {a}-{b})\n{}", s.text);
            }
            (false, None) => {
                let _ = write!(out, "\n--- {name}\n{}", s.text);
            }
        }
        if s.truncated {
            out.push_str("\n[snippet truncated]");
        }
    }
    out.push_str("\n\n");
    out.push_str(SECTION_COMMANDS);
    for lb in lbs {
        let Some(cmd) = &lb.context.command else {
            continue;
        };
        let _ = write!(
            out,
            "\n- [{}] `{}` -> {}",
            cmd.domain,
            cmd.command_line,
            outcome(cmd)
        );
        for line in cmd.output_excerpt.lines() {
            out.push('\n');
            out.push_str(OUTPUT_PREFIX);
            out.push_str(line);
        }
    }
    out.push('\n');
    out
}

/// Trims a completion to at most two sentences on one line.
pub fn normalize_summary(completion: &str) -> String {
    let flat = completion.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut ends = 0;
    let chars: Vec<(usize, char)> = flat.char_indices().collect();
    for (i, (pos, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|(_, n)| *n == ' ') {
            ends += 1;
            if ends == 2 {
                return flat[..pos + c.len_utf8()].to_string();
            }
        }
    }
    flat
}

pub fn synthesize_task(
    lbs: &[LogLevelBehavior],
    sel: &KeyObjectSelection,
    snippets: &[Snippet],
    client: &dyn LlmClient,
) -> Result<String> {
    let completion = client.complete(prompts::SYNTHESIZE, &synthesis_prompt(lbs, sel, snippets))?;
    let summary = normalize_summary(&completion);
    if summary.is_empty() {
        return Err(Error::Llm {
            client_id: client.client_id().to_string(),
            message: "empty summary".into(),
        });
    }
    Ok(summary)
}

/// Runs all three stages and fills in the TB's task. Client failures leave
/// the placeholder task and set the retry flag.
pub fn summarize_tb(
    tb: &mut TaskLevelBehavior,
    lbs: &[LogLevelBehavior],
    client: &dyn LlmClient,
    workspace_root: Option<&Path>,
) {
    let attempt = || -> Result<(String, Vec<String>)> {
        let sel = select_key_objects(lbs, client)?;
        let mut snippets = Vec::new();
        if let Some(root) = workspace_root {
            for o in &sel.objects {
                match read_snippet(root, o) {
                    Ok(s) => snippets.push(s),
                    Err(e) => log::warn!("skipping snippet: {e}"),
                }
            }
        }
        let task = synthesize_task(lbs, &sel, &snippets, client)?;
        Ok((
            task,
            sel.objects.iter().map(CodeObject::display_name).collect(),
        ))
    };
    match attempt() {
        Ok((task, key_objects)) => {
            tb.task = task;
            tb.key_objects = key_objects;
            tb.needs_retry = false;
        }
        Err(e) => {
            log::warn!("summarization of tb {} failed: {e}", tb.tb_id);
            tb.task = TaskLevelBehavior::UNSUMMARIZED.to_string();
            tb.key_objects.clear();
            tb.needs_retry = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockLlmClient;
    use crate::model::{ActionKind, ActionVerb, ContextInfo, DiffInfo};

    fn edit(id: u64, ts: i64, path: &str) -> LogLevelBehavior {
        LogLevelBehavior {
            lb_id: id,
            timestamp: ts,
            action: ActionKind::new(ActionVerb::AddText),
            object: CodeObject::file(path),
            context: ContextInfo {
                diff: Some(DiffInfo {
                    added_lines: 1,
                    added_text: "x\n".into(),
                    ..Default::default()
                }),
                ..Default::default()
            },
        }
    }

    #[test]
    fn hallucinated_objects_are_dropped() {
        let lbs = vec![edit(1, 0, "src/a.rs"), edit(2, 10, "src/b.rs")];
        let sel = parse_key_objects("OBJECT: src/zzz.rs\nOBJECT: src/b.rs", &lbs);
        assert_eq!(sel.objects, vec![CodeObject::file("src/b.rs")]);
        assert_eq!(sel.dropped, vec!["src/zzz.rs"]);
        assert!(!sel.unparseable);

        let sel = parse_key_objects("OBJECT: /etc/hosts", &lbs);
        assert!(sel.objects.is_empty() && !sel.unparseable);

        let sel = parse_key_objects("I think it is a.rs", &lbs);
        assert!(sel.objects.is_empty() && sel.unparseable);
    }

    #[test]
    fn mock_selects_the_most_edited_object() {
        let lbs = vec![
            edit(1, 0, "src/a.rs"),
            edit(2, 10, "src/b.rs"),
            edit(3, 20, "src/b.rs"),
        ];
        let sel = select_key_objects(&lbs, &MockLlmClient::new()).unwrap();
        assert_eq!(sel.objects, vec![CodeObject::file("src/b.rs")]);
    }

    #[test]
    fn snippets_respect_spans_and_containment() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = (1..=30).map(|i| format!("line {i}\n")).collect();
        fs::write(dir.path().join("f.rs"), body).unwrap();
        let mut o = CodeObject::file("f.rs");
        o.span = Some((10, 20));
        let s = read_snippet(dir.path(), &o).unwrap();
        let lines: Vec<&str> = s.text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "line 10");
        assert_eq!(lines[10], "line 20");

        let gone = read_snippet(dir.path(), &CodeObject::file("deleted.rs")).unwrap();
        assert!(gone.missing && gone.text.is_empty());

        for bad in ["../../etc/passwd", "/etc/passwd", "a/../../x"] {
            let err = read_snippet(dir.path(), &CodeObject::file(bad)).unwrap_err();
            assert!(matches!(err, Error::Containment(_)), "{bad}");
        }
        assert!(contained_path(dir.path(), "a/../f.rs").is_ok());
    }

    #[test]
    fn snippets_are_capped() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("big.txt"), "é".repeat(10_000)).unwrap();
        let s = read_snippet(dir.path(), &CodeObject::file("big.txt")).unwrap();
        assert!(s.truncated);
        assert!(s.text.len() <= SNIPPET_CAP);
    }

    #[test]
    fn summaries_keep_two_sentences() {
        assert_eq!(
            normalize_summary("  One.  Two!\nThree? "),
            "One. Two!".to_string()
        );
        assert_eq!(
            normalize_summary("Edited v1.2 config"),
            "Edited v1.2 config"
        );
    }
}
