use super::enrich::enrich_context;
use super::symbols::{resolve_object, SymbolIndex};
use crate::model::{ActionKind, ActionVerb, EventKind, LogLevelBehavior, RawEvent};

/// Rule table from raw event kinds to developer actions. Kinds without a
/// developer action (closing a file, stepping a debugger, stray terminal
/// output) map to `None`.
pub fn classify_action(kind: EventKind) -> Option<ActionVerb> {
    Some(match kind {
        EventKind::EditInsert => ActionVerb::AddText,
        EventKind::EditDelete => ActionVerb::DeleteText,
        EventKind::EditReplace => ActionVerb::ModifyText,
        EventKind::FileOpen => ActionVerb::OpenFile,
        EventKind::FileSave => ActionVerb::SaveFile,
        EventKind::Navigate => ActionVerb::Navigate,
        EventKind::Select => ActionVerb::SelectText,
        EventKind::Shortcut => ActionVerb::UseShortcut,
        EventKind::TerminalCommand => ActionVerb::Execute,
        EventKind::FileClose | EventKind::DebugStep | EventKind::TerminalOutput => return None,
    })
}

/// Turns one preprocessed event into a log-level behavior. Returns `None`
/// for unclassifiable kinds; callers count those.
pub fn extract_lb(e: &RawEvent, idx: &SymbolIndex, lb_id: u64) -> Option<LogLevelBehavior> {
    let verb = classify_action(e.kind)?;
    Some(LogLevelBehavior {
        lb_id,
        timestamp: e.timestamp,
        action: ActionKind::new(verb),
        object: resolve_object(e, idx),
        context: enrich_context(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionCategory, Source, TextRange};

    #[test]
    fn insert_becomes_add_text_with_diff() {
        let e = RawEvent {
            event_id: 1,
            timestamp: 5,
            source: Source::User,
            kind: EventKind::EditInsert,
            path: Some("src/a.rs".into()),
            range: Some(TextRange::new(3, 0, 3, 0)),
            payload: Some("fn a() {}\n".into()),
        };
        let lb = extract_lb(&e, &SymbolIndex::new(), 1).unwrap();
        assert_eq!(lb.action.verb, ActionVerb::AddText);
        assert!(lb.context.diff.is_some());
        assert!(lb.is_valid());
    }

    #[test]
    fn command_becomes_execute_on_cwd() {
        let e = RawEvent {
            event_id: 1,
            timestamp: 5,
            source: Source::User,
            kind: EventKind::TerminalCommand,
            path: None,
            range: None,
            payload: Some("cargo run\n#exit 0".into()),
        };
        let lb = extract_lb(&e, &SymbolIndex::new(), 1).unwrap();
        assert_eq!(lb.action.category, ActionCategory::TerminalCommand);
        assert_eq!(lb.object.path, ".");
        assert!(lb.context.command.is_some());
        assert!(lb.is_valid());
    }

    #[test]
    fn close_and_debug_are_unclassified() {
        assert_eq!(classify_action(EventKind::FileClose), None);
        assert_eq!(classify_action(EventKind::DebugStep), None);
    }
}
