//! Shared domain types: raw capture events, log-level behaviors and
//! task-level behaviors.

mod wire;

pub use wire::{parse_event, serialize_event, EventReader, EventWriter, ParseError, EVENTS_HEADER};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Milliseconds since the Unix epoch.
pub type TimestampMs = i64;

/// Who initiated a captured event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    User,
    Ide,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EditInsert,
    EditDelete,
    EditReplace,
    FileOpen,
    FileClose,
    FileSave,
    Navigate,
    Select,
    TerminalCommand,
    TerminalOutput,
    Shortcut,
    DebugStep,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::EditInsert,
        EventKind::EditDelete,
        EventKind::EditReplace,
        EventKind::FileOpen,
        EventKind::FileClose,
        EventKind::FileSave,
        EventKind::Navigate,
        EventKind::Select,
        EventKind::TerminalCommand,
        EventKind::TerminalOutput,
        EventKind::Shortcut,
        EventKind::DebugStep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::EditInsert => "edit_insert",
            EventKind::EditDelete => "edit_delete",
            EventKind::EditReplace => "edit_replace",
            EventKind::FileOpen => "file_open",
            EventKind::FileClose => "file_close",
            EventKind::FileSave => "file_save",
            EventKind::Navigate => "navigate",
            EventKind::Select => "select",
            EventKind::TerminalCommand => "terminal_command",
            EventKind::TerminalOutput => "terminal_output",
            EventKind::Shortcut => "shortcut",
            EventKind::DebugStep => "debug_step",
        }
    }

    pub fn from_name(name: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == name)
    }

    pub fn is_edit(self) -> bool {
        matches!(
            self,
            EventKind::EditInsert | EventKind::EditDelete | EventKind::EditReplace
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::TerminalCommand | EventKind::TerminalOutput)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(start_line, start_col, end_line, end_col)`, zero- or one-based as
/// delivered by the capture shim; only line ordering matters here.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TextRange(pub u32, pub u32, pub u32, pub u32);

impl TextRange {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Self {
        TextRange(start_line, start_col, end_line, end_col)
    }

    pub fn start_line(&self) -> u32 {
        self.0
    }

    pub fn start_col(&self) -> u32 {
        self.1
    }

    pub fn end_line(&self) -> u32 {
        self.2
    }

    pub fn end_col(&self) -> u32 {
        self.3
    }
}

/// One wire-level occurrence captured from the editor or terminal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub event_id: u64,
    pub timestamp: TimestampMs,
    pub source: Source,
    pub kind: EventKind,
    pub path: Option<String>,
    pub range: Option<TextRange>,
    pub payload: Option<String>,
}

impl RawEvent {
    /// Checks the per-record invariants (edits carry path and range,
    /// terminal events carry a payload).
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.kind.is_edit() {
            if self.path.is_none() {
                return Err("path");
            }
            if self.range.is_none() {
                return Err("range");
            }
        }
        if self.kind.is_terminal() && self.payload.is_none() {
            return Err("payload");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCategory {
    IdeOperation,
    TerminalCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionVerb {
    AddText,
    DeleteText,
    ModifyText,
    Navigate,
    OpenFile,
    SaveFile,
    SelectText,
    UseShortcut,
    Execute,
}

impl ActionVerb {
    pub fn category(self) -> ActionCategory {
        match self {
            ActionVerb::Execute => ActionCategory::TerminalCommand,
            _ => ActionCategory::IdeOperation,
        }
    }

    /// The verb rendered as plain words, used as the embedded action text.
    pub fn phrase(self) -> &'static str {
        match self {
            ActionVerb::AddText => "add text",
            ActionVerb::DeleteText => "delete text",
            ActionVerb::ModifyText => "modify text",
            ActionVerb::Navigate => "navigate",
            ActionVerb::OpenFile => "open file",
            ActionVerb::SaveFile => "save file",
            ActionVerb::SelectText => "select text",
            ActionVerb::UseShortcut => "use shortcut",
            ActionVerb::Execute => "execute command",
        }
    }

    pub fn is_edit(self) -> bool {
        matches!(
            self,
            ActionVerb::AddText | ActionVerb::DeleteText | ActionVerb::ModifyText
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionKind {
    pub category: ActionCategory,
    pub verb: ActionVerb,
}

impl ActionKind {
    pub fn new(verb: ActionVerb) -> Self {
        ActionKind {
            category: verb.category(),
            verb,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.verb.category() == self.category
    }
}

/// The target of an action: a file, optionally narrowed to a named scope.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodeObject {
    pub path: String,
    pub symbol_path: Vec<String>,
    pub span: Option<(u32, u32)>,
}

impl CodeObject {
    pub fn file(path: impl Into<String>) -> Self {
        CodeObject {
            path: path.into(),
            symbol_path: Vec::new(),
            span: None,
        }
    }

    /// `path` or `path::Scope::fn`.
    pub fn display_name(&self) -> String {
        if self.symbol_path.is_empty() {
            self.path.clone()
        } else {
            format!("{}::{}", self.path, self.symbol_path.join("::"))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.symbol_path.iter().all(|s| !s.is_empty())
            && self.span.is_none_or(|(start, end)| start <= end)
    }
}

impl fmt::Display for CodeObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffInfo {
    pub added_lines: u32,
    pub removed_lines: u32,
    pub added_text: String,
    pub removed_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandDomain {
    Build,
    Run,
    Test,
    Vcs,
    Package,
    Navigation,
    Other,
}

impl CommandDomain {
    pub const ALL: [CommandDomain; 7] = [
        CommandDomain::Build,
        CommandDomain::Run,
        CommandDomain::Test,
        CommandDomain::Vcs,
        CommandDomain::Package,
        CommandDomain::Navigation,
        CommandDomain::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandDomain::Build => "build",
            CommandDomain::Run => "run",
            CommandDomain::Test => "test",
            CommandDomain::Vcs => "vcs",
            CommandDomain::Package => "package",
            CommandDomain::Navigation => "navigation",
            CommandDomain::Other => "other",
        }
    }

    pub fn from_name(name: &str) -> Option<CommandDomain> {
        CommandDomain::ALL.into_iter().find(|d| d.as_str() == name)
    }
}

impl fmt::Display for CommandDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandInfo {
    pub command_line: String,
    pub domain: CommandDomain,
    pub success: bool,
    /// `None` when the shell did not report an exit status; `success` is
    /// then false.
    pub exit_code: Option<i32>,
    pub output_excerpt: String,
}

impl CommandInfo {
    pub fn exit_unknown(&self) -> bool {
        self.exit_code.is_none()
    }
}

/// Context of a behavior. IDE operations carry `diff` (all-zero for
/// non-editing operations), terminal commands carry `command`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextInfo {
    pub diff: Option<DiffInfo>,
    pub command: Option<CommandInfo>,
    /// Operation detail for non-editing IDE operations (shortcut id,
    /// selected text).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ContextInfo {
    /// Text embedded for context similarity.
    pub fn text(&self) -> String {
        let mut out = String::new();
        if let Some(diff) = &self.diff {
            out.push_str(&diff.added_text);
            if !diff.removed_text.is_empty() {
                out.push('\n');
                out.push_str(&diff.removed_text);
            }
        }
        if let Some(cmd) = &self.command {
            out.push_str(&cmd.command_line);
            if !cmd.output_excerpt.is_empty() {
                out.push('\n');
                out.push_str(&cmd.output_excerpt);
            }
        }
        if let Some(note) = &self.note {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(note);
        }
        out
    }
}

/// A log-level behavior: `(timestamp, action, object, context)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLevelBehavior {
    pub lb_id: u64,
    pub timestamp: TimestampMs,
    pub action: ActionKind,
    pub object: CodeObject,
    pub context: ContextInfo,
}

impl LogLevelBehavior {
    pub fn is_valid(&self) -> bool {
        let context_matches = match self.action.category {
            ActionCategory::IdeOperation => {
                self.context.diff.is_some() && self.context.command.is_none()
            }
            ActionCategory::TerminalCommand => {
                self.context.command.is_some() && self.context.diff.is_none()
            }
        };
        context_matches && self.action.is_valid() && self.object.is_valid()
    }
}

/// A clustered, summarized episode of related behaviors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLevelBehavior {
    pub tb_id: u64,
    /// Seconds, always `(end_ts - start_ts) / 1000`.
    pub delta_t: f64,
    pub task: String,
    pub lbs: Vec<u64>,
    pub start_ts: TimestampMs,
    pub end_ts: TimestampMs,
    #[serde(default)]
    pub key_objects: Vec<String>,
    /// Summarization failed; the task text is a placeholder to be retried.
    #[serde(default)]
    pub needs_retry: bool,
}

impl TaskLevelBehavior {
    pub const UNSUMMARIZED: &'static str = "(unsummarized)";
}

/// Counts lines the way diffs do: one per newline plus a trailing
/// unterminated line.
pub fn count_lines(text: &str) -> u32 {
    if text.is_empty() {
        return 0;
    }
    let newlines = text.bytes().filter(|b| *b == b'\n').count() as u32;
    newlines + u32::from(!text.ends_with('\n'))
}
