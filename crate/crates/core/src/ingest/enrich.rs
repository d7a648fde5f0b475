//! Context enrichment: diff statistics for edits, domain/outcome tags for
//! terminal commands.

use crate::model::{
    count_lines, CommandDomain, CommandInfo, ContextInfo, DiffInfo, EventKind, RawEvent,
};

/// Upper bound on the stored output excerpt, sentinel included.
pub const OUTPUT_EXCERPT_CAP: usize = 4096;
pub const TRUNCATION_SENTINEL: &str = "\n…[truncated]";

/// Exit status line appended by the capture shim: `#exit <code>` or
/// `#exit ?` when the shell did not report one.
const EXIT_MARKER: &str = "#exit ";

/// Builds the context for a preprocessed event. Editing events get a diff,
/// terminal commands a command record; other IDE operations get an empty
/// diff with the payload kept as a note.
pub fn enrich_context(e: &RawEvent) -> ContextInfo {
    let payload = e.payload.as_deref().unwrap_or("");
    match e.kind {
        EventKind::EditInsert => ContextInfo {
            diff: Some(added(payload)),
            ..Default::default()
        },
        EventKind::EditDelete => ContextInfo {
            diff: Some(DiffInfo {
                added_lines: 0,
                removed_lines: count_lines(payload),
                added_text: String::new(),
                removed_text: payload.to_string(),
            }),
            ..Default::default()
        },
        EventKind::EditReplace => {
            let mut diff = added(payload);
            // The replaced text is not on the wire; the range tells how many
            // lines it covered.
            diff.removed_lines = e
                .range
                .map(|r| r.end_line().saturating_sub(r.start_line()) + 1)
                .unwrap_or(0);
            ContextInfo {
                diff: Some(diff),
                ..Default::default()
            }
        }
        EventKind::TerminalCommand => ContextInfo {
            command: Some(command_info(payload)),
            ..Default::default()
        },
        _ => ContextInfo {
            diff: Some(DiffInfo::default()),
            command: None,
            note: e.payload.clone().filter(|p| !p.is_empty()),
        },
    }
}

fn added(text: &str) -> DiffInfo {
    DiffInfo {
        added_lines: count_lines(text),
        removed_lines: 0,
        added_text: text.to_string(),
        removed_text: String::new(),
    }
}

/// Splits a folded command payload into command line, exit code and output.
pub fn command_info(payload: &str) -> CommandInfo {
    let (command_line, rest) = payload.split_once('\n').unwrap_or((payload, ""));
    let mut exit_code = None;
    let mut output = String::with_capacity(rest.len());
    for line in rest.split_inclusive('\n') {
        let bare = line.trim_end_matches(['\n', '\r']);
        if let Some(code) = bare.strip_prefix(EXIT_MARKER) {
            exit_code = code.trim().parse::<i32>().ok();
            continue;
        }
        output.push_str(line);
    }
    CommandInfo {
        command_line: command_line.trim().to_string(),
        domain: classify_domain(command_line),
        success: exit_code == Some(0),
        exit_code,
        output_excerpt: excerpt(output.trim_end_matches(['\n', '\r'])),
    }
}

fn excerpt(text: &str) -> String {
    if text.len() <= OUTPUT_EXCERPT_CAP {
        return text.to_string();
    }
    let mut cut = OUTPUT_EXCERPT_CAP - TRUNCATION_SENTINEL.len();
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    let mut out = text[..cut].to_string();
    out.push_str(TRUNCATION_SENTINEL);
    out
}

/// First-token lookup with a handful of two-token refinements.
pub fn classify_domain(command_line: &str) -> CommandDomain {
    let mut tokens = command_line
        .split_whitespace()
        .skip_while(|t| *t == "sudo" || (t.contains('=') && !t.starts_with('-')));
    let Some(first) = tokens.next() else {
        return CommandDomain::Other;
    };
    let program = first.rsplit('/').next().unwrap_or(first);
    let rest: Vec<&str> = tokens.filter(|t| !t.starts_with('-')).collect();
    let sub = rest.first().copied().unwrap_or("");

    use CommandDomain::*;
    match program {
        "git" | "svn" | "hg" => Vcs,
        "cargo" => match sub {
            "build" | "check" | "clippy" | "fmt" | "doc" => Build,
            "run" => Run,
            "test" | "nextest" | "bench" => Test,
            "add" | "install" | "remove" | "update" | "fetch" => Package,
            _ => Other,
        },
        "npm" | "pnpm" | "yarn" | "bun" => match sub {
            "test" | "t" => Test,
            "install" | "i" | "ci" | "add" | "remove" | "uninstall" => Package,
            "run" => match rest.get(1).copied().unwrap_or("") {
                "build" => Build,
                s if s.starts_with("test") => Test,
                _ => Run,
            },
            "build" => Build,
            "start" | "dev" | "exec" => Run,
            "" if program == "yarn" => Package,
            _ => Other,
        },
        "go" => match sub {
            "build" | "vet" => Build,
            "run" => Run,
            "test" => Test,
            "get" | "mod" | "install" => Package,
            _ => Other,
        },
        "dotnet" => match sub {
            "build" => Build,
            "run" => Run,
            "test" => Test,
            "add" | "restore" => Package,
            _ => Other,
        },
        "mvn" | "gradle" | "gradlew" => match sub {
            "test" => Test,
            _ => Build,
        },
        "python" | "python3" | "py" => match (sub, rest.get(1).copied()) {
            ("pytest", _) | ("unittest", _) => Test,
            ("pip", _) => Package,
            _ => Run,
        },
        "make" | "cmake" | "ninja" | "bazel" | "tsc" | "gcc" | "g++" | "clang" | "clang++"
        | "javac" | "rustc" | "swiftc" | "webpack" | "vite" => Build,
        "pytest" | "jest" | "vitest" | "mocha" | "ctest" | "tox" | "phpunit" | "rspec" => Test,
        "pip" | "pip3" | "conda" | "poetry" | "brew" | "apt" | "apt-get" | "gem" | "composer"
        | "pipenv" | "uv" => Package,
        "cd" | "ls" | "pwd" | "tree" | "find" | "pushd" | "popd" => Navigation,
        "node" | "deno" | "java" | "ruby" | "php" | "swift" | "flutter" => Run,
        _ if first.starts_with("./") => Run,
        _ => Other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Source, TextRange};

    fn cmd(payload: &str) -> RawEvent {
        RawEvent {
            event_id: 1,
            timestamp: 0,
            source: Source::User,
            kind: EventKind::TerminalCommand,
            path: None,
            range: None,
            payload: Some(payload.into()),
        }
    }

    #[test]
    fn failing_cargo_run() {
        let ctx = enrich_context(&cmd("cargo run\nthread 'main' panicked\n#exit 101"));
        let c = ctx.command.unwrap();
        assert_eq!(c.domain, CommandDomain::Run);
        assert!(!c.success);
        assert_eq!(c.exit_code, Some(101));
        assert_eq!(c.output_excerpt, "thread 'main' panicked");
        assert!(ctx.diff.is_none());
    }

    #[test]
    fn successful_commit() {
        let c = command_info("git commit -m x\n#exit 0\n");
        assert_eq!(c.domain, CommandDomain::Vcs);
        assert!(c.success);
    }

    #[test]
    fn missing_exit_code_is_a_flagged_failure() {
        let c = command_info("cargo test\nrunning 1 test\n");
        assert!(!c.success);
        assert!(c.exit_unknown());
        let c = command_info("cargo test\n#exit ?\n");
        assert!(c.exit_unknown());
    }

    #[test]
    fn insert_diff_counts_lines() {
        let e = RawEvent {
            kind: EventKind::EditInsert,
            path: Some("a.rs".into()),
            range: Some(TextRange::new(1, 0, 1, 0)),
            payload: Some("line1\nline2\n".into()),
            ..cmd("")
        };
        let diff = enrich_context(&e).diff.unwrap();
        assert_eq!((diff.added_lines, diff.removed_lines), (2, 0));
    }

    #[test]
    fn domain_table() {
        let cases = [
            ("git status", CommandDomain::Vcs),
            ("svn up", CommandDomain::Vcs),
            ("make -j8", CommandDomain::Build),
            ("cargo build --release", CommandDomain::Build),
            ("mvn package", CommandDomain::Build),
            ("./gradlew assemble", CommandDomain::Build),
            ("npm run build", CommandDomain::Build),
            ("pytest -x tests/", CommandDomain::Test),
            ("cargo test", CommandDomain::Test),
            ("npm test", CommandDomain::Test),
            ("go test ./...", CommandDomain::Test),
            ("pip install requests", CommandDomain::Package),
            ("cargo add serde", CommandDomain::Package),
            ("npm install", CommandDomain::Package),
            ("cd src", CommandDomain::Navigation),
            ("ls -la", CommandDomain::Navigation),
            ("cargo run", CommandDomain::Run),
            ("RUST_LOG=debug cargo run", CommandDomain::Run),
            ("echo hi", CommandDomain::Other),
            ("", CommandDomain::Other),
        ];
        for (line, expected) in cases {
            assert_eq!(classify_domain(line), expected, "{line}");
        }
    }

    #[test]
    fn long_output_is_capped_with_sentinel() {
        let long = format!("cargo build\n{}\n#exit 1", "é".repeat(5000));
        let c = command_info(&long);
        assert!(c.output_excerpt.len() <= OUTPUT_EXCERPT_CAP);
        assert!(c.output_excerpt.ends_with(TRUNCATION_SENTINEL));
    }

    #[test]
    fn shortcut_keeps_its_id() {
        let e = RawEvent {
            kind: EventKind::Shortcut,
            payload: Some("editor.action.formatDocument".into()),
            ..cmd("")
        };
        let ctx = enrich_context(&e);
        assert_eq!(ctx.diff, Some(DiffInfo::default()));
        assert_eq!(ctx.note.as_deref(), Some("editor.action.formatDocument"));
    }
}
