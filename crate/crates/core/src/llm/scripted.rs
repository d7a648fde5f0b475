//! Rule-based stand-in for a language model. It reads the structured
//! prompts the pipeline emits and answers each stage deterministically.

use crate::prompts::Stage;
use crate::qa::compose::{SECTION_PERSONA, SECTION_QUESTION, SECTION_WORKSPACE};
use crate::tasks::summarize::{
    OUTPUT_PREFIX, SECTION_BEHAVIORS, SECTION_CANDIDATES, SECTION_COMMANDS, SECTION_KEY_OBJECTS,
};
use regex::Regex;
use std::collections::BTreeMap;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedResponder;

impl ScriptedResponder {
    pub fn respond(&self, system_prompt: &str, user_prompt: &str) -> String {
        match Stage::of(system_prompt) {
            Stage::KeyObjects => key_objects(user_prompt),
            Stage::Synthesize => synthesize(user_prompt),
            Stage::Router => route(system_prompt, user_prompt),
            Stage::Answer => answer(user_prompt),
            Stage::Unknown => String::new(),
        }
    }
}

/// Lines of the section starting with `heading`, up to the next blank line.
fn section<'a>(text: &'a str, heading: &str) -> Vec<&'a str> {
    let mut lines = text.lines();
    if !lines.by_ref().any(|l| l.trim_end() == heading) {
        return Vec::new();
    }
    lines.take_while(|l| !l.trim().is_empty()).collect()
}

/// Lines after a markdown-style heading, up to the next heading.
fn block<'a>(text: &'a str, heading: &str) -> Option<Vec<&'a str>> {
    let mut lines = text.lines();
    lines.by_ref().find(|l| l.trim_end() == heading)?;
    Some(lines.take_while(|l| !l.starts_with("## ")).collect())
}

fn key_objects(prompt: &str) -> String {
    let mut best: Option<(&str, usize, usize)> = None;
    for line in section(prompt, SECTION_CANDIDATES) {
        let Some(rest) = line.strip_prefix("- ") else {
            continue;
        };
        let Some((name, counts)) = rest.rsplit_once(" | ") else {
            continue;
        };
        let mut edits = 0;
        let mut touches = 0;
        for part in counts.split_whitespace() {
            if let Some(v) = part.strip_prefix("edits=") {
                edits = v.parse().unwrap_or(0);
            } else if let Some(v) = part.strip_prefix("touches=") {
                touches = v.parse().unwrap_or(0);
            }
        }
        if best.is_none_or(|(_, e, t)| (edits, touches) > (e, t)) {
            best = Some((name, edits, touches));
        }
    }
    match best {
        Some((name, edits, _)) if edits > 0 => {
            format!("OBJECT: {name}\nRATIONALE: most edited object in the cluster")
        }
        Some((name, _, _)) => format!("OBJECT: {name}\nRATIONALE: most visited object"),
        None => String::new(),
    }
}

struct Behavior<'a> {
    verb: &'a str,
    object: &'a str,
}

fn behavior_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^- \[lb \d+\] t\+\d+s (add text|delete text|modify text|navigate|open file|save file|select text|use shortcut|execute command) (\S+)",
        )
        .unwrap()
    })
}

fn exception_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:[a-z_][\w]*\.)*([A-Z]\w*(?:Exception|Error))\b").unwrap())
}

struct Command<'a> {
    domain: &'a str,
    line: &'a str,
    failed: bool,
    output: Vec<&'a str>,
}

fn commands(prompt: &str) -> Vec<Command<'_>> {
    let mut out: Vec<Command> = Vec::new();
    for line in section(prompt, SECTION_COMMANDS) {
        if let Some(text) = line.strip_prefix(OUTPUT_PREFIX) {
            if let Some(last) = out.last_mut() {
                last.output.push(text);
            }
            continue;
        }
        let Some(rest) = line.strip_prefix("- [") else {
            continue;
        };
        let Some((domain, rest)) = rest.split_once("] ") else {
            continue;
        };
        let (cmd, result) = rest.rsplit_once(" -> ").unwrap_or((rest, ""));
        out.push(Command {
            domain,
            line: cmd.trim_matches('`'),
            failed: result.starts_with("failed"),
            output: Vec::new(),
        });
    }
    out
}

fn is_test_path(path: &str) -> bool {
    let lower = path.to_lowercase();
    lower
        .split(['/', '\\'])
        .any(|c| c == "test" || c == "tests" || c == "spec")
        || lower.contains("_test.")
        || lower.contains(".test.")
        || lower.contains("test_")
}

fn is_api_path(path: &str) -> bool {
    let lower = path.to_lowercase();
    [
        "api",
        "route",
        "handler",
        "endpoint",
        "controller",
        "server",
    ]
    .iter()
    .any(|k| lower.contains(k))
}

fn is_config_path(path: &str) -> bool {
    let lower = path.to_lowercase();
    let file = lower.rsplit('/').next().unwrap_or(&lower);
    [
        ".toml", ".json", ".yaml", ".yml", ".ini", ".cfg", ".env", ".lock",
    ]
    .iter()
    .any(|ext| file.ends_with(ext))
        || matches!(file, "dockerfile" | "makefile" | ".gitignore")
}

fn synthesize(prompt: &str) -> String {
    let behaviors: Vec<Behavior> = section(prompt, SECTION_BEHAVIORS)
        .into_iter()
        .filter_map(|l| {
            let c = behavior_re().captures(l)?;
            Some(Behavior {
                verb: c.get(1)?.as_str(),
                object: c.get(2)?.as_str(),
            })
        })
        .collect();
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for b in behaviors.iter().filter(|b| b.verb != "execute command") {
        let c = counts.entry(b.object).or_default();
        if matches!(b.verb, "add text" | "delete text" | "modify text") {
            c.0 += 1;
        }
        c.1 += 1;
    }
    let busiest = counts
        .iter()
        .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
        .map(|(o, _)| *o);
    let segment = section(prompt, SECTION_KEY_OBJECTS)
        .first()
        .and_then(|l| l.strip_prefix("- "))
        .or(busiest)
        .unwrap_or("the workspace");
    let segment_path = segment.split("::").next().unwrap_or(segment);

    let cmds = commands(prompt);
    if let Some(failed) = cmds.iter().find(|c| c.failed) {
        let failing_output = cmds
            .iter()
            .filter(|c| c.failed)
            .flat_map(|c| c.output.iter().copied());
        let mut exception = None;
        let mut panicked = false;
        for line in failing_output {
            if exception.is_none() {
                exception = exception_re()
                    .captures(line)
                    .and_then(|c| c.get(1))
                    .map(|m| m.as_str());
            }
            panicked |= line.contains("panicked at");
        }
        return match exception {
            Some(name) => format!("Attempted to fix exception {name} thrown in {segment}."),
            None if panicked => format!("Attempted to fix a panic raised in {segment}."),
            None => format!(
                "Attempted to fix the failing command `{}` in {segment}.",
                failed.line
            ),
        };
    }

    let edits: usize = counts.values().map(|c| c.0).sum();
    if edits > 0 {
        if is_test_path(segment_path) {
            format!("Wrote tests for {segment}.")
        } else if is_api_path(segment_path) {
            "Implemented a new API feature.".to_string()
        } else if is_config_path(segment_path) {
            format!("Configured the project in {segment}.")
        } else {
            format!("Implemented changes in {segment}.")
        }
    } else if let Some(first) = cmds.first() {
        format!("Ran {} commands such as `{}`.", first.domain, first.line)
    } else {
        format!("Explored {segment}.")
    }
}

/// Question keywords and the metric keys they call for.
const ROUTES: &[(&[&str], &[&str])] = &[
    (
        &["run", "start", "launch", "execute"],
        &["tech_stack_domains", "command_success_rate.run"],
    ),
    (
        &["build", "compile"],
        &["command_success_rate.build", "top_libraries"],
    ),
    (
        &["test", "tests", "testing"],
        &["command_success_rate.test"],
    ),
    (
        &[
            "install",
            "dependency",
            "dependencies",
            "library",
            "libraries",
            "package",
        ],
        &["top_libraries", "command_success_rate.package"],
    ),
    (
        &["fix", "error", "fails", "failing", "bug", "debug", "crash"],
        &["time_to_fix", "terminal_failure_rate"],
    ),
    (
        &[
            "structure",
            "architecture",
            "overview",
            "organized",
            "navigate",
        ],
        &["language_distribution", "unfamiliar_repo_navigation_load"],
    ),
    (&["comment", "comments", "document"], &["comment_density"]),
    (
        &["git", "commit", "branch", "merge"],
        &["command_success_rate.vcs"],
    ),
];

fn route(system_prompt: &str, question: &str) -> String {
    let catalog: Vec<&str> = system_prompt
        .lines()
        .filter_map(|l| l.strip_prefix("- ")?.split_once(": ").map(|(k, _)| k))
        .collect();
    let words: Vec<String> = crate::similarity::embedding::tokenize(question).collect();
    let mut picked: Vec<String> = Vec::new();
    let mut push = |key: &str| {
        if catalog.contains(&key) && !picked.iter().any(|p| p == key) {
            picked.push(key.to_string());
        }
    };
    for (keywords, keys) in ROUTES {
        if keywords.iter().any(|k| words.iter().any(|w| w == k)) {
            keys.iter().for_each(|k| push(k));
        }
    }
    for key in &catalog {
        if let Some(lang) = key.strip_prefix("language_loc.") {
            if words.iter().any(|w| w == lang) {
                push(key);
                push(&format!("productivity.{lang}"));
            }
        }
    }
    picked.join("\n")
}

fn answer(prompt: &str) -> String {
    let question = block(prompt, SECTION_QUESTION)
        .map(|l| l.join(" ").trim().to_string())
        .unwrap_or_default();
    let files = block(prompt, SECTION_WORKSPACE)
        .map(|l| l.iter().filter(|x| x.starts_with("### ")).count())
        .unwrap_or(0);
    let mut out = format!("Answer to \"{question}\" based on {files} workspace file(s).");
    if let Some(persona) = block(prompt, SECTION_PERSONA) {
        out.push_str("\nTailored to your profile:");
        for line in persona.iter().filter(|l| !l.trim().is_empty()) {
            out.push('\n');
            out.push_str(line);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts;

    #[test]
    fn key_objects_prefers_edits_then_touches() {
        let prompt = "Candidates:\n- a.rs | edits=1 touches=5\n- b.rs | edits=2 touches=2\n- c.rs | edits=2 touches=1\n";
        assert_eq!(
            ScriptedResponder
                .respond(prompts::KEY_OBJECTS, prompt)
                .lines()
                .next(),
            Some("OBJECT: b.rs")
        );
    }

    #[test]
    fn failing_commands_name_the_exception() {
        let prompt = "Behaviors:\n- [lb 1] t+0s add text src/App.java::App::main (+1/-0)\n\n\
                      Key objects:\n- src/App.java::App::main\n\nSnippets:\n\n\
                      Commands:\n- [run] `java App` -> failed (exit 1)\n  | Exception in thread \"main\" java.lang.NullPointerException\n";
        assert_eq!(
            ScriptedResponder.respond(prompts::SYNTHESIZE, prompt),
            "Attempted to fix exception NullPointerException thrown in src/App.java::App::main."
        );
    }

    #[test]
    fn router_only_emits_catalog_keys() {
        let system = prompts::router_prompt(&[
            ("tech_stack_domains".into(), "Domains".into()),
            ("command_success_rate.run".into(), "Run success".into()),
        ]);
        assert_eq!(
            ScriptedResponder.respond(&system, "How do I build and run this?"),
            "tech_stack_domains\ncommand_success_rate.run"
        );
        assert_eq!(ScriptedResponder.respond(&system, "What is this?"), "");
    }
}
