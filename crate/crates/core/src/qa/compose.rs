//! Prompt rendering for repository questions.

use super::{Mode, PersonaContext};
use crate::prompts;
use serde::{Deserialize, Serialize};

pub const SECTION_INSTRUCTION: &str = "## Instruction";
pub const SECTION_PERSONA: &str = "## Developer persona";
pub const SECTION_WORKSPACE: &str = "## Workspace";
pub const SECTION_QUESTION: &str = "## Question";
pub const WORKSPACE_BUDGET: usize = 32 * 1024;
pub const BUDGET_MARKER: &str = "[truncated: workspace budget reached]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceFile {
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mode: Mode,
    pub instruction: String,
    pub persona_context: PersonaContext,
    pub query: String,
    pub workspace_context: Vec<WorkspaceFile>,
    /// Metric keys whose snippets the prompt carries.
    pub provenance: Vec<String>,
    pub workspace_truncated: bool,
}

fn clip(text: &str, budget: usize) -> &str {
    let mut cut = budget.min(text.len());
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    &text[..cut]
}

/// Builds the bundle. Baseline mode drops the persona context entirely;
/// workspace text beyond the budget is cut and marked.
pub fn compose(
    query: &str,
    mode: Mode,
    persona_context: PersonaContext,
    workspace: &[WorkspaceFile],
) -> PromptBundle {
    let persona_context = match mode {
        Mode::Personalized => persona_context,
        Mode::Baseline => PersonaContext::default(),
    };
    let mut remaining = WORKSPACE_BUDGET;
    let mut truncated = false;
    let workspace_context = workspace
        .iter()
        .map(|f| {
            let text = if f.text.len() <= remaining {
                remaining -= f.text.len();
                f.text.clone()
            } else {
                truncated = true;
                let kept = clip(&f.text, remaining);
                remaining -= kept.len();
                if kept.is_empty() {
                    BUDGET_MARKER.to_string()
                } else {
                    format!("{kept}\n{BUDGET_MARKER}")
                }
            };
            WorkspaceFile {
                path: f.path.clone(),
                text,
            }
        })
        .collect();
    PromptBundle {
        mode,
        instruction: prompts::QA_INSTRUCTION.trim_end().to_string(),
        provenance: persona_context.keys(),
        persona_context,
        query: query.trim().to_string(),
        workspace_context,
        workspace_truncated: truncated,
    }
}

impl PromptBundle {
    pub fn system_prompt(&self) -> &'static str {
        prompts::QA_SYSTEM
    }

    /// The user prompt sent to the model.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(SECTION_INSTRUCTION);
        out.push('\n');
        out.push_str(&self.instruction);
        out.push_str("\n\n");
        if self.mode == Mode::Personalized && !self.persona_context.snippets.is_empty() {
            out.push_str(SECTION_PERSONA);
            out.push('\n');
            for s in &self.persona_context.snippets {
                out.push_str("- ");
                out.push_str(&s.text);
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str(SECTION_WORKSPACE);
        out.push('\n');
        for f in &self.workspace_context {
            out.push_str("### ");
            out.push_str(&f.path);
            out.push('\n');
            out.push_str(&f.text);
            if !f.text.ends_with('\n') {
                out.push('\n');
            }
        }
        out.push('\n');
        out.push_str(SECTION_QUESTION);
        out.push('\n');
        out.push_str(&self.query);
        out.push('\n');
        out
    }
}
