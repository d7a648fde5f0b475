//! Versioned prompt templates shipped with the crate.

pub const KEY_OBJECTS: &str = include_str!("../assets/prompts/key_objects.txt");
pub const SYNTHESIZE: &str = include_str!("../assets/prompts/synthesize.txt");
pub const ROUTER: &str = include_str!("../assets/prompts/router.txt");
pub const QA_SYSTEM: &str = include_str!("../assets/prompts/qa_system.txt");
pub const QA_INSTRUCTION: &str = include_str!("../assets/prompts/qa_instruction.txt");

pub const CATALOG_PLACEHOLDER: &str = "{{CATALOG}}";

/// Which pipeline stage a system prompt belongs to, read from its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    KeyObjects,
    Synthesize,
    Router,
    Answer,
    Unknown,
}

impl Stage {
    pub fn of(system_prompt: &str) -> Stage {
        let header = system_prompt.lines().next().unwrap_or("");
        match header.split_whitespace().nth(2) {
            Some("key-objects") => Stage::KeyObjects,
            Some("synthesize") => Stage::Synthesize,
            Some("router") => Stage::Router,
            Some("qa-system") => Stage::Answer,
            _ => Stage::Unknown,
        }
    }
}

pub fn router_prompt(catalog: &[(String, String)]) -> String {
    let listing: Vec<String> = catalog
        .iter()
        .map(|(key, description)| format!("- {key}: {description}"))
        .collect();
    ROUTER.replace(CATALOG_PLACEHOLDER, &listing.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_are_recognized() {
        assert_eq!(Stage::of(KEY_OBJECTS), Stage::KeyObjects);
        assert_eq!(Stage::of(SYNTHESIZE), Stage::Synthesize);
        assert_eq!(Stage::of(ROUTER), Stage::Router);
        assert_eq!(Stage::of(QA_SYSTEM), Stage::Answer);
        assert_eq!(Stage::of("hello"), Stage::Unknown);
    }

    #[test]
    fn router_lists_catalog() {
        let p = router_prompt(&[("a".into(), "Alpha".into())]);
        assert!(p.contains("- a: Alpha"));
        assert!(!p.contains(CATALOG_PLACEHOLDER));
    }
}
