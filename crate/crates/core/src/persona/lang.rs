//! Language detection by file extension, comment markers and import scanning.

use regex::Regex;
use std::sync::OnceLock;

pub struct Language {
    pub id: &'static str,
    pub display: &'static str,
    extensions: &'static [&'static str],
    pub comment_markers: &'static [&'static str],
    imports: ImportStyle,
}

#[derive(Clone, Copy)]
enum ImportStyle {
    Rust,
    Python,
    Ecmascript,
    JvmDotted,
    Swift,
    Go,
    None,
}

const C_LIKE: &[&str] = &["//", "/*", "*"];

pub const LANGUAGES: &[Language] = &[
    Language {
        id: "rust",
        display: "Rust",
        extensions: &["rs"],
        comment_markers: C_LIKE,
        imports: ImportStyle::Rust,
    },
    Language {
        id: "python",
        display: "Python",
        extensions: &["py", "pyi"],
        comment_markers: &["#"],
        imports: ImportStyle::Python,
    },
    Language {
        id: "swift",
        display: "Swift",
        extensions: &["swift"],
        comment_markers: C_LIKE,
        imports: ImportStyle::Swift,
    },
    Language {
        id: "java",
        display: "Java",
        extensions: &["java"],
        comment_markers: C_LIKE,
        imports: ImportStyle::JvmDotted,
    },
    Language {
        id: "kotlin",
        display: "Kotlin",
        extensions: &["kt", "kts"],
        comment_markers: C_LIKE,
        imports: ImportStyle::JvmDotted,
    },
    Language {
        id: "javascript",
        display: "JavaScript",
        extensions: &["js", "jsx", "mjs", "cjs"],
        comment_markers: C_LIKE,
        imports: ImportStyle::Ecmascript,
    },
    Language {
        id: "typescript",
        display: "TypeScript",
        extensions: &["ts", "tsx"],
        comment_markers: C_LIKE,
        imports: ImportStyle::Ecmascript,
    },
    Language {
        id: "go",
        display: "Go",
        extensions: &["go"],
        comment_markers: C_LIKE,
        imports: ImportStyle::Go,
    },
    Language {
        id: "c",
        display: "C",
        extensions: &["c", "h"],
        comment_markers: C_LIKE,
        imports: ImportStyle::None,
    },
    Language {
        id: "cpp",
        display: "C++",
        extensions: &["cc", "cpp", "cxx", "hpp", "hh"],
        comment_markers: C_LIKE,
        imports: ImportStyle::None,
    },
    Language {
        id: "csharp",
        display: "C#",
        extensions: &["cs"],
        comment_markers: C_LIKE,
        imports: ImportStyle::None,
    },
    Language {
        id: "ruby",
        display: "Ruby",
        extensions: &["rb"],
        comment_markers: &["#"],
        imports: ImportStyle::None,
    },
    Language {
        id: "php",
        display: "PHP",
        extensions: &["php"],
        comment_markers: &["//", "#", "/*", "*"],
        imports: ImportStyle::None,
    },
    Language {
        id: "shell",
        display: "Shell",
        extensions: &["sh", "bash", "zsh"],
        comment_markers: &["#"],
        imports: ImportStyle::None,
    },
    Language {
        id: "sql",
        display: "SQL",
        extensions: &["sql"],
        comment_markers: &["--"],
        imports: ImportStyle::None,
    },
    Language {
        id: "lua",
        display: "Lua",
        extensions: &["lua"],
        comment_markers: &["--"],
        imports: ImportStyle::None,
    },
    Language {
        id: "dart",
        display: "Dart",
        extensions: &["dart"],
        comment_markers: C_LIKE,
        imports: ImportStyle::None,
    },
];

pub fn language_of(path: &str) -> Option<&'static Language> {
    let file = path.rsplit('/').next()?;
    let (_, ext) = file.rsplit_once('.')?;
    let ext = ext.to_ascii_lowercase();
    LANGUAGES
        .iter()
        .find(|l| l.extensions.contains(&ext.as_str()))
}

pub fn language_by_id(id: &str) -> Option<&'static Language> {
    LANGUAGES.iter().find(|l| l.id == id)
}

impl Language {
    pub fn is_comment(&self, line: &str) -> bool {
        let t = line.trim_start();
        self.comment_markers.iter().any(|m| t.starts_with(m))
    }

    /// Library names imported by the given added text.
    pub fn imports(&self, text: &str) -> Vec<String> {
        let Some(re) = import_re(self.imports) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for line in text.lines() {
            let Some(caps) = re.captures(line) else {
                continue;
            };
            let Some(name) = caps.get(1).or_else(|| caps.get(2)) else {
                continue;
            };
            if let Some(lib) = normalize(self.imports, name.as_str()) {
                out.push(lib);
            }
        }
        out
    }
}

fn import_re(style: ImportStyle) -> Option<&'static Regex> {
    static RES: OnceLock<Vec<Regex>> = OnceLock::new();
    let res = RES.get_or_init(|| {
        [
            r"^\s*(?:pub\s+)?(?:use|extern\s+crate)\s+([A-Za-z_][A-Za-z0-9_]*)",
            r"^\s*(?:from\s+([A-Za-z_][\w]*)[\w.]*\s+import\b|import\s+([A-Za-z_][\w]*))",
            r#"(?:\bfrom\s+|\brequire\(\s*|^\s*import\s+)['"]([^'"]+)['"]"#,
            r"^\s*import\s+(?:static\s+)?([A-Za-z_][\w]*(?:\.[A-Za-z_][\w]*)?)",
            r"^\s*(?:@testable\s+)?import\s+([A-Za-z_][\w]*)",
            r#"^\s*import\s+(?:[A-Za-z_.]\w*\s+)?"([^"]+)""#,
        ]
        .iter()
        .map(|p| Regex::new(p).unwrap())
        .collect()
    });
    let idx = match style {
        ImportStyle::Rust => 0,
        ImportStyle::Python => 1,
        ImportStyle::Ecmascript => 2,
        ImportStyle::JvmDotted => 3,
        ImportStyle::Swift => 4,
        ImportStyle::Go => 5,
        ImportStyle::None => return None,
    };
    Some(&res[idx])
}

fn normalize(style: ImportStyle, raw: &str) -> Option<String> {
    let name = match style {
        ImportStyle::Rust => {
            if matches!(raw, "crate" | "self" | "super" | "std" | "core" | "alloc") {
                return None;
            }
            raw.to_string()
        }
        ImportStyle::Ecmascript => {
            if raw.starts_with('.') || raw.starts_with('/') {
                return None;
            }
            let mut parts = raw.split('/');
            let first = parts.next()?;
            match (first.starts_with('@'), parts.next()) {
                (true, Some(second)) => format!("{first}/{second}"),
                _ => first.to_string(),
            }
        }
        ImportStyle::JvmDotted => {
            if ["java.", "javax.", "kotlin."]
                .iter()
                .any(|p| raw.starts_with(p))
            {
                return None;
            }
            raw.to_string()
        }
        _ => raw.to_string(),
    };
    Some(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_languages() {
        assert_eq!(language_of("src/main.rs").unwrap().id, "rust");
        assert_eq!(language_of("App/View.swift").unwrap().display, "Swift");
        assert!(language_of("README").is_none());
        assert!(language_of("notes.txt").is_none());
    }

    #[test]
    fn scans_imports() {
        let rust = language_by_id("rust").unwrap();
        assert_eq!(
            rust.imports("use serde::Serialize;\nuse crate::x;\nuse std::fs;\npub use tokio::io;"),
            vec!["serde", "tokio"]
        );
        let ts = language_by_id("typescript").unwrap();
        assert_eq!(
            ts.imports("import x from 'react';\nimport { y } from \"./local\";\nconst z = require('@aws-sdk/client-s3/x');"),
            vec!["react", "@aws-sdk/client-s3"]
        );
        let java = language_by_id("java").unwrap();
        assert_eq!(
            java.imports("import java.util.List;\nimport org.junit.Test;"),
            vec!["org.junit"]
        );
    }

    #[test]
    fn comment_lines() {
        let py = language_by_id("python").unwrap();
        assert!(py.is_comment("   # note"));
        assert!(!py.is_comment("x = 1  # trailing"));
    }
}
