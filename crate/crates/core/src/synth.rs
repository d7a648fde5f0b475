//! Seeded synthetic capture traces for fixtures, benchmarks and tests.

use crate::model::{EventKind, RawEvent, Source, TextRange, TimestampMs};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceConfig {
    pub seed: u64,
    pub events: usize,
    pub start_ms: TimestampMs,
    pub first_event_id: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            seed: 7,
            events: 1000,
            // 2024-03-04T09:00:00Z, a Monday morning.
            start_ms: 1_709_542_800_000,
            first_event_id: 1,
        }
    }
}

struct Project {
    files: &'static [&'static str],
    lines: &'static [&'static str],
    commands: &'static [(&'static str, &'static str, &'static str)],
}

const PROJECTS: &[Project] = &[
    Project {
        files: &[
            "api/src/routes.rs",
            "api/src/db.rs",
            "api/tests/routes.rs",
            "api/Cargo.toml",
        ],
        lines: &[
            "use serde::Serialize;\n",
            "use tokio::sync::Mutex;\n",
            "// look up the user first\n",
            "let user = db.find(id).await?;\n",
            "    Ok(Json(user))\n",
            "#[test]\n",
            "fn handles_missing_user() {\n",
        ],
        commands: &[
            (
                "cargo build",
                "   Compiling api v0.1.0\n",
                "error[E0425]: cannot find value `usr`\n",
            ),
            (
                "cargo test",
                "test result: ok. 12 passed\n",
                "thread 'main' panicked at src/db.rs:40:9\n",
            ),
            (
                "cargo run",
                "Listening on 127.0.0.1:8080\n",
                "Error: AddrInUse\n",
            ),
            (
                "git status",
                "nothing to commit\n",
                "fatal: not a git repository\n",
            ),
        ],
    },
    Project {
        files: &[
            "ml/train.py",
            "ml/data/loader.py",
            "ml/tests/test_loader.py",
            "ml/config.yaml",
        ],
        lines: &[
            "import numpy as np\n",
            "from torch.utils.data import DataLoader\n",
            "# normalize before batching\n",
            "batch = next(iter(loader))\n",
            "    return x / x.max()\n",
            "def test_loader_shapes():\n",
        ],
        commands: &[
            (
                "python train.py",
                "epoch 1 loss 0.41\n",
                "Traceback (most recent call last):\nValueError: shapes do not match\n",
            ),
            (
                "pytest",
                "5 passed in 0.8s\n",
                "FAILED tests/test_loader.py::test_loader_shapes - KeyError: 'label'\n",
            ),
            (
                "pip install pandas",
                "Successfully installed pandas\n",
                "ERROR: No matching distribution\n",
            ),
            ("git diff", "", "fatal: bad revision\n"),
        ],
    },
    Project {
        files: &[
            "web/src/App.tsx",
            "web/src/api/client.ts",
            "web/src/App.test.tsx",
            "web/package.json",
        ],
        lines: &[
            "import React from 'react';\n",
            "import axios from 'axios';\n",
            "// TODO handle errors\n",
            "const res = await client.get('/users');\n",
            "  return <List items={users} />;\n",
            "it('renders users', () => {\n",
        ],
        commands: &[
            (
                "npm run build",
                "compiled successfully\n",
                "TypeError: Cannot read properties of undefined\n",
            ),
            (
                "npm test",
                "Tests: 8 passed\n",
                "Tests: 1 failed, 7 passed\n",
            ),
            (
                "npm start",
                "Local: http://localhost:3000\n",
                "Error: listen EADDRINUSE\n",
            ),
            (
                "npm install zod",
                "added 1 package\n",
                "npm ERR! code E404\n",
            ),
        ],
    },
];

const SHORTCUTS: &[&str] = &["ctrl+p", "ctrl+shift+f", "f12", "ctrl+/", "alt+up"];

struct Gen {
    rng: ChaCha8Rng,
    now: TimestampMs,
    next_id: u64,
    out: Vec<RawEvent>,
    limit: usize,
}

impl Gen {
    fn full(&self) -> bool {
        self.out.len() >= self.limit
    }

    fn emit(
        &mut self,
        source: Source,
        kind: EventKind,
        path: Option<&str>,
        range: Option<TextRange>,
        payload: Option<String>,
    ) {
        if self.full() {
            return;
        }
        self.out.push(RawEvent {
            event_id: self.next_id,
            timestamp: self.now,
            source,
            kind,
            path: path.map(str::to_string),
            range,
            payload,
        });
        self.next_id += 1;
    }

    fn advance(&mut self, lo_ms: i64, hi_ms: i64) {
        self.now += self.rng.random_range(lo_ms..=hi_ms);
    }

    fn edit_burst(&mut self, p: &Project, file: &str) {
        let mut line = self.rng.random_range(1..120u32);
        let strokes = self.rng.random_range(3..14);
        for _ in 0..strokes {
            let roll = self.rng.random_range(0..10);
            let (kind, text) = match roll {
                0 => (EventKind::EditDelete, "x".to_string()),
                1 => (
                    EventKind::EditReplace,
                    p.lines.choose(&mut self.rng).unwrap().to_string(),
                ),
                2..=4 => (
                    EventKind::EditInsert,
                    p.lines.choose(&mut self.rng).unwrap().to_string(),
                ),
                _ => (EventKind::EditInsert, "a".to_string()),
            };
            let range = TextRange::new(line, 0, line, 1);
            self.emit(
                Source::User,
                kind,
                Some(file),
                Some(range),
                Some(text.clone()),
            );
            if text.ends_with('\n') {
                line += 1;
            }
            self.advance(80, 900);
        }
        if self.rng.random_bool(0.6) {
            self.advance(200, 1500);
            self.emit(Source::User, EventKind::FileSave, Some(file), None, None);
        }
        if self.rng.random_bool(0.15) {
            // Formatter and assistant rewrites arrive as non-user edits.
            let source = if self.rng.random_bool(0.5) {
                Source::Ide
            } else {
                Source::Agent
            };
            let range = TextRange::new(line, 0, line, 4);
            self.emit(
                source,
                EventKind::EditReplace,
                Some(file),
                Some(range),
                Some("    ".into()),
            );
        }
    }

    fn command(&mut self, p: &Project) {
        let (cmd, ok_out, fail_out) = *p.commands.choose(&mut self.rng).unwrap();
        self.emit(
            Source::User,
            EventKind::TerminalCommand,
            None,
            None,
            Some(cmd.into()),
        );
        self.advance(300, 4000);
        let failed = self.rng.random_bool(0.35);
        let body = if failed { fail_out } else { ok_out };
        if !body.is_empty() {
            self.emit(
                Source::Ide,
                EventKind::TerminalOutput,
                None,
                None,
                Some(body.into()),
            );
            self.advance(50, 400);
        }
        let code = if failed { "1" } else { "0" };
        let marker = if self.rng.random_bool(0.03) {
            "#exit ?\n".to_string()
        } else {
            format!("#exit {code}\n")
        };
        self.emit(
            Source::Ide,
            EventKind::TerminalOutput,
            None,
            None,
            Some(marker),
        );
    }

    fn browse(&mut self, p: &Project) {
        let file = *p.files.choose(&mut self.rng).unwrap();
        match self.rng.random_range(0..6) {
            0 => self.emit(Source::User, EventKind::FileOpen, Some(file), None, None),
            1 => {
                let line = self.rng.random_range(1..200);
                self.emit(
                    Source::User,
                    EventKind::Select,
                    Some(file),
                    Some(TextRange::new(line, 0, line + 2, 0)),
                    None,
                );
            }
            2 => {
                let key = *SHORTCUTS.choose(&mut self.rng).unwrap();
                self.emit(
                    Source::User,
                    EventKind::Shortcut,
                    Some(file),
                    None,
                    Some(key.into()),
                );
            }
            3 => self.emit(Source::User, EventKind::FileClose, Some(file), None, None),
            4 => self.emit(Source::User, EventKind::DebugStep, Some(file), None, None),
            _ => {
                let line = self.rng.random_range(1..200);
                self.emit(
                    Source::User,
                    EventKind::Navigate,
                    Some(file),
                    Some(TextRange::new(line, 0, line, 0)),
                    None,
                );
            }
        }
    }

    fn gap(&mut self) {
        match self.rng.random_range(0..100) {
            0..=1 => {
                // Overnight: resume the next morning.
                self.advance(14 * 3_600_000, 18 * 3_600_000);
            }
            2..=11 => self.advance(150_000, 900_000),
            12..=55 => self.advance(40_000, 110_000),
            _ => self.advance(1_000, 20_000),
        }
    }

    /// A lone glance at another project between work episodes.
    fn stray(&mut self) {
        let p = PROJECTS.choose(&mut self.rng).unwrap();
        let file = *p.files.choose(&mut self.rng).unwrap();
        let line = self.rng.random_range(1..200);
        self.emit(
            Source::User,
            EventKind::Navigate,
            Some(file),
            Some(TextRange::new(line, 0, line, 0)),
            None,
        );
        self.advance(30_000, 100_000);
    }
}

/// Generates a plausible multi-day trace of exactly `cfg.events` events.
/// The same config always yields the same trace.
pub fn synthetic_trace(cfg: TraceConfig) -> Vec<RawEvent> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        now: cfg.start_ms,
        next_id: cfg.first_event_id,
        out: Vec::with_capacity(cfg.events),
        limit: cfg.events,
    };
    let mut project = &PROJECTS[0];
    while !g.full() {
        if g.rng.random_bool(0.3) {
            project = PROJECTS.choose(&mut g.rng).unwrap();
        }
        if g.rng.random_bool(0.1) {
            g.stray();
        }
        let file = *project.files.choose(&mut g.rng).unwrap();
        g.emit(Source::User, EventKind::FileOpen, Some(file), None, None);
        g.advance(300, 3000);
        for _ in 0..g.rng.random_range(1..5) {
            match g.rng.random_range(0..10) {
                0..=4 => g.edit_burst(project, file),
                5..=6 => g.command(project),
                _ => g.browse(project),
            }
            g.advance(500, 8000);
        }
        g.gap();
    }
    g.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traces_are_reproducible_and_ordered() {
        let cfg = TraceConfig::default();
        let a = synthetic_trace(cfg);
        assert_eq!(a.len(), 1000);
        assert_eq!(a, synthetic_trace(cfg));
        assert!(a
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp && w[0].event_id < w[1].event_id));
        assert!(a.iter().all(|e| e.validate().is_ok()));
        assert_ne!(a, synthetic_trace(TraceConfig { seed: 8, ..cfg }));
    }
}
