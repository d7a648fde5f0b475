//! Durable persona snapshots: `persona/current` replaced atomically, every
//! snapshot also kept under `persona/history/`.

use super::{Persona, PERSONA_SCHEMA};
use crate::error::{Error, Result};
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const PERSONA_DIR: &str = "persona";
pub const CURRENT: &str = "current";
pub const HISTORY_DIR: &str = "history";

pub struct PersonaStore {
    root: PathBuf,
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

impl PersonaStore {
    /// Store rooted at `<data_dir>/persona`.
    pub fn new(data_dir: &Path) -> Self {
        PersonaStore {
            root: data_dir.join(PERSONA_DIR),
        }
    }

    pub fn current_path(&self) -> PathBuf {
        self.root.join(CURRENT)
    }

    pub fn history_dir(&self) -> PathBuf {
        self.root.join(HISTORY_DIR)
    }

    /// History files, oldest first.
    pub fn history(&self) -> Result<Vec<PathBuf>> {
        let dir = self.history_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        out.sort();
        Ok(out)
    }

    fn next_history_path(&self, p: &Persona) -> Result<PathBuf> {
        let date = chrono::DateTime::from_timestamp_millis(p.computed_at)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_else(|| "undated".into());
        let taken = self
            .history()?
            .iter()
            .filter(|h| {
                h.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(&date))
            })
            .count();
        Ok(self
            .history_dir()
            .join(format!("{date}-{:04}.json", taken + 1)))
    }

    /// Writes the snapshot to history, then swaps it in as `current`.
    pub fn snapshot(&self, p: &Persona) -> Result<PathBuf> {
        self.snapshot_inner(p, None)
    }

    /// Like [`snapshot`](Self::snapshot) but stops after writing `bytes`
    /// bytes of the new `current`, as a crashed writer would.
    #[doc(hidden)]
    pub fn snapshot_interrupted(&self, p: &Persona, bytes: usize) -> Result<PathBuf> {
        self.snapshot_inner(p, Some(bytes))
    }

    fn snapshot_inner(&self, p: &Persona, interrupt_at: Option<usize>) -> Result<PathBuf> {
        fs::create_dir_all(self.history_dir())?;
        let json = p.to_json()?;
        let tmp = self.root.join(format!("{CURRENT}.tmp"));
        if let Some(n) = interrupt_at {
            write_synced(&tmp, &json.as_bytes()[..n.min(json.len())])?;
            return Err(Error::Io(std::io::Error::other("snapshot interrupted")));
        }
        let history = self.next_history_path(p)?;
        write_synced(&history, json.as_bytes())?;
        write_synced(&tmp, json.as_bytes())?;
        fs::rename(&tmp, self.current_path())?;
        if let Ok(dir) = File::open(&self.root) {
            let _ = dir.sync_all();
        }
        Ok(history)
    }

    pub fn load_current(&self) -> Result<Option<Persona>> {
        let path = self.current_path();
        if !path.exists() {
            return Ok(None);
        }
        load_persona(&path).map(Some)
    }
}

pub fn load_persona(path: &Path) -> Result<Persona> {
    let text = fs::read_to_string(path)?;
    let p: Persona = serde_json::from_str(&text)?;
    if p.schema != PERSONA_SCHEMA {
        return Err(Error::Version {
            expected: PERSONA_SCHEMA,
            found: p.schema,
        });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{Dimension, MetricValue, PersonaMetric};

    fn sample(ts: i64, value: f64) -> Persona {
        let mut p = Persona::empty();
        p.computed_at = ts;
        p.dimensions
            .get_mut(&Dimension::Adaptation)
            .unwrap()
            .push(PersonaMetric {
                key: "revisit_cyclicality".into(),
                dimension: Dimension::Adaptation,
                description: "Revisit cyclicality of navigation".into(),
                qualifier: String::new(),
                value: MetricValue::Number(value),
                unit: String::new(),
                sample_count: 50,
                converged: true,
            });
        p
    }

    #[test]
    fn history_keeps_every_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let store = PersonaStore::new(dir.path());
        store.snapshot(&sample(0, 0.5)).unwrap();
        store.snapshot(&sample(1000, 0.82)).unwrap();
        let history = store.history().unwrap();
        assert_eq!(history.len(), 2);
        assert!(history[0].ends_with("1970-01-01-0001.json"));
        assert_eq!(store.load_current().unwrap().unwrap(), sample(1000, 0.82));
    }

    #[test]
    fn interrupted_write_leaves_current_intact() {
        let dir = tempfile::tempdir().unwrap();
        let store = PersonaStore::new(dir.path());
        store.snapshot(&sample(0, 0.5)).unwrap();
        assert!(store.snapshot_interrupted(&sample(1, 0.9), 17).is_err());
        assert_eq!(store.load_current().unwrap().unwrap(), sample(0, 0.5));
        // A later snapshot cleans up after the crashed one.
        store.snapshot(&sample(2, 0.7)).unwrap();
        assert_eq!(store.load_current().unwrap().unwrap(), sample(2, 0.7));
    }
}
