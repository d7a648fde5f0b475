//! Collects repository files for Q&A prompts.

use std::path::Path;
use vme_core::qa::compose::WorkspaceFile;
use walkdir::{DirEntry, WalkDir};

const SKIPPED_DIRS: &[&str] = &["target", "node_modules", "__pycache__"];
const MAX_FILE_BYTES: u64 = 256 * 1024;

fn skipped(e: &DirEntry) -> bool {
    let name = e.file_name().to_string_lossy();
    e.depth() > 0
        && e.file_type().is_dir()
        && (name.starts_with('.') || SKIPPED_DIRS.contains(&name.as_ref()))
}

/// UTF-8 files under `root` in path order, paths relative to `root` with
/// forward slashes. Hidden and build directories, binaries and very large
/// files are left out.
pub fn collect(root: &Path) -> anyhow::Result<Vec<WorkspaceFile>> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !skipped(e))
    {
        let entry = entry?;
        if !entry.file_type().is_file() || entry.metadata()?.len() > MAX_FILE_BYTES {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(entry.path()) else {
            continue;
        };
        if text.contains('\0') {
            continue;
        }
        let rel = entry.path().strip_prefix(root)?;
        let path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push(WorkspaceFile { path, text });
    }
    Ok(files)
}
