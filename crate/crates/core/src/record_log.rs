//! Append-only, newline-delimited record files with a schema header line.
//!
//! A record is durable once its trailing newline is written. On open, a
//! torn final line (no newline) left by an interrupted writer is cut off so
//! the file holds exactly the completed prefix.

use crate::error::{Error, Result};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

pub struct RecordLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl RecordLog {
    /// Opens (creating if needed) the log and hands every complete record
    /// line to `visit` in order.
    pub fn open(
        path: &Path,
        header: &'static str,
        mut visit: impl FnMut(&str) -> Result<()>,
    ) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut contents = Vec::new();
        file.read_to_end(&mut contents)?;

        if contents.is_empty() {
            file.write_all(header.as_bytes())?;
            file.write_all(b"\n")?;
            file.sync_data()?;
        } else {
            let complete = match contents.iter().rposition(|b| *b == b'\n') {
                Some(pos) => pos + 1,
                None => 0,
            };
            if complete < contents.len() {
                log::warn!(
                    "{}: dropping {} bytes of torn record",
                    path.display(),
                    contents.len() - complete
                );
                file.set_len(complete as u64)?;
                file.seek(SeekFrom::End(0))?;
                contents.truncate(complete);
                if complete == 0 {
                    file.write_all(header.as_bytes())?;
                    file.write_all(b"\n")?;
                    file.sync_data()?;
                    contents.extend_from_slice(header.as_bytes());
                    contents.push(b'\n');
                }
            }
            let text = std::str::from_utf8(&contents)
                .map_err(|e| Error::Integrity(format!("{}: invalid utf-8: {e}", path.display())))?;
            let mut lines = text.lines();
            let first = lines.next().unwrap_or("");
            if first != header {
                return Err(Error::Version {
                    expected: header,
                    found: first.to_string(),
                });
            }
            for line in lines {
                visit(line)?;
            }
        }
        Ok(RecordLog {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record and flushes it to the operating system.
    pub fn append(&mut self, line: &str) -> Result<()> {
        debug_assert!(!line.contains('\n'));
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    /// Appends several records with a single flush.
    pub fn append_all<'a>(&mut self, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for line in lines {
            self.writer.write_all(line.as_bytes())?;
            self.writer.write_all(b"\n")?;
        }
        self.writer.flush()?;
        Ok(())
    }

    /// Forces written records to stable storage.
    pub fn sync(&mut self) -> Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()?;
        Ok(())
    }
}

/// Reads the complete records of a log without opening it for writing.
/// Readers running beside a writer see a consistent prefix.
pub fn read_records(path: &Path, header: &'static str) -> Result<Vec<String>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let Some(record) = line.strip_suffix('\n') else {
            break; // torn tail
        };
        if first {
            first = false;
            if record != header {
                return Err(Error::Version {
                    expected: header,
                    found: record.to_string(),
                });
            }
            continue;
        }
        out.push(record.to_string());
    }
    Ok(out)
}
