//! Append-only JSON-lines files.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::json::{self, SchemaError};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}, line {line}: {error}")]
    Corrupt { path: String, line: usize, error: SchemaError },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// One value per `\n`-terminated line. Writes are flushed and synced
/// before `append` returns.
#[derive(Debug)]
pub struct JsonlLog<T> {
    path: PathBuf,
    file: File,
    _entries: PhantomData<fn(T)>,
}

impl<T: Serialize + DeserializeOwned> JsonlLog<T> {
    /// Reads every entry of `path`; a missing file is empty. A final line
    /// without its `\n` is an interrupted append and is skipped.
    pub fn read(path: &Path) -> Result<Vec<T>, StoreError> {
        Ok(Self::scan(path)?.0)
    }

    /// Entries plus the byte length of the complete lines.
    fn scan(path: &Path) -> Result<(Vec<T>, u64), StoreError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
            Err(e) => return Err(io(path)(e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            tracing::warn!(path = %path.display(), bytes = text.len() - complete, "ignoring torn final line");
        }
        let mut out = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry = json::parse(line).map_err(|error| StoreError::Corrupt {
                path: path.display().to_string(),
                line: i + 1,
                error,
            })?;
            out.push(entry);
        }
        Ok((out, complete as u64))
    }

    /// Opens `path` for appending, returning the entries already present.
    /// A torn final line is cut off so later appends start on a fresh line.
    pub fn open(path: &Path) -> Result<(Self, Vec<T>), StoreError> {
        let (existing, complete) = Self::scan(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io(path))?;
        if file.metadata().map_err(io(path))?.len() > complete {
            file.set_len(complete).map_err(io(path))?;
        }
        Ok((Self { path: path.to_path_buf(), file, _entries: PhantomData }, existing))
    }

    pub fn append(&mut self, entry: &T) -> Result<(), StoreError> {
        let mut line = json::canonical_line(entry);
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io(&self.path))?;
        self.file.sync_data().map_err(io(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
