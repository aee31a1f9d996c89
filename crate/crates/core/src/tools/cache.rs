//! Persistent key-value store for search responses.
//!
//! Keys are normalized queries. The file-backed store keeps everything in
//! memory and appends each new entry to a JSONL file.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::text::normalize_query;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub normalized_query: String,
    pub raw_query: String,
    pub response: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

impl CacheEntry {
    pub fn new(raw_query: &str, response: impl Into<String>, created_at: u64) -> Self {
        Self {
            normalized_query: normalize_query(raw_query),
            raw_query: raw_query.to_string(),
            response: response.into(),
            created_at,
        }
    }
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache encode: {0}")]
    Encode(#[from] serde_json::Error),
}

pub trait CacheStore: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError>;
    fn entries(&self) -> Result<Vec<CacheEntry>, CacheError>;
    fn put(&self, entry: CacheEntry) -> Result<(), CacheError>;
    fn clear(&self) -> Result<(), CacheError>;

    fn len(&self) -> Result<usize, CacheError> {
        Ok(self.entries()?.len())
    }

    fn is_empty(&self) -> Result<bool, CacheError> {
        Ok(self.len()? == 0)
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    map: RwLock<HashMap<String, CacheEntry>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CacheStore for MemoryStore {
    fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError> {
        Ok(self.map.read().expect("cache lock").get(key).cloned())
    }

    fn entries(&self) -> Result<Vec<CacheEntry>, CacheError> {
        Ok(sorted(self.map.read().expect("cache lock").values().cloned().collect()))
    }

    fn put(&self, entry: CacheEntry) -> Result<(), CacheError> {
        self.map.write().expect("cache lock").insert(entry.normalized_query.clone(), entry);
        Ok(())
    }

    fn clear(&self) -> Result<(), CacheError> {
        self.map.write().expect("cache lock").clear();
        Ok(())
    }

    fn len(&self) -> Result<usize, CacheError> {
        Ok(self.map.read().expect("cache lock").len())
    }
}

/// Memory map mirrored to an append-only JSONL file.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    map: RwLock<HashMap<String, CacheEntry>>,
    writer: Mutex<()>,
}

impl FileStore {
    /// Opens (or creates) the store at `path`, loading any existing entries.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let path = path.into();
        let mut map = HashMap::new();
        if path.exists() {
            for entry in read_entries(&path)? {
                map.insert(entry.normalized_query.clone(), entry);
            }
        }
        Ok(Self { path, map: RwLock::new(map), writer: Mutex::new(()) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Rewrites the backing file in canonical order, dropping superseded lines.
    pub fn compact(&self) -> Result<usize, CacheError> {
        let _guard = self.writer.lock().expect("writer lock");
        let entries = sorted(self.map.read().expect("cache lock").values().cloned().collect());
        write_entries(&self.path, &entries)
    }
}

impl CacheStore for FileStore {
    fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError> {
        Ok(self.map.read().expect("cache lock").get(key).cloned())
    }

    fn entries(&self) -> Result<Vec<CacheEntry>, CacheError> {
        Ok(sorted(self.map.read().expect("cache lock").values().cloned().collect()))
    }

    fn put(&self, entry: CacheEntry) -> Result<(), CacheError> {
        let _guard = self.writer.lock().expect("writer lock");
        let line = serde_json::to_string(&entry)?;
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(file, "{line}")?;
        self.map.write().expect("cache lock").insert(entry.normalized_query.clone(), entry);
        Ok(())
    }

    fn clear(&self) -> Result<(), CacheError> {
        let _guard = self.writer.lock().expect("writer lock");
        self.map.write().expect("cache lock").clear();
        if self.path.exists() {
            File::create(&self.path)?;
        }
        Ok(())
    }

    fn len(&self) -> Result<usize, CacheError> {
        Ok(self.map.read().expect("cache lock").len())
    }
}

/// Canonical order: creation time, then key.
fn sorted(mut entries: Vec<CacheEntry>) -> Vec<CacheEntry> {
    entries.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.normalized_query.cmp(&b.normalized_query)));
    entries
}

fn write_entries(path: &Path, entries: &[CacheEntry]) -> Result<usize, CacheError> {
    let mut out = BufWriter::new(File::create(path)?);
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(entries.len())
}

/// Reads JSONL entries, skipping malformed lines with a warning.
fn read_entries(path: &Path) -> Result<Vec<CacheEntry>, CacheError> {
    let contents = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(line) {
            Ok(entry) => out.push(entry),
            Err(e) => log::warn!("{}:{}: skipping malformed cache line: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

/// Writes every entry of `store` to `path` in canonical order.
pub fn cache_persist(store: &dyn CacheStore, path: impl AsRef<Path>) -> Result<usize, CacheError> {
    write_entries(path.as_ref(), &store.entries()?)
}

/// Loads entries from `path` into `store`; returns how many were read.
pub fn cache_load(store: &dyn CacheStore, path: impl AsRef<Path>) -> Result<usize, CacheError> {
    let entries = read_entries(path.as_ref())?;
    let n = entries.len();
    for entry in entries {
        store.put(entry)?;
    }
    Ok(n)
}
