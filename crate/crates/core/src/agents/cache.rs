//! Response cache: in-memory map backed by an append-only JSON-lines file.
//!
//! Each key owns a slot guarded by its own mutex, so concurrent callers asking
//! for the same key wait for the first one instead of issuing a second request.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedReply {
    pub key: String,
    pub raw_text: String,
    pub attempt_count: u32,
}

type Slot = Arc<Mutex<Option<CachedReply>>>;

#[derive(Debug, Default)]
pub struct ResponseCache {
    slots: Mutex<HashMap<String, Slot>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Opens (or creates) the record store at `path` and loads its entries.
    /// Truncated trailing lines from an interrupted write are skipped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut slots = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if let Ok(rec) = serde_json::from_str::<CachedReply>(&line) {
                    slots.insert(rec.key.clone(), Arc::new(Mutex::new(Some(rec))));
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(ResponseCache { slots: Mutex::new(slots), file: Some(Mutex::new(file)), path: Some(path) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.slots
            .lock()
            .expect("cache poisoned")
            .values()
            .filter(|s| s.lock().map(|g| g.is_some()).unwrap_or(false))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CachedReply> {
        let slot = self.slots.lock().expect("cache poisoned").get(key).cloned()?;
        let guard = slot.lock().expect("cache slot poisoned");
        guard.clone()
    }

    /// Returns the cached reply for `key`, computing and persisting it with
    /// `fetch` if absent. Errors from `fetch` are not cached.
    pub fn get_or_try_insert<F, E>(&self, key: &str, fetch: F) -> std::result::Result<(CachedReply, bool), E>
    where
        F: FnOnce() -> std::result::Result<CachedReply, E>,
        E: From<crate::error::Error>,
    {
        let slot = {
            let mut map = self.slots.lock().expect("cache poisoned");
            map.entry(key.to_string()).or_default().clone()
        };
        let mut guard = slot.lock().expect("cache slot poisoned");
        if let Some(hit) = guard.as_ref() {
            return Ok((hit.clone(), true));
        }
        let mut fresh = fetch()?;
        fresh.key = key.to_string();
        self.append(&fresh).map_err(E::from)?;
        *guard = Some(fresh.clone());
        Ok((fresh, false))
    }

    fn append(&self, rec: &CachedReply) -> Result<()> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_vec(rec)?;
            line.push(b'\n');
            let mut f = file.lock().expect("cache file poisoned");
            f.write_all(&line)?;
            f.flush()?;
        }
        Ok(())
    }
}

/// Hex SHA-256 over the request identity.
pub fn request_key(model: &str, temperature: f64, system: &str, user: &str, order: &str, sample_index: u64) -> String {
    let mut h = Sha256::new();
    for part in [model, &format!("{temperature}"), system, user, order, &sample_index.to_string()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}
