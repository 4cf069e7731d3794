//! Append-only request cache, one JSON record per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendKind, BackendProfile, Completion, CompletionRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSettings {
    pub kind: BackendKind,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub hash: String,
    pub settings: RequestSettings,
    pub request: CompletionRequest,
    pub completion: Completion,
    /// Unix milliseconds.
    pub timestamp: u64,
}

impl CacheRecord {
    pub fn new(hash: String, profile: &BackendProfile, request: CompletionRequest, completion: Completion) -> Self {
        CacheRecord {
            hash,
            settings: RequestSettings {
                kind: profile.kind,
                model_id: profile.model_id.clone(),
                temperature: profile.temperature,
                max_output_tokens: profile.max_output_tokens,
            },
            request,
            completion,
            timestamp: now_millis(),
        }
    }
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Concurrent readers, serialized writers. A record is on disk before
/// [`RequestCache::insert`] returns.
#[derive(Debug)]
pub struct RequestCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheRecord>>,
    writer: Mutex<Option<File>>,
}

impl RequestCache {
    pub fn in_memory() -> Self {
        RequestCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) a cache log and loads its records.
    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let err = |e: std::io::Error| BackendError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(err)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                    BackendError::Cache(format!("{} line {}: {e}", path.display(), i + 1))
                })?;
                entries.entry(rec.hash.clone()).or_insert(rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        Ok(RequestCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, hash: &str) -> Option<CacheRecord> {
        self.entries.read().unwrap().get(hash).cloned()
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.entries.read().unwrap().contains_key(hash)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the record ahead of making it visible. If another writer won
    /// the race for the same hash, the stored record is returned instead.
    pub fn insert(&self, record: CacheRecord) -> Result<CacheRecord, BackendError> {
        let mut writer = self.writer.lock().unwrap();
        if let Some(existing) = self.get(&record.hash) {
            return Ok(existing);
        }
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(&record).map_err(|e| BackendError::Cache(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line)
                .and_then(|_| file.sync_data())
                .map_err(|e| BackendError::Cache(e.to_string()))?;
        }
        self.entries.write().unwrap().insert(record.hash.clone(), record.clone());
        Ok(record)
    }
}
