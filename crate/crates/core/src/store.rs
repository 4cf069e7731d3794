//! On-disk campaign directories.
//!
//! ```text
//! <dir>/manifest.json      campaign id, config snapshot, dataset digest, per-example status
//! <dir>/transcripts.jsonl  one record per backend exchange, append-only
//! <dir>/cache.jsonl        request cache shared by every backend of the campaign
//! <dir>/reports/           generated tables and charts
//! <dir>/lock               held by the single writer
//! ```

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::RequestCache;
use crate::dataset::OptionLabel;
use crate::debate::Phase;

pub const MANIFEST: &str = "manifest.json";
pub const TRANSCRIPTS: &str = "transcripts.jsonl";
pub const CACHE: &str = "cache.jsonl";
pub const REPORTS: &str = "reports";
pub const LOCK: &str = "lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("campaign directory {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("no manifest in {0}")]
    MissingManifest(PathBuf),
    #[error("dataset digest mismatch: manifest has {expected}, file has {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("campaign id mismatch: directory holds {existing}, configuration gives {requested}")]
    CampaignMismatch { existing: String, requested: String },
    #[error("duplicate transcript record {0}")]
    Duplicate(String),
    #[error("transcript record {key} has request hash {hash} that is not in the cache")]
    Unresolvable { key: String, hash: String },
    #[error("{0}")]
    Cache(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub status: ExampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub campaign_id: String,
    /// Resolved configuration the campaign was started with.
    pub config: serde_json::Value,
    pub dataset_path: PathBuf,
    pub dataset_digest: String,
    pub seed: Option<u64>,
    /// In dataset order.
    pub examples: Vec<ManifestEntry>,
}

impl CampaignManifest {
    pub fn read(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(StoreError::MissingManifest(dir.to_path_buf()));
        }
        let text = std::fs::read_to_string(&path).map_err(io(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path, line: e.line(), message: e.to_string() })
    }

    /// Write to a temporary file, then rename over the old manifest.
    pub fn write(&self, dir: &Path) -> Result<(), StoreError> {
        let path = dir.join(MANIFEST);
        let tmp = dir.join(format!("{MANIFEST}.tmp"));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(io(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io(&path))
    }

    pub fn status_of(&self, id: &str) -> Option<ExampleStatus> {
        self.examples.iter().find(|e| e.id == id).map(|e| e.status)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let n = |s| self.examples.iter().filter(|e| e.status == s).count();
        (n(ExampleStatus::Done), n(ExampleStatus::Failed), n(ExampleStatus::Pending))
    }

    /// Fails when the dataset file no longer hashes to the recorded digest.
    pub fn verify_dataset(&self) -> Result<(), StoreError> {
        let found = crate::dataset::file_digest(&self.dataset_path).map_err(|e| StoreError::Cache(e.to_string()))?;
        if found != self.dataset_digest {
            return Err(StoreError::DigestMismatch { expected: self.dataset_digest.clone(), found });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub campaign_id: String,
    pub example_id: String,
    pub phase: Phase,
    pub participant_id: String,
    pub request_hash: String,
    pub raw_text: String,
    pub parsed_stance: Option<OptionLabel>,
    pub round: usize,
    /// Unix milliseconds at which the completion was first obtained.
    pub timestamp: u64,
}

impl TranscriptRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            example_id: self.example_id.clone(),
            phase: self.phase,
            round: self.round,
            participant_id: self.participant_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub example_id: String,
    pub phase: Phase,
    pub round: usize,
    pub participant_id: String,
}

impl std::fmt::Display for RecordKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{:?}/{}/{}", self.example_id, self.phase, self.round, self.participant_id)
    }
}

/// Reads a transcript log, failing on the first corrupt line.
pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptRecord>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path).map_err(io(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("{e}: {}", line.chars().take(80).collect::<String>()),
        })?;
        out.push(rec);
    }
    Ok(out)
}

struct Log {
    file: File,
    keys: HashMap<RecordKey, String>,
}

/// Exclusive writer handle on a campaign directory.
pub struct CampaignStore {
    dir: PathBuf,
    manifest: Mutex<CampaignManifest>,
    log: Mutex<Log>,
    cache: Arc<RequestCache>,
    _lock: File,
}

impl CampaignStore {
    /// Opens an existing campaign or starts a new one from `fresh`. An
    /// existing directory must belong to the same campaign and dataset.
    pub fn open(dir: &Path, fresh: CampaignManifest) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let lock_path = dir.join(LOCK);
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(&lock_path).map_err(io(&lock_path))?;
        lock.try_lock().map_err(|_| StoreError::Locked(dir.to_path_buf()))?;

        let manifest = match CampaignManifest::read(dir) {
            Ok(existing) => {
                if existing.campaign_id != fresh.campaign_id {
                    return Err(StoreError::CampaignMismatch {
                        existing: existing.campaign_id,
                        requested: fresh.campaign_id,
                    });
                }
                existing.verify_dataset()?;
                existing
            }
            Err(StoreError::MissingManifest(_)) => {
                fresh.write(dir)?;
                fresh
            }
            Err(e) => return Err(e),
        };

        let tpath = dir.join(TRANSCRIPTS);
        let keys = read_transcripts(&tpath)?
            .into_iter()
            .map(|r| (r.key(), r.request_hash))
            .collect();
        let file = OpenOptions::new().create(true).append(true).open(&tpath).map_err(io(&tpath))?;
        let cache = RequestCache::open(&dir.join(CACHE)).map_err(|e| StoreError::Cache(e.to_string()))?;
        Ok(CampaignStore {
            dir: dir.to_path_buf(),
            manifest: Mutex::new(manifest),
            log: Mutex::new(Log { file, keys }),
            cache: Arc::new(cache),
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn cache(&self) -> Arc<RequestCache> {
        self.cache.clone()
    }

    pub fn manifest(&self) -> CampaignManifest {
        self.manifest.lock().unwrap().clone()
    }

    pub fn campaign_id(&self) -> String {
        self.manifest.lock().unwrap().campaign_id.clone()
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.log.lock().unwrap().keys.contains_key(key)
    }

    pub fn record_count(&self) -> usize {
        self.log.lock().unwrap().keys.len()
    }

    /// Appends a record durably. A record whose key is already stored is rejected.
    pub fn persist_turn(&self, rec: &TranscriptRecord) -> Result<(), StoreError> {
        let mut log = self.log.lock().unwrap();
        let key = rec.key();
        if log.keys.contains_key(&key) {
            return Err(StoreError::Duplicate(key.to_string()));
        }
        if !self.cache.contains(&rec.request_hash) {
            return Err(StoreError::Unresolvable { key: key.to_string(), hash: rec.request_hash.clone() });
        }
        let mut line = serde_json::to_vec(rec).expect("record serializes");
        line.push(b'\n');
        let path = self.dir.join(TRANSCRIPTS);
        log.file.write_all(&line).and_then(|_| log.file.sync_data()).map_err(io(&path))?;
        log.keys.insert(key, rec.request_hash.clone());
        Ok(())
    }

    /// Persists a record unless an identical exchange is already stored,
    /// which is what happens when a campaign resumes.
    pub fn persist_if_new(&self, rec: &TranscriptRecord) -> Result<(), StoreError> {
        let existing = self.log.lock().unwrap().keys.get(&rec.key()).cloned();
        match existing {
            Some(h) if h == rec.request_hash => Ok(()),
            Some(_) => Err(StoreError::Duplicate(rec.key().to_string())),
            None => self.persist_turn(rec),
        }
    }

    /// Updates one example's status; the manifest is rewritten only on change.
    pub fn set_status(&self, id: &str, status: ExampleStatus, error: Option<String>) -> Result<(), StoreError> {
        let mut m = self.manifest.lock().unwrap();
        let Some(entry) = m.examples.iter_mut().find(|e| e.id == id) else {
            return Ok(());
        };
        if entry.status == status && entry.error == error {
            return Ok(());
        }
        entry.status = status;
        entry.error = error;
        m.write(&self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{canonical_request_hash, BackendProfile, CacheRecord, Completion, CompletionRequest};

    fn manifest(dir: &Path) -> CampaignManifest {
        let data = dir.join("d.jsonl");
        std::fs::write(&data, "{}").unwrap();
        CampaignManifest {
            campaign_id: "c1".into(),
            config: serde_json::json!({}),
            dataset_digest: crate::dataset::file_digest(&data).unwrap(),
            dataset_path: data,
            seed: Some(1),
            examples: vec![ManifestEntry { id: "e".into(), status: ExampleStatus::Pending, error: None }],
        }
    }

    fn record(store: &CampaignStore, round: usize) -> TranscriptRecord {
        let p = BackendProfile::scripted("m");
        let req = CompletionRequest::Text { prompt: format!("p{round}") };
        let hash = canonical_request_hash(&req, &p);
        store.cache().insert(CacheRecord::new(hash.clone(), &p, req, Completion::stop("x"))).unwrap();
        TranscriptRecord {
            campaign_id: "c1".into(),
            example_id: "e".into(),
            phase: Phase::DebateTurn,
            participant_id: "p".into(),
            request_hash: hash,
            raw_text: "x".into(),
            parsed_stance: None,
            round,
            timestamp: 5,
        }
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = CampaignStore::open(&dir.path().join("c"), manifest(dir.path())).unwrap();
        let r = record(&store, 1);
        store.persist_turn(&r).unwrap();
        assert!(matches!(store.persist_turn(&r), Err(StoreError::Duplicate(_))));
        store.persist_if_new(&r).unwrap();
        let mut other = record(&store, 2);
        other.round = 1;
        assert!(matches!(store.persist_if_new(&other), Err(StoreError::Duplicate(_))));
        let mut stray = record(&store, 3);
        stray.request_hash = "nope".into();
        assert!(matches!(store.persist_turn(&stray), Err(StoreError::Unresolvable { .. })));
    }

    #[test]
    fn single_writer_lock() {
        let dir = tempfile::tempdir().unwrap();
        let cdir = dir.path().join("c");
        let m = manifest(dir.path());
        let _first = CampaignStore::open(&cdir, m.clone()).unwrap();
        assert!(matches!(CampaignStore::open(&cdir, m), Err(StoreError::Locked(_))));
    }

    #[test]
    fn reopen_checks_identity_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let cdir = dir.path().join("c");
        let m = manifest(dir.path());
        {
            let s = CampaignStore::open(&cdir, m.clone()).unwrap();
            s.persist_turn(&record(&s, 1)).unwrap();
            s.set_status("e", ExampleStatus::Done, None).unwrap();
        }
        {
            let s = CampaignStore::open(&cdir, m.clone()).unwrap();
            assert_eq!(s.record_count(), 1);
            assert_eq!(s.manifest().status_of("e"), Some(ExampleStatus::Done));
        }
        let mut other = m.clone();
        other.campaign_id = "c2".into();
        assert!(matches!(CampaignStore::open(&cdir, other), Err(StoreError::CampaignMismatch { .. })));
        std::fs::write(&m.dataset_path, "{\"edited\":1}").unwrap();
        assert!(matches!(CampaignStore::open(&cdir, m), Err(StoreError::DigestMismatch { .. })));
    }

    #[test]
    fn truncated_transcript_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let cdir = dir.path().join("c");
        let m = manifest(dir.path());
        {
            let s = CampaignStore::open(&cdir, m.clone()).unwrap();
            s.persist_turn(&record(&s, 1)).unwrap();
        }
        let path = cdir.join(TRANSCRIPTS);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"campaign_id\":\"c1\",\"exam");
        std::fs::write(&path, text).unwrap();
        let err = read_transcripts(&path).unwrap_err();
        assert!(matches!(err, StoreError::Corrupt { line: 2, .. }), "{err}");
    }
}
