//! Task-level response cache.
//!
//! A completed ensemble exchange — both workers, the integrator, and the
//! agreement verdict — is stored as one JSON file keyed by task kind and
//! input hash. A hit answers the whole task without touching any backend.
//! The cache is strictly best-effort: unreadable or mismatched entries
//! are logged and treated as misses, and write failures never fail a run.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{EnsembleRecord, SingleRecord, TaskKind};
use crate::store::{artifact_json, atomic_write};

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, task: &str, input_hash: &str) -> PathBuf {
        self.dir.join(task).join(format!("{input_hash}.json"))
    }

    /// Look a completed record up. Any problem — missing file, unreadable
    /// JSON, an entry that does not match its own key — is a miss.
    pub fn load<T: DeserializeOwned>(
        &self,
        kind: TaskKind,
        input_hash: &str,
    ) -> Option<EnsembleRecord<T>> {
        let path = self.entry_path(kind.name(), input_hash);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache: cannot read {}: {e}; treating as miss", path.display());
                return None;
            }
        };
        match serde_json::from_slice::<EnsembleRecord<T>>(&bytes) {
            Ok(record) if record.task == kind.name() && record.input_hash == input_hash => {
                Some(record)
            }
            Ok(_) => {
                log::warn!(
                    "cache: entry {} does not match its key; treating as miss",
                    path.display()
                );
                None
            }
            Err(e) => {
                log::warn!("cache: corrupt entry {}: {e}; treating as miss", path.display());
                None
            }
        }
    }

    /// Store a completed record. Failures are logged, never propagated.
    pub fn store<T: Serialize>(&self, record: &EnsembleRecord<T>) {
        let path = self.entry_path(&record.task, &record.input_hash);
        if let Err(e) = atomic_write(&path, &artifact_json(record)) {
            log::warn!("cache: cannot write {}: {e}", path.display());
        }
    }

    /// [`load`](Self::load) for single-seat records.
    pub fn load_single<T: DeserializeOwned>(
        &self,
        kind: TaskKind,
        input_hash: &str,
    ) -> Option<SingleRecord<T>> {
        let path = self.entry_path(kind.name(), input_hash);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache: cannot read {}: {e}; treating as miss", path.display());
                return None;
            }
        };
        match serde_json::from_slice::<SingleRecord<T>>(&bytes) {
            Ok(record) if record.task == kind.name() && record.input_hash == input_hash => {
                Some(record)
            }
            Ok(_) => {
                log::warn!(
                    "cache: entry {} does not match its key; treating as miss",
                    path.display()
                );
                None
            }
            Err(e) => {
                log::warn!("cache: corrupt entry {}: {e}; treating as miss", path.display());
                None
            }
        }
    }

    /// [`store`](Self::store) for single-seat records.
    pub fn store_single<T: Serialize>(&self, record: &SingleRecord<T>) {
        let path = self.entry_path(&record.task, &record.input_hash);
        if let Err(e) = atomic_write(&path, &artifact_json(record)) {
            log::warn!("cache: cannot write {}: {e}", path.display());
        }
    }
}
