//! Run storage: content-derived run directories with resumable,
//! digest-verified artifacts.
//!
//! A *run* is identified by what it computes — a digest of the effective
//! configuration, prompt version, and input digests — so repeating the
//! same invocation lands in the same directory and picks up where it
//! left off. Every artifact is written atomically (temp file + rename)
//! and recorded in the manifest with the SHA-256 of its bytes; on resume
//! the digests are re-verified and any stage whose artifacts changed or
//! vanished is invalidated together with everything downstream.

pub mod digest;
pub mod manifest;
pub mod transcript;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use digest::{canonical_json, digest_of, digest_value, sha256_hex};
pub use manifest::{derive_run_id, stage_position, Manifest, StageEntry, StageStatus, STAGES};
pub use transcript::{
    guest_sections, parse_jsonl, parse_plain, parse_speaker_table, parse_transcript, sniff_format,
    speaker_meta, GuestSection, Transcript, TranscriptError, TranscriptFormat, Turn,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact {path}")]
    MissingArtifact { path: PathBuf },
    #[error("corrupt artifact {path}: {detail}")]
    CorruptArtifact { path: PathBuf, detail: String },
}

impl StoreError {
    fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> StoreError {
        let path = path.into();
        move |source| StoreError::Io { path, source }
    }
}

/// Write bytes atomically: to a temporary file in the destination
/// directory, then rename over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(StoreError::io(dir))?;
    let mut file = tempfile::NamedTempFile::new_in(dir).map_err(StoreError::io(dir))?;
    file.write_all(bytes).map_err(StoreError::io(path))?;
    file.flush().map_err(StoreError::io(path))?;
    file.persist(path)
        .map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e.error,
        })?;
    Ok(())
}

/// Serialize to pretty JSON with a trailing newline — the one encoding
/// used for every JSON artifact, so byte digests are reproducible.
pub fn artifact_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact values serialize");
    bytes.push(b'\n');
    bytes
}

const MANIFEST_FILE: &str = "manifest.json";

/// Handle on one run directory.
#[derive(Debug)]
pub struct RunStore {
    run_dir: PathBuf,
    fixed_timestamp: Option<u64>,
}

impl RunStore {
    /// Open (or create) the directory for `run_id` under `out_root`.
    pub fn open(
        out_root: impl Into<PathBuf>,
        run_id: &str,
        fixed_timestamp: Option<u64>,
    ) -> Result<RunStore, StoreError> {
        let run_dir = out_root.into().join(run_id);
        std::fs::create_dir_all(&run_dir).map_err(StoreError::io(&run_dir))?;
        Ok(RunStore {
            run_dir,
            fixed_timestamp,
        })
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.run_dir.join(relative)
    }

    /// Current timestamp, honoring a pinned clock for reproducible runs.
    pub fn timestamp(&self) -> u64 {
        self.fixed_timestamp.unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
    }

    /// Load the manifest if this run directory already has one.
    pub fn load_manifest(&self) -> Result<Option<Manifest>, StoreError> {
        let path = self.path(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(&path).map_err(StoreError::io(&path))?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptArtifact {
                path: path.clone(),
                detail: e.to_string(),
            })?;
        if !manifest.has_canonical_stages() {
            return Err(StoreError::CorruptArtifact {
                path,
                detail: "manifest stage list is not the canonical pipeline".into(),
            });
        }
        Ok(Some(manifest))
    }

    pub fn save_manifest(&self, manifest: &Manifest) -> Result<(), StoreError> {
        atomic_write(&self.path(MANIFEST_FILE), &artifact_json(manifest))
    }

    /// Write a JSON artifact; returns the digest of the bytes written.
    pub fn write_json<T: Serialize>(&self, relative: &str, value: &T) -> Result<String, StoreError> {
        let bytes = artifact_json(value);
        atomic_write(&self.path(relative), &bytes)?;
        Ok(sha256_hex(&bytes))
    }

    /// Write raw bytes (CSV, markdown); returns their digest.
    pub fn write_bytes(&self, relative: &str, bytes: &[u8]) -> Result<String, StoreError> {
        atomic_write(&self.path(relative), bytes)?;
        Ok(sha256_hex(bytes))
    }

    pub fn read_json<T: DeserializeOwned>(&self, relative: &str) -> Result<T, StoreError> {
        let path = self.path(relative);
        if !path.exists() {
            return Err(StoreError::MissingArtifact { path });
        }
        let bytes = std::fs::read(&path).map_err(StoreError::io(&path))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptArtifact {
            path,
            detail: e.to_string(),
        })
    }

    pub fn read_bytes(&self, relative: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.path(relative);
        if !path.exists() {
            return Err(StoreError::MissingArtifact { path });
        }
        std::fs::read(&path).map_err(StoreError::io(&path))
    }

    /// Re-verify the recorded artifact digests of every completed stage.
    /// The first stage whose artifacts are missing or changed is
    /// invalidated along with everything downstream; the names flipped
    /// back to pending are returned so callers can log them.
    pub fn verify_and_invalidate(&self, manifest: &mut Manifest) -> Result<Vec<String>, StoreError> {
        let mut broken_stage: Option<String> = None;
        'stages: for stage in &manifest.stages {
            if stage.status != StageStatus::Complete {
                continue;
            }
            for (relative, recorded) in &stage.artifacts {
                let path = self.path(relative);
                let matches = match std::fs::read(&path) {
                    Ok(bytes) => sha256_hex(&bytes) == *recorded,
                    Err(_) => false,
                };
                if !matches {
                    broken_stage = Some(stage.name.clone());
                    break 'stages;
                }
            }
        }
        Ok(match broken_stage {
            Some(name) => manifest.invalidate_from(&name),
            None => Vec::new(),
        })
    }
}

/// Create a new run (or reopen an existing one) for the given identity.
/// Returns the store, the manifest (fresh or loaded), and whether an
/// existing run was resumed.
pub fn create_or_resume(
    out_root: impl Into<PathBuf>,
    run_id: String,
    config_digest: String,
    prompt_version: String,
    prompts_digest: String,
    input_digests: BTreeMap<String, String>,
    fixed_timestamp: Option<u64>,
) -> Result<(RunStore, Manifest, bool), StoreError> {
    let store = RunStore::open(out_root, &run_id, fixed_timestamp)?;
    match store.load_manifest()? {
        Some(manifest) => {
            if manifest.run_id != run_id
                || manifest.config_digest != config_digest
                || manifest.prompt_version != prompt_version
                || manifest.prompts_digest != prompts_digest
                || manifest.input_digests != input_digests
            {
                return Err(StoreError::CorruptArtifact {
                    path: store.path(MANIFEST_FILE),
                    detail: "manifest does not match the run identity it sits under".into(),
                });
            }
            Ok((store, manifest, true))
        }
        None => {
            let manifest = Manifest::new(
                run_id,
                store.timestamp(),
                config_digest,
                prompt_version,
                prompts_digest,
                input_digests,
            );
            store.save_manifest(&manifest)?;
            Ok((store, manifest, false))
        }
    }
}
