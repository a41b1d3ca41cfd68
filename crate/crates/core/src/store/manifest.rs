//! Run manifest: the fixed stage ledger of one pipeline run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::digest::digest_value;

/// The pipeline's stages, in execution order. The manifest always lists
/// exactly these, in this order.
pub const STAGES: [&str; 10] = [
    "ingest",
    "segment",
    "summarize",
    "extract",
    "classify",
    "pairs",
    "disagree",
    "aggregate",
    "stats",
    "report",
];

/// Position of a stage in [`STAGES`], or `None` for an unknown name.
pub fn stage_position(name: &str) -> Option<usize> {
    STAGES.iter().position(|s| *s == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub status: StageStatus,
    /// Artifact path (relative to the run directory) → SHA-256 of the
    /// file bytes, for every file this stage wrote.
    pub artifacts: BTreeMap<String, String>,
    pub completed_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub created_at: u64,
    /// Digest of the effective run configuration.
    pub config_digest: String,
    pub prompt_version: String,
    /// Digest of the full prompt template set (version tag included).
    #[serde(default)]
    pub prompts_digest: String,
    /// Input name → digest of its raw bytes.
    pub input_digests: BTreeMap<String, String>,
    pub stages: Vec<StageEntry>,
    /// Named processing orders that sequential stages committed to —
    /// classification order, question-placement order — so a resumed run
    /// replays decisions against the same evolving state.
    #[serde(default)]
    pub orders: BTreeMap<String, Vec<String>>,
}

/// Derive the run id from everything that determines a run's output:
/// configuration, the prompt template set, and inputs. Identical work
/// always maps to the same run directory, which is what makes resuming
/// safe — and any change to config, templates, or inputs lands in a fresh
/// directory instead of mixing with stale artifacts.
pub fn derive_run_id(
    config_digest: &str,
    prompts_digest: &str,
    input_digests: &BTreeMap<String, String>,
) -> String {
    let value = serde_json::json!({
        "config": config_digest,
        "inputs": input_digests,
        "prompts": prompts_digest,
    });
    format!("run-{}", &digest_value(&value)[..16])
}

impl Manifest {
    pub fn new(
        run_id: String,
        created_at: u64,
        config_digest: String,
        prompt_version: String,
        prompts_digest: String,
        input_digests: BTreeMap<String, String>,
    ) -> Self {
        Manifest {
            run_id,
            created_at,
            config_digest,
            prompt_version,
            prompts_digest,
            input_digests,
            stages: STAGES
                .iter()
                .map(|name| StageEntry {
                    name: (*name).to_string(),
                    status: StageStatus::Pending,
                    artifacts: BTreeMap::new(),
                    completed_at: None,
                })
                .collect(),
            orders: BTreeMap::new(),
        }
    }

    /// True when the stage list is exactly [`STAGES`] in order.
    pub fn has_canonical_stages(&self) -> bool {
        self.stages.len() == STAGES.len()
            && self.stages.iter().zip(STAGES).all(|(entry, name)| entry.name == name)
    }

    pub fn stage(&self, name: &str) -> Option<&StageEntry> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn stage_mut(&mut self, name: &str) -> Option<&mut StageEntry> {
        self.stages.iter_mut().find(|s| s.name == name)
    }

    pub fn is_complete(&self, name: &str) -> bool {
        self.stage(name)
            .is_some_and(|s| s.status == StageStatus::Complete)
    }

    pub fn mark_complete(
        &mut self,
        name: &str,
        artifacts: BTreeMap<String, String>,
        timestamp: u64,
    ) {
        if let Some(stage) = self.stage_mut(name) {
            stage.status = StageStatus::Complete;
            stage.artifacts = artifacts;
            stage.completed_at = Some(timestamp);
        }
    }

    /// Reset a stage and everything after it to pending. Returns the
    /// names that were actually flipped from complete.
    pub fn invalidate_from(&mut self, name: &str) -> Vec<String> {
        let Some(position) = stage_position(name) else {
            return Vec::new();
        };
        let mut flipped = Vec::new();
        for stage in &mut self.stages[position..] {
            if stage.status == StageStatus::Complete {
                flipped.push(stage.name.clone());
            }
            stage.status = StageStatus::Pending;
            stage.artifacts.clear();
            stage.completed_at = None;
        }
        flipped
    }
}
