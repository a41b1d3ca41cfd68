//! End-to-end orchestration: drives a transcript corpus through the ten
//! canonical stages — ingest, segment, summarize, extract, classify,
//! pairs, disagree, aggregate, stats, report — persisting every artifact
//! and model exchange under a content-derived run directory.
//!
//! Each stage reads only the artifacts of earlier stages, so a run can
//! stop and resume at any stage boundary, and any stage can be redone by
//! invalidating it in the manifest. Stages that assign ids while
//! iterating (classify registers topics, aggregate registers questions)
//! commit their processing order to the manifest before running, so a
//! resumed run either reproduces the same ids or refuses to continue.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::aggregate::{
    classify_divergence, theme_report, AggregationError, CausalQuestion, ConflictMap,
    QuestionAssignment, QuestionChoice, QuestionChoiceRecord, ThemeReport,
};
use crate::chain::{
    enthymeme_stats, Attitude, ChainSchemaError, Explicitness, PremiseType, ReasoningChain,
};
use crate::dag::{build_dag, DagError};
use crate::disagreement::{
    enumerate_pairs, find_root, root_type_distribution, slugify, ArgumentKey, ClassifiedArgument,
    DisagreementError, DisagreementReport, TopicPair, TypePrecedence,
};
use crate::ensemble::prompts::prompts_digest;
use crate::ensemble::stages::{
    AggregateTask, ClassifyTask, DisagreeTask, ExtractTask, Segment, SegmentTask,
    SummarizeSegment, SummarizeTask, TopicVote,
};
use crate::ensemble::{Agreement, Ensemble, EnsembleError, EnsembleRecord, PROMPT_VERSION};
use crate::stats::{
    chi_square_by_type, composition_summary, expected_root_counts, regression_rows,
    ChiSquareTest, CompositionSummary, StatsError,
};
use crate::store::manifest::{stage_position, STAGES};
use crate::store::transcript::{
    parse_speaker_table, parse_transcript, sniff_format, speaker_meta, Transcript,
    TranscriptError,
};
use crate::store::{
    create_or_resume, sha256_hex, Manifest, RunStore, StoreError,
};
use crate::topic::{
    ClassificationDecision, TopicAttitudeCall, TopicError, TopicRegistry,
};
use crate::validate::{coherence_gap_report, validate_chain, GapSite, ValidationReport};
use crate::{report, RefLabel};

// ---------------------------------------------------------------------------
// Configuration & errors
// ---------------------------------------------------------------------------

/// One transcript file and the episode name it is filed under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeSource {
    pub episode: String,
    pub path: PathBuf,
}

/// Everything a run needs besides the model backends.
#[derive(Debug, Clone, Default)]
pub struct PipelineSettings {
    pub episodes: Vec<EpisodeSource>,
    /// Optional `name,profession,gender` CSV sidecar.
    pub speaker_table: Option<PathBuf>,
    /// Treat this speaker as the host instead of inferring by turn count.
    pub host_override: Option<String>,
    /// Optional `question_id,theme` CSV enabling the per-theme rollup.
    pub question_themes: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("episode {episode}: {source}")]
    Transcript {
        episode: String,
        #[source]
        source: TranscriptError,
    },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    ChainSchema(#[from] ChainSchemaError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Disagreement(#[from] DisagreementError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("stage {stage:?} needs {missing:?} to be complete first")]
    MissingPrerequisite { stage: String, missing: String },
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
    #[error(
        "requested run id {requested:?}, but these inputs and this configuration \
         derive {derived:?}"
    )]
    RunIdMismatch { derived: String, requested: String },
    #[error(
        "the {stage:?} stage previously committed to a different processing order; \
         the run directory no longer matches its inputs"
    )]
    OrderDrift { stage: String },
    #[error("{0}")]
    Invalid(String),
}

impl PipelineError {
    fn input(path: &std::path::Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Input {
            path: path.to_path_buf(),
            source,
        }
    }
}

// ---------------------------------------------------------------------------
// Run identity
// ---------------------------------------------------------------------------

/// The content-derived identity of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunIdentity {
    pub run_id: String,
    pub config_digest: String,
    pub prompts_digest: String,
    /// Input name → digest of its raw bytes.
    pub input_digests: BTreeMap<String, String>,
}

/// Digest every input file and derive the run id. Equal settings and
/// equal file bytes always derive the same id.
pub fn run_identity(
    settings: &PipelineSettings,
    config_digest: &str,
) -> Result<RunIdentity, PipelineError> {
    let mut names = BTreeSet::new();
    let mut slugs = BTreeSet::new();
    let mut input_digests = BTreeMap::new();
    for source in &settings.episodes {
        if !names.insert(source.episode.clone()) {
            return Err(PipelineError::Invalid(format!(
                "episode {:?} is listed more than once",
                source.episode
            )));
        }
        let slug = slugify(&source.episode);
        if slug.is_empty() {
            return Err(PipelineError::Invalid(format!(
                "episode {:?} has no filename-safe characters",
                source.episode
            )));
        }
        if !slugs.insert(slug.clone()) {
            return Err(PipelineError::Invalid(format!(
                "episodes {:?} and another episode share the file slug {slug:?}",
                source.episode
            )));
        }
        let bytes = fs::read(&source.path).map_err(PipelineError::input(&source.path))?;
        input_digests.insert(format!("episode:{}", source.episode), sha256_hex(&bytes));
    }
    if let Some(path) = &settings.speaker_table {
        let bytes = fs::read(path).map_err(PipelineError::input(path))?;
        input_digests.insert("speakers".to_string(), sha256_hex(&bytes));
    }
    if let Some(path) = &settings.question_themes {
        let bytes = fs::read(path).map_err(PipelineError::input(path))?;
        input_digests.insert("question_themes".to_string(), sha256_hex(&bytes));
    }
    let prompts_digest = prompts_digest();
    let run_id = crate::store::derive_run_id(config_digest, &prompts_digest, &input_digests);
    Ok(RunIdentity {
        run_id,
        config_digest: config_digest.to_string(),
        prompts_digest,
        input_digests,
    })
}

// ---------------------------------------------------------------------------
// Persisted artifact shapes
// ---------------------------------------------------------------------------

/// The argued spans found in one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentArtifact {
    pub episode: String,
    pub segments: Vec<Segment>,
}

/// One guest's synthesized argument summary; `summary` is `None` when the
/// guest spoke in no argued segment or no argument was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryArtifact {
    pub episode: String,
    pub speaker: String,
    pub summary: Option<String>,
    /// The argued segments this guest spoke in.
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryIndexEntry {
    pub episode: String,
    pub speaker: String,
    pub artifact: String,
    pub has_summary: bool,
}

/// Validation findings and coherence-gap candidates for one stored chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenArtifact {
    pub violations: ValidationReport,
    pub gaps: Vec<GapSite>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainIndexEntry {
    pub episode: String,
    pub speaker: String,
    pub artifact: String,
    pub screen: String,
}

/// The final call on one conclusion, with the full decision context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedConclusion {
    pub key: ArgumentKey,
    pub topic_id: String,
    pub attitude: Attitude,
    pub decision: ClassificationDecision,
    pub agreement: Agreement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedChainEntry {
    pub episode: String,
    pub speaker: String,
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndexEntry {
    pub pair_key: String,
    pub topic_id: String,
    pub artifact: String,
}

/// Corpus-level divergence statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub disagreeing_pairs: u64,
    pub root_types: BTreeMap<PremiseType, u64>,
    /// Chance distribution of root types under the pair chains' premise
    /// composition; absent without disagreeing pairs.
    pub base_probability: Option<BTreeMap<PremiseType, f64>>,
    pub expected_root_counts: Option<BTreeMap<PremiseType, f64>>,
    pub chi_square: Option<ChiSquareTest>,
    pub chi_square_note: Option<String>,
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// What running one stage did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutcome {
    /// The manifest already records this stage as complete.
    AlreadyComplete,
    /// The stage ran; artifact path → digest.
    Ran { artifacts: BTreeMap<String, String> },
}

/// An open run: store, manifest, model seats, and inputs.
pub struct Pipeline {
    store: RunStore,
    manifest: Manifest,
    ensemble: Ensemble,
    settings: PipelineSettings,
}

impl Pipeline {
    /// Open (or resume) the run these settings derive. A resumed run has
    /// its recorded artifacts re-verified; stages whose artifacts changed
    /// or vanished are invalidated together with everything downstream.
    pub fn open(
        out_root: impl Into<PathBuf>,
        settings: PipelineSettings,
        ensemble: Ensemble,
        config_digest: String,
        expected_run_id: Option<&str>,
        fixed_timestamp: Option<u64>,
    ) -> Result<Pipeline, PipelineError> {
        let identity = run_identity(&settings, &config_digest)?;
        if let Some(requested) = expected_run_id {
            if requested != identity.run_id {
                return Err(PipelineError::RunIdMismatch {
                    derived: identity.run_id,
                    requested: requested.to_string(),
                });
            }
        }
        let (store, mut manifest, resumed) = create_or_resume(
            out_root,
            identity.run_id,
            identity.config_digest,
            PROMPT_VERSION.to_string(),
            identity.prompts_digest,
            identity.input_digests,
            fixed_timestamp,
        )?;
        if resumed {
            let flipped = store.verify_and_invalidate(&mut manifest)?;
            if !flipped.is_empty() {
                log::warn!(
                    "artifacts changed on disk; redoing stages: {}",
                    flipped.join(", ")
                );
                store.save_manifest(&manifest)?;
            }
        }
        Ok(Pipeline {
            store,
            manifest,
            ensemble,
            settings,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    /// Run one named stage, if its prerequisites are complete and it is
    /// not already done.
    pub fn run_stage(&mut self, name: &str) -> Result<StageOutcome, PipelineError> {
        let position =
            stage_position(name).ok_or_else(|| PipelineError::UnknownStage(name.to_string()))?;
        if self.manifest.is_complete(name) {
            return Ok(StageOutcome::AlreadyComplete);
        }
        for prerequisite in &STAGES[..position] {
            if !self.manifest.is_complete(prerequisite) {
                return Err(PipelineError::MissingPrerequisite {
                    stage: name.to_string(),
                    missing: prerequisite.to_string(),
                });
            }
        }
        let artifacts = match name {
            "ingest" => self.stage_ingest()?,
            "segment" => self.stage_segment()?,
            "summarize" => self.stage_summarize()?,
            "extract" => self.stage_extract()?,
            "classify" => self.stage_classify()?,
            "pairs" => self.stage_pairs()?,
            "disagree" => self.stage_disagree()?,
            "aggregate" => self.stage_aggregate()?,
            "stats" => self.stage_stats()?,
            "report" => self.stage_report()?,
            other => return Err(PipelineError::UnknownStage(other.to_string())),
        };
        let timestamp = self.store.timestamp();
        self.manifest.mark_complete(name, artifacts.clone(), timestamp);
        self.store.save_manifest(&self.manifest)?;
        Ok(StageOutcome::Ran { artifacts })
    }

    /// Run every stage in order.
    pub fn run_all(&mut self) -> Result<Vec<(String, StageOutcome)>, PipelineError> {
        let mut outcomes = Vec::with_capacity(STAGES.len());
        for stage in STAGES {
            outcomes.push((stage.to_string(), self.run_stage(stage)?));
        }
        Ok(outcomes)
    }

    // -- shared loading helpers ---------------------------------------------

    fn transcript_path(episode: &str) -> String {
        format!("ingest/transcripts/{}.json", slugify(episode))
    }

    fn load_transcript(&self, episode: &str) -> Result<Transcript, PipelineError> {
        Ok(self.store.read_json(&Self::transcript_path(episode))?)
    }

    fn load_speaker_table(
        &self,
    ) -> Result<BTreeMap<String, crate::chain::SpeakerMeta>, PipelineError> {
        Ok(self.store.read_json("ingest/speakers.json")?)
    }

    fn load_chain(&self, relative: &str) -> Result<ReasoningChain, PipelineError> {
        let bytes = self.store.read_bytes(relative)?;
        let text = String::from_utf8(bytes)
            .map_err(|e| PipelineError::Invalid(format!("{relative} is not UTF-8: {e}")))?;
        Ok(ReasoningChain::from_schema_json(&text)?)
    }

    /// Stamped chains from the classify stage, keyed by (episode, speaker).
    fn load_classified_chains(
        &self,
    ) -> Result<BTreeMap<(String, String), ReasoningChain>, PipelineError> {
        let entries: Vec<ClassifiedChainEntry> = self.store.read_json("classified/index.json")?;
        let mut chains = BTreeMap::new();
        for entry in entries {
            let chain = self.load_chain(&entry.artifact)?;
            chains.insert((entry.episode, entry.speaker), chain);
        }
        Ok(chains)
    }

    fn chain_for<'a>(
        chains: &'a BTreeMap<(String, String), ReasoningChain>,
        key: &ArgumentKey,
    ) -> Result<&'a ReasoningChain, PipelineError> {
        chains
            .get(&(key.episode.clone(), key.speaker.clone()))
            .ok_or_else(|| {
                PipelineError::Invalid(format!(
                    "no stored chain for {} in episode {}",
                    key.speaker, key.episode
                ))
            })
    }

    /// The host of an episode, honoring the configured override.
    fn host_of<'a>(&'a self, transcript: &'a Transcript) -> &'a str {
        match &self.settings.host_override {
            Some(name) => name,
            None => transcript.host(),
        }
    }

    /// Commit a stage's processing order to the manifest, or verify the
    /// committed order still matches.
    fn commit_order(&mut self, stage: &str, order: &[String]) -> Result<(), PipelineError> {
        match self.manifest.orders.get(stage) {
            Some(recorded) if recorded == order => Ok(()),
            Some(_) => Err(PipelineError::OrderDrift {
                stage: stage.to_string(),
            }),
            None => {
                self.manifest
                    .orders
                    .insert(stage.to_string(), order.to_vec());
                self.store.save_manifest(&self.manifest)?;
                Ok(())
            }
        }
    }

    // -- stages ---------------------------------------------------------------

    /// Parse every transcript and the optional speaker sidecar into
    /// canonical JSON artifacts.
    fn stage_ingest(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut artifacts = BTreeMap::new();
        let mut episodes = Vec::new();
        for source in &self.settings.episodes {
            let text =
                fs::read_to_string(&source.path).map_err(PipelineError::input(&source.path))?;
            let transcript = parse_transcript(&source.episode, &text, sniff_format(&text))
                .map_err(|e| PipelineError::Transcript {
                    episode: source.episode.clone(),
                    source: e,
                })?;
            let relative = Self::transcript_path(&source.episode);
            let digest = self.store.write_json(&relative, &transcript)?;
            artifacts.insert(relative, digest);
            episodes.push(source.episode.clone());
        }
        let speakers = match &self.settings.speaker_table {
            None => BTreeMap::new(),
            Some(path) => {
                let file = fs::File::open(path).map_err(PipelineError::input(path))?;
                parse_speaker_table(file).map_err(|e| PipelineError::Transcript {
                    episode: "(speaker table)".to_string(),
                    source: e,
                })?
            }
        };
        artifacts.insert(
            "ingest/speakers.json".to_string(),
            self.store.write_json("ingest/speakers.json", &speakers)?,
        );
        artifacts.insert(
            "ingest/episodes.json".to_string(),
            self.store.write_json("ingest/episodes.json", &episodes)?,
        );
        Ok(artifacts)
    }

    /// Mark the argued spans of every episode with a single long-context
    /// seat.
    fn stage_segment(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut artifacts = BTreeMap::new();
        for source in self.settings.episodes.clone() {
            let transcript = self.load_transcript(&source.episode)?;
            let task = SegmentTask {
                episode: source.episode.clone(),
                speakers: transcript
                    .speaker_turn_counts()
                    .into_iter()
                    .map(|(name, _)| name)
                    .collect(),
                turns: numbered_turns(&transcript, 1, transcript.turns.len() as u32),
                max_turn: transcript.turns.len() as u32,
            };
            let record = self.ensemble.run_single(&task)?;
            let slug = slugify(&source.episode);
            let record_path = format!("records/segment/{slug}.json");
            artifacts.insert(record_path.clone(), self.store.write_json(&record_path, &record)?);
            let artifact = SegmentArtifact {
                episode: source.episode.clone(),
                segments: record.final_payload().cloned().unwrap_or_default(),
            };
            let path = format!("segments/{slug}.json");
            artifacts.insert(path.clone(), self.store.write_json(&path, &artifact)?);
        }
        Ok(artifacts)
    }

    /// Synthesize each guest's argument across the argued segments they
    /// spoke in. Guests outside every segment are recorded with no
    /// summary and consume no model calls.
    fn stage_summarize(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut artifacts = BTreeMap::new();
        let mut index = Vec::new();
        for source in self.settings.episodes.clone() {
            let transcript = self.load_transcript(&source.episode)?;
            let slug = slugify(&source.episode);
            let segments: SegmentArtifact = self.store.read_json(&format!("segments/{slug}.json"))?;
            let host = self.host_of(&transcript).to_string();
            let guests: Vec<String> = transcript
                .speaker_turn_counts()
                .into_iter()
                .map(|(name, _)| name)
                .filter(|name| *name != host)
                .collect();
            for guest in guests {
                let argued: Vec<Segment> = segments
                    .segments
                    .iter()
                    .filter(|s| {
                        transcript
                            .speakers_in_range(s.start_turn, s.end_turn)
                            .contains(&guest)
                    })
                    .cloned()
                    .collect();
                let artifact_path = format!("summaries/{slug}--{}.json", slugify(&guest));
                let summary = if argued.is_empty() {
                    None
                } else {
                    let task = SummarizeTask {
                        episode: source.episode.clone(),
                        speaker: guest.clone(),
                        segments: argued
                            .iter()
                            .map(|s| SummarizeSegment {
                                start_turn: s.start_turn,
                                end_turn: s.end_turn,
                                description: s.description.clone(),
                                turns: numbered_turns(&transcript, s.start_turn, s.end_turn),
                            })
                            .collect(),
                        transcript: numbered_turns(&transcript, 1, transcript.turns.len() as u32),
                    };
                    let record = self.ensemble.run(&task)?;
                    let record_path =
                        format!("records/summarize/{slug}--{}.json", slugify(&guest));
                    artifacts
                        .insert(record_path.clone(), self.store.write_json(&record_path, &record)?);
                    record.final_payload().cloned()
                };
                let artifact = SummaryArtifact {
                    episode: source.episode.clone(),
                    speaker: guest.clone(),
                    summary,
                    segments: argued,
                };
                index.push(SummaryIndexEntry {
                    episode: source.episode.clone(),
                    speaker: guest,
                    artifact: artifact_path.clone(),
                    has_summary: artifact
                        .summary
                        .as_deref()
                        .is_some_and(|s| !s.trim().is_empty()),
                });
                artifacts
                    .insert(artifact_path.clone(), self.store.write_json(&artifact_path, &artifact)?);
            }
        }
        artifacts.insert(
            "summaries/index.json".to_string(),
            self.store.write_json("summaries/index.json", &index)?,
        );
        Ok(artifacts)
    }

    /// Extract a typed reasoning chain for every summarized guest, store
    /// it in the canonical schema, and screen it for structural findings
    /// and coherence gaps.
    fn stage_extract(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut artifacts = BTreeMap::new();
        let mut index = Vec::new();
        let speaker_table = self.load_speaker_table()?;
        let summaries: Vec<SummaryIndexEntry> = self.store.read_json("summaries/index.json")?;
        for entry in summaries {
            if !entry.has_summary {
                continue;
            }
            let summary: SummaryArtifact = self.store.read_json(&entry.artifact)?;
            let Some(text) = summary.summary else {
                continue;
            };
            let transcript = self.load_transcript(&entry.episode)?;
            let turns = summary
                .segments
                .iter()
                .map(|s| numbered_turns(&transcript, s.start_turn, s.end_turn))
                .collect::<Vec<_>>()
                .join("\n\n");
            let meta = speaker_meta(&speaker_table, &entry.speaker);
            let task = ExtractTask {
                episode: entry.episode.clone(),
                speaker: meta.clone(),
                summary: text,
                turns,
            };
            let record = self.ensemble.run(&task)?;
            let slug = format!("{}--{}", slugify(&entry.episode), slugify(&entry.speaker));
            let record_path = format!("records/extract/{slug}.json");
            artifacts.insert(record_path.clone(), self.store.write_json(&record_path, &record)?);
            let Some(body) = record.final_payload() else {
                log::warn!(
                    "extraction found no chain for {} in episode {}",
                    entry.speaker,
                    entry.episode
                );
                continue;
            };
            let chain = ReasoningChain::from_body(meta, entry.episode.clone(), body.clone());
            let chain_path = format!("chains/{slug}.json");
            artifacts.insert(
                chain_path.clone(),
                self.store
                    .write_bytes(&chain_path, chain.to_schema_json().as_bytes())?,
            );
            let screen = ScreenArtifact {
                violations: validate_chain(&chain),
                gaps: coherence_gap_report(&chain)?,
            };
            let screen_path = format!("chains/{slug}.screen.json");
            artifacts.insert(screen_path.clone(), self.store.write_json(&screen_path, &screen)?);
            index.push(ChainIndexEntry {
                episode: entry.episode,
                speaker: entry.speaker,
                artifact: chain_path,
                screen: screen_path,
            });
        }
        artifacts.insert(
            "chains/index.json".to_string(),
            self.store.write_json("chains/index.json", &index)?,
        );
        Ok(artifacts)
    }

    /// Classify every conclusion's topic and attitude against the
    /// append-only topic catalogue, stamping the chains with the results.
    fn stage_classify(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let chain_index: Vec<ChainIndexEntry> = self.store.read_json("chains/index.json")?;
        let mut chains: Vec<ReasoningChain> = Vec::new();
        for entry in &chain_index {
            chains.push(self.load_chain(&entry.artifact)?);
        }
        let mut keys: Vec<(usize, ArgumentKey)> = Vec::new();
        for (position, chain) in chains.iter().enumerate() {
            for conclusion in &chain.conclusions {
                keys.push((
                    position,
                    ArgumentKey::new(&chain.episode, &chain.speaker.name, conclusion.id),
                ));
            }
        }
        let order: Vec<String> = keys.iter().map(|(_, key)| key.slug()).collect();
        self.commit_order("classify", &order)?;

        let mut registry = TopicRegistry::seed();
        let themes = themes_of(&registry);
        let mut table = crate::topic::AgreementTable::default();
        let mut rows: Vec<ClassifiedConclusion> = Vec::new();
        let mut artifacts = BTreeMap::new();

        for (position, key) in &keys {
            let chain = &chains[*position];
            let conclusion = chain
                .conclusions
                .iter()
                .find(|c| c.id == key.conclusion)
                .expect("key was built from this chain");
            let task = ClassifyTask {
                episode: key.episode.clone(),
                speaker: key.speaker.clone(),
                conclusion: conclusion.text.clone(),
                premise_lines: supporting_premise_lines(chain, conclusion.id)?,
                topics: registry.topics().to_vec(),
                themes: themes.clone(),
            };
            let record = self.ensemble.run(&task)?;
            let record_path = format!("records/classify/{}.json", key.slug());
            artifacts.insert(record_path.clone(), self.store.write_json(&record_path, &record)?);

            let vote = record.final_payload().cloned().ok_or_else(|| {
                PipelineError::Invalid(format!("no usable classification for {}", key.slug()))
            })?;
            let (topic_id, is_new_topic) = match &vote.topic_id {
                Some(id) => (id.clone(), false),
                None => {
                    let filing = new_topic_filing(&record.integrator.extra, &key.slug())?;
                    match registry.by_label(&filing.0) {
                        // an earlier decision in this run already registered it
                        Some(existing) => (existing.id.clone(), false),
                        None => (registry.add(&filing.0, &filing.1)?.id.clone(), true),
                    }
                }
            };
            let decision = ClassificationDecision {
                worker_a: attitude_call(record.worker_a.payload.as_ref(), &vote),
                worker_b: attitude_call(record.worker_b.payload.as_ref(), &vote),
                topic_id: topic_id.clone(),
                attitude: vote.attitude,
                workers_equivalent: record
                    .integrator
                    .extra
                    .get("workers_equivalent")
                    .and_then(Value::as_bool)
                    .unwrap_or(false),
                is_new_topic,
            };
            table.record(&registry, &decision)?;
            rows.push(ClassifiedConclusion {
                key: key.clone(),
                topic_id: topic_id.clone(),
                attitude: vote.attitude,
                decision,
                agreement: record.agreement,
            });
            // stamp the chain's conclusion
            let chain = &mut chains[*position];
            let conclusion = chain
                .conclusions
                .iter_mut()
                .find(|c| c.id == key.conclusion)
                .expect("key was built from this chain");
            conclusion.topic = Some(topic_id);
            conclusion.attitude = Some(vote.attitude);
        }

        let mut index = Vec::new();
        for (entry, chain) in chain_index.iter().zip(&chains) {
            let path = format!(
                "classified/chains/{}--{}.json",
                slugify(&entry.episode),
                slugify(&entry.speaker)
            );
            artifacts.insert(
                path.clone(),
                self.store.write_bytes(&path, chain.to_schema_json().as_bytes())?,
            );
            index.push(ClassifiedChainEntry {
                episode: entry.episode.clone(),
                speaker: entry.speaker.clone(),
                artifact: path,
            });
        }
        for (path, value) in [
            ("classified/decisions.json", serde_json::to_value(&rows)),
            ("classified/topics.json", serde_json::to_value(&registry)),
            ("classified/agreement.json", serde_json::to_value(&table)),
            ("classified/index.json", serde_json::to_value(&index)),
        ] {
            let value = value.expect("artifact values serialize");
            artifacts.insert(path.to_string(), self.store.write_json(path, &value)?);
        }
        Ok(artifacts)
    }

    /// Enumerate every optimist × pessimist pairing on AI-risk topics.
    fn stage_pairs(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let rows: Vec<ClassifiedConclusion> = self.store.read_json("classified/decisions.json")?;
        let registry: TopicRegistry = self.store.read_json("classified/topics.json")?;
        let arguments: Vec<ClassifiedArgument> = rows
            .into_iter()
            .filter(|row| {
                registry
                    .get(&row.topic_id)
                    .is_some_and(|topic| topic.is_ai_risk)
            })
            .map(|row| ClassifiedArgument {
                key: row.key,
                topic_id: row.topic_id,
                attitude: row.attitude,
            })
            .collect();
        let pairs = enumerate_pairs(&arguments);
        let mut artifacts = BTreeMap::new();
        artifacts.insert(
            "disagreement/pairs.json".to_string(),
            self.store.write_json("disagreement/pairs.json", &pairs)?,
        );
        Ok(artifacts)
    }

    /// Compare each pair's chains and locate the root divergence with the
    /// deterministic dependency analysis.
    fn stage_disagree(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let pairs: Vec<TopicPair> = self.store.read_json("disagreement/pairs.json")?;
        let registry: TopicRegistry = self.store.read_json("classified/topics.json")?;
        let chains = self.load_classified_chains()?;
        let precedence = TypePrecedence::default();
        let mut artifacts = BTreeMap::new();
        let mut index = Vec::new();
        for pair in &pairs {
            let topic = registry.get(&pair.topic_id).ok_or_else(|| {
                PipelineError::Invalid(format!("pair references unknown topic {}", pair.topic_id))
            })?;
            let optimist_chain = Self::chain_for(&chains, &pair.optimist)?.clone();
            let pessimist_chain = Self::chain_for(&chains, &pair.pessimist)?.clone();
            let task = DisagreeTask {
                topic_label: topic.label.clone(),
                optimist: pair.optimist.clone(),
                pessimist: pair.pessimist.clone(),
                optimist_chain: optimist_chain.clone(),
                pessimist_chain: pessimist_chain.clone(),
            };
            let record = self.ensemble.run(&task)?;
            let pair_key = pair.pair_key();
            let record_path = format!("records/disagree/{pair_key}.json");
            artifacts.insert(record_path.clone(), self.store.write_json(&record_path, &record)?);
            let vote = record.final_payload().cloned().ok_or_else(|| {
                PipelineError::Invalid(format!("no usable comparison for pair {pair_key}"))
            })?;
            let report = if !vote.is_disagreement {
                DisagreementReport {
                    topic_id: pair.topic_id.clone(),
                    optimist: pair.optimist.clone(),
                    pessimist: pair.pessimist.clone(),
                    is_disagreement: false,
                    points: Vec::new(),
                    root: None,
                }
            } else {
                let analysis = find_root(
                    &optimist_chain,
                    &pessimist_chain,
                    &vote.divergences,
                    &precedence,
                )?;
                if vote.claimed_root != Some(analysis.root) {
                    log::warn!(
                        "pair {pair_key}: comparer claimed root {:?}, dependency \
                         analysis picked {}",
                        vote.claimed_root,
                        analysis.root
                    );
                }
                DisagreementReport {
                    topic_id: pair.topic_id.clone(),
                    optimist: pair.optimist.clone(),
                    pessimist: pair.pessimist.clone(),
                    is_disagreement: true,
                    points: analysis.points,
                    root: Some(analysis.root),
                }
            };
            let path = format!("disagreement/{pair_key}.json");
            artifacts.insert(path.clone(), self.store.write_json(&path, &report)?);
            index.push(PairIndexEntry {
                pair_key,
                topic_id: pair.topic_id.clone(),
                artifact: path,
            });
        }
        artifacts.insert(
            "disagreement/index.json".to_string(),
            self.store.write_json("disagreement/index.json", &index)?,
        );
        Ok(artifacts)
    }

    /// Place every causal root divergence onto the append-only causal
    /// question map.
    fn stage_aggregate(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let index: Vec<PairIndexEntry> = self.store.read_json("disagreement/index.json")?;
        let chains = self.load_classified_chains()?;
        let mut work = Vec::new();
        for entry in index {
            let report: DisagreementReport = self.store.read_json(&entry.artifact)?;
            let Some(point) = report.root_point() else {
                continue;
            };
            if point.dtype == PremiseType::Causal {
                work.push((entry.pair_key, report.clone()));
            }
        }
        let order: Vec<String> = work.iter().map(|(key, _)| key.clone()).collect();
        self.commit_order("aggregate", &order)?;

        let mut map = ConflictMap::new();
        let mut assignments: Vec<QuestionAssignment> = Vec::new();
        let mut choices: Vec<QuestionChoiceRecord> = Vec::new();
        let mut artifacts = BTreeMap::new();
        for (pair_key, report) in &work {
            let point = report.root_point().expect("work items have a root").clone();
            let optimist_chain = Self::chain_for(&chains, &report.optimist)?;
            let pessimist_chain = Self::chain_for(&chains, &report.pessimist)?;
            let task = AggregateTask {
                pair_key: pair_key.clone(),
                optimist_name: report.optimist.speaker.clone(),
                pessimist_name: report.pessimist.speaker.clone(),
                optimist_premise: node_text(optimist_chain, point.optimist_ref),
                pessimist_premise: node_text(pessimist_chain, point.pessimist_ref),
                description: point.description.clone(),
                questions: map.questions().to_vec(),
            };
            let record = self.ensemble.run(&task)?;
            let record_path = format!("records/aggregate/{pair_key}.json");
            artifacts.insert(record_path.clone(), self.store.write_json(&record_path, &record)?);
            let vote = record.final_payload().cloned().ok_or_else(|| {
                PipelineError::Invalid(format!("no usable placement for pair {pair_key}"))
            })?;
            let assignment = classify_divergence(
                &mut map,
                &point,
                pair_key,
                &vote.choice,
                vote.optimist_stance,
                vote.pessimist_stance,
            )?;
            let resolve = |choice: Option<&QuestionChoice>| -> Option<String> {
                match choice? {
                    QuestionChoice::Existing { question_id } => Some(question_id.clone()),
                    QuestionChoice::New { text, .. } => map.by_text(text).map(|q| q.id.clone()),
                }
            };
            choices.push(QuestionChoiceRecord {
                worker_a: resolve(record.worker_a.payload.as_ref().map(|v| &v.choice)),
                worker_b: resolve(record.worker_b.payload.as_ref().map(|v| &v.choice)),
                chosen: assignment.question_id.clone(),
            });
            assignments.push(assignment);
        }
        for (path, value) in [
            (
                "aggregation/questions.json",
                serde_json::to_value(map.questions()),
            ),
            ("aggregation/assignments.json", serde_json::to_value(&assignments)),
            ("aggregation/choices.json", serde_json::to_value(&choices)),
        ] {
            let value = value.expect("artifact values serialize");
            artifacts.insert(path.to_string(), self.store.write_json(path, &value)?);
        }
        Ok(artifacts)
    }

    /// Corpus statistics: premise composition, the chance distribution of
    /// root-divergence types, its goodness-of-fit test, and the
    /// per-conclusion regression table.
    fn stage_stats(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let chains = self.load_classified_chains()?;
        let registry: TopicRegistry = self.store.read_json("classified/topics.json")?;
        let index: Vec<PairIndexEntry> = self.store.read_json("disagreement/index.json")?;
        let mut reports = Vec::new();
        for entry in &index {
            reports.push(self.store.read_json::<DisagreementReport>(&entry.artifact)?);
        }

        let eligible: Vec<ReasoningChain> = chains
            .values()
            .filter(|c| !c.premises.is_empty())
            .cloned()
            .collect();
        let composition: Option<CompositionSummary> = if eligible.is_empty() {
            None
        } else {
            Some(composition_summary(&eligible)?)
        };

        let mut stat_pairs = Vec::new();
        for report in reports.iter().filter(|r| r.is_disagreement) {
            stat_pairs.push((
                enthymeme_stats(Self::chain_for(&chains, &report.optimist)?),
                enthymeme_stats(Self::chain_for(&chains, &report.pessimist)?),
            ));
        }
        let disagreeing_pairs = stat_pairs.len() as u64;
        let root_types = root_type_distribution(&reports);
        let (base_probability, mut chi_square, mut chi_square_note) = if stat_pairs.is_empty() {
            (
                None,
                None,
                Some("no disagreeing pairs to ground a base distribution".to_string()),
            )
        } else {
            (Some(crate::stats::base_probability(&stat_pairs)?), None, None)
        };
        if let Some(base) = &base_probability {
            match chi_square_by_type(&root_types, base) {
                Ok(test) => chi_square = Some(test),
                Err(e) => chi_square_note = Some(e.to_string()),
            }
        }
        let expected = base_probability
            .as_ref()
            .map(|base| expected_root_counts(base, disagreeing_pairs));

        let mut regression = Vec::new();
        for chain in chains.values() {
            for row in regression_rows(chain)? {
                if registry.get(&row.topic).is_some_and(|t| t.is_ai_risk) {
                    regression.push(row);
                }
            }
        }
        let mut csv_bytes = Vec::new();
        crate::stats::export_regression_csv(&regression, &mut csv_bytes)
            .map_err(|e| PipelineError::Invalid(format!("regression export failed: {e}")))?;

        let summary = StatsSummary {
            disagreeing_pairs,
            root_types,
            base_probability,
            expected_root_counts: expected,
            chi_square,
            chi_square_note,
        };
        let mut artifacts = BTreeMap::new();
        artifacts.insert(
            "stats/composition.json".to_string(),
            self.store.write_json("stats/composition.json", &composition)?,
        );
        artifacts.insert(
            "stats/summary.json".to_string(),
            self.store.write_json("stats/summary.json", &summary)?,
        );
        artifacts.insert(
            "stats/regression.csv".to_string(),
            self.store.write_bytes("stats/regression.csv", &csv_bytes)?,
        );
        Ok(artifacts)
    }

    /// Fold the whole run into one report, rendered as JSON, Markdown,
    /// and CSV tables.
    fn stage_report(&mut self) -> Result<BTreeMap<String, String>, PipelineError> {
        let chains_by_key = self.load_classified_chains()?;
        let chains: Vec<ReasoningChain> = chains_by_key.values().cloned().collect();
        let registry: TopicRegistry = self.store.read_json("classified/topics.json")?;
        let table: crate::topic::AgreementTable = self.store.read_json("classified/agreement.json")?;
        let rows: Vec<ClassifiedConclusion> = self.store.read_json("classified/decisions.json")?;
        let classifications: Vec<(String, Attitude)> = rows
            .iter()
            .map(|row| (row.topic_id.clone(), row.attitude))
            .collect();
        let pairs: Vec<TopicPair> = self.store.read_json("disagreement/pairs.json")?;
        let index: Vec<PairIndexEntry> = self.store.read_json("disagreement/index.json")?;
        let mut reports = Vec::new();
        for entry in &index {
            reports.push(self.store.read_json::<DisagreementReport>(&entry.artifact)?);
        }
        let stats: StatsSummary = self.store.read_json("stats/summary.json")?;
        let composition: Option<CompositionSummary> = self.store.read_json("stats/composition.json")?;
        let questions: Vec<CausalQuestion> = self.store.read_json("aggregation/questions.json")?;
        let mut map = ConflictMap::new();
        for question in &questions {
            let added = map.add(&question.text, [&question.stances[0], &question.stances[1]])?;
            if added.id != question.id {
                return Err(PipelineError::Invalid(format!(
                    "stored questions are not in id order: expected {}, rebuilt {}",
                    question.id, added.id
                )));
            }
        }
        let assignments: Vec<QuestionAssignment> =
            self.store.read_json("aggregation/assignments.json")?;
        let choice_records: Vec<QuestionChoiceRecord> =
            self.store.read_json("aggregation/choices.json")?;
        let themes: Option<ThemeReport> = match &self.settings.question_themes {
            None => None,
            Some(path) => {
                let file = fs::File::open(path).map_err(PipelineError::input(path))?;
                Some(theme_report(&map, &assignments, file)?)
            }
        };
        let task_agreements = self.collect_task_agreements()?;

        let run_report = report::build(report::ReportInputs {
            run_id: &self.manifest.run_id,
            created_at: self.manifest.created_at,
            prompt_version: &self.manifest.prompt_version,
            episodes: self.settings.episodes.len(),
            chains: &chains,
            registry: &registry,
            table: &table,
            classifications: &classifications,
            task_agreements: &task_agreements,
            pair_count: pairs.len(),
            reports: &reports,
            base_probability: stats.base_probability.as_ref(),
            chi_square: stats.chi_square,
            chi_square_note: stats.chi_square_note.clone(),
            composition: composition.as_ref(),
            conflict_map: &map,
            assignments: &assignments,
            choice_records: &choice_records,
            themes,
        });

        let mut artifacts = BTreeMap::new();
        artifacts.insert(
            "report/report.json".to_string(),
            self.store.write_json("report/report.json", &run_report)?,
        );
        let renders = [
            ("report/report.md", report::render_markdown(&run_report)),
            ("report/composition.csv", report::composition_csv(&run_report)),
            (
                "report/attitude_by_topic.csv",
                report::attitude_by_topic_csv(&run_report),
            ),
            ("report/root_types.csv", report::root_types_csv(&run_report)),
            ("report/agreement.csv", report::agreement_csv(&run_report)),
            (
                "report/classification_agreement.csv",
                report::classification_agreement_csv(&run_report),
            ),
        ];
        for (path, text) in renders {
            artifacts.insert(path.to_string(), self.store.write_bytes(path, text.as_bytes())?);
        }
        if let Some(csv) = report::themes_csv(&run_report) {
            artifacts.insert(
                "report/themes.csv".to_string(),
                self.store.write_bytes("report/themes.csv", csv.as_bytes())?,
            );
        }
        Ok(artifacts)
    }

    /// (task kind, agreement) for every persisted two-worker exchange, in
    /// deterministic record order.
    fn collect_task_agreements(&self) -> Result<Vec<(String, Agreement)>, PipelineError> {
        let mut rows = Vec::new();
        for stage in ["summarize", "extract", "classify", "disagree", "aggregate"] {
            let dir = self.store.path(&format!("records/{stage}"));
            if !dir.exists() {
                continue;
            }
            let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(PipelineError::input(&dir))?
                .collect::<Result<Vec<_>, _>>()
                .map_err(PipelineError::input(&dir))?
                .into_iter()
                .map(|entry| entry.path())
                .collect();
            paths.sort();
            for path in paths {
                let bytes = fs::read(&path).map_err(PipelineError::input(&path))?;
                let record: EnsembleRecord<Value> =
                    serde_json::from_slice(&bytes).map_err(|e| {
                        PipelineError::Invalid(format!("{}: {e}", path.display()))
                    })?;
                rows.push((record.task, record.agreement));
            }
        }
        Ok(rows)
    }
}

// ---------------------------------------------------------------------------
// Free helpers
// ---------------------------------------------------------------------------

/// `[turn N] Speaker: text` lines for the inclusive turn range.
fn numbered_turns(transcript: &Transcript, start: u32, end: u32) -> String {
    transcript
        .turns
        .iter()
        .filter(|t| t.index >= start && t.index <= end)
        .map(|t| format!("[turn {}] {}: {}", t.index, t.speaker, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Distinct themes in catalogue order.
fn themes_of(registry: &TopicRegistry) -> Vec<String> {
    let mut themes: Vec<String> = Vec::new();
    for topic in registry.topics() {
        if !themes.contains(&topic.theme) {
            themes.push(topic.theme.clone());
        }
    }
    themes
}

/// Render the listed premises supporting one conclusion, in graph order.
fn supporting_premise_lines(
    chain: &ReasoningChain,
    conclusion: RefLabel,
) -> Result<String, PipelineError> {
    let dag = build_dag(chain)?;
    let ancestors = dag
        .ancestors(conclusion)
        .expect("conclusion is a chain node");
    let lines: Vec<String> = ancestors
        .iter()
        .filter_map(|&label| chain.premise(label))
        .map(|p| {
            format!(
                "{} [{}, {}, confidence {}]: {}",
                p.id,
                p.ptype.name(),
                match p.explicitness {
                    Explicitness::Explicit => "stated",
                    Explicitness::Implicit => "unstated",
                },
                p.confidence,
                p.text
            )
        })
        .collect();
    Ok(if lines.is_empty() {
        "(no listed premises)".to_string()
    } else {
        lines.join("\n")
    })
}

/// The prose content of any chain node, for prompts that quote it.
fn node_text(chain: &ReasoningChain, label: RefLabel) -> String {
    if let Some(premise) = chain.premise(label) {
        return premise.text.clone();
    }
    if let Some(derived) = chain.derived_premises.iter().find(|d| d.id == label) {
        if let Some(text) = &derived.text {
            return text.clone();
        }
        return chain
            .relationships
            .iter()
            .find(|r| r.target == Some(label))
            .and_then(|r| r.gloss.clone())
            .unwrap_or_else(|| "(implied claim)".to_string());
    }
    if let Some(conclusion) = chain.conclusions.iter().find(|c| c.id == label) {
        return conclusion.text.clone();
    }
    if let Some(relationship) = chain.relationships.iter().find(|r| r.id == label) {
        return relationship
            .gloss
            .clone()
            .unwrap_or_else(|| crate::relation::serialize_relation(relationship));
    }
    label.to_string()
}

/// A worker's topic/attitude call; a worker that produced nothing is
/// scored as disagreeing with the final answer on both axes.
fn attitude_call(payload: Option<&TopicVote>, final_vote: &TopicVote) -> TopicAttitudeCall {
    match payload {
        Some(vote) => TopicAttitudeCall {
            topic_id: vote.topic_id.clone(),
            attitude: vote.attitude,
        },
        None => TopicAttitudeCall {
            topic_id: None,
            attitude: opposite_attitude(final_vote.attitude),
        },
    }
}

fn opposite_attitude(attitude: Attitude) -> Attitude {
    match attitude {
        Attitude::Optimistic => Attitude::Pessimistic,
        Attitude::Neutral => Attitude::Pessimistic,
        Attitude::Pessimistic => Attitude::Optimistic,
    }
}

/// Pull `{label, theme}` out of the reconciler's new-topic filing.
fn new_topic_filing(extra: &Value, context: &str) -> Result<(String, String), PipelineError> {
    let filing = extra.get("new_topic").and_then(Value::as_object).ok_or_else(|| {
        PipelineError::Invalid(format!(
            "classification of {context} proposed an unregistered topic without filing it"
        ))
    })?;
    let field = |name: &str| -> Result<String, PipelineError> {
        filing
            .get(name)
            .and_then(Value::as_str)
            .map(str::to_string)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| {
                PipelineError::Invalid(format!(
                    "classification of {context}: new-topic filing lacks {name:?}"
                ))
            })
    };
    Ok((field("label")?, field("theme")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;
    use std::sync::Arc;

    use serde_json::json;

    use crate::ensemble::{MockBackend, MockScript};
    use crate::report::RunReport;

    const EPISODE: &str = "ep001";

    fn transcript_text() -> &'static str {
        "Ava Chen: Welcome back to the show where we ask whether automation helps workers.\n\
         Noah Park: Retraining programs absorb displaced workers faster than automation displaces them.\n\
         Mara Stone: Automation displaces workers faster than any retraining program can absorb them.\n\
         Noah Park: Labor data from the last decade shows net job growth alongside automation.\n\
         Mara Stone: Forecasts from labor economists project displacement accelerating sharply.\n\
         Ava Chen: Strong cases on both sides today.\n\
         Zed Ora: I just run the soundboard.\n\
         Ava Chen: Thanks for listening.\n"
    }

    fn extract_response(optimist: bool) -> Value {
        if optimist {
            json!({
                "premises": [
                    {"id": "P1", "text": "Retraining programs absorb displaced workers quickly",
                     "type": "causal", "explicit": true, "confidence": 80},
                    {"id": "P2", "text": "Labor data shows net job growth alongside automation",
                     "type": "factual", "explicit": true, "confidence": 90}
                ],
                "conclusions": [
                    {"id": "C1", "text": "Automation will not reduce overall employment"}
                ],
                "relationships": [
                    "R1: P1 + P2 -> retraining capacity and labor data together",
                    "R2: R1 => C1 -> data and retraining support steady employment"
                ]
            })
        } else {
            json!({
                "premises": [
                    {"id": "P1", "text": "Automation displaces workers faster than retraining absorbs them",
                     "type": "causal", "explicit": true, "confidence": 85},
                    {"id": "P2", "text": "Labor economists project displacement accelerating",
                     "type": "forecast", "explicit": true, "confidence": 75}
                ],
                "conclusions": [
                    {"id": "C1", "text": "Automation will reduce overall employment"}
                ],
                "relationships": [
                    "R1: P1 + P2 -> displacement pace and economist forecasts together",
                    "R2: R1 => C1 -> projected displacement outruns retraining"
                ]
            })
        }
    }

    fn classify_response(attitude: &str) -> Value {
        json!({
            "topic": "AI and employment",
            "attitude": attitude,
            "equivalent": true,
            "new_topic": {"label": "AI and employment", "theme": "Economy, Labor, and Society"}
        })
    }

    fn script() -> Arc<MockScript> {
        let disagree = json!({
            "is_disagreement": true,
            "divergences": [{
                "optimist_ref": "P1",
                "pessimist_ref": "P1",
                "type": null,
                "primary_side": null,
                "description": "whether retraining keeps pace with displacement"
            }],
            "root": 0
        });
        let aggregate = json!({
            "question": {
                "kind": "new",
                "text": "Will retraining absorb workers faster than automation displaces them",
                "stances": ["retraining keeps pace", "displacement outruns retraining"]
            },
            "optimist_stance": 0,
            "pessimist_stance": 1
        });
        let script = json!({
            "rules": [
                {
                    "task": "segment",
                    "integrator": {"segments": [
                        {"start_turn": 2, "end_turn": 5, "description": "employment debate"}
                    ]}
                },
                {
                    "task": "summarize",
                    "when": {"meta": {"speaker": "Noah Park"}},
                    "worker_a": {"summary": "Optimist worker A summary"},
                    "worker_b": {"summary": "Optimist worker B summary"},
                    "integrator": {"summary":
                        "Noah Park argues retraining absorbs displaced workers, citing decade-long labor data."}
                },
                {
                    "task": "summarize",
                    "when": {"meta": {"speaker": "Mara Stone"}},
                    "worker_a": {"summary": "Pessimist worker A summary"},
                    "worker_b": {"summary": "Pessimist worker B summary"},
                    "integrator": {"summary":
                        "Mara Stone argues automation outpaces retraining, citing economist forecasts."}
                },
                {
                    "task": "extract",
                    "when": {"meta": {"speaker": "Noah Park"}},
                    "worker_a": extract_response(true),
                    "worker_b": extract_response(true),
                    "integrator": extract_response(true)
                },
                {
                    "task": "extract",
                    "when": {"meta": {"speaker": "Mara Stone"}},
                    "worker_a": extract_response(false),
                    "worker_b": extract_response(false),
                    "integrator": extract_response(false)
                },
                {
                    "task": "classify",
                    "when": {"meta": {"speaker": "Noah Park"}},
                    "worker_a": {"topic": "AI and employment", "attitude": "optimistic"},
                    "worker_b": {"topic": "AI and employment", "attitude": "optimistic"},
                    "integrator": classify_response("optimistic")
                },
                {
                    "task": "classify",
                    "when": {"meta": {"speaker": "Mara Stone"}},
                    "worker_a": {"topic": "AI and employment", "attitude": "pessimistic"},
                    "worker_b": {"topic": "AI and employment", "attitude": "pessimistic"},
                    "integrator": classify_response("pessimistic")
                },
                {
                    "task": "disagree",
                    "worker_a": disagree,
                    "worker_b": disagree,
                    "integrator": disagree
                },
                {
                    "task": "aggregate",
                    "worker_a": aggregate,
                    "worker_b": aggregate,
                    "integrator": aggregate
                }
            ]
        });
        Arc::new(MockScript::from_json(&script.to_string()).expect("test script parses"))
    }

    fn mock_ensemble() -> Ensemble {
        let (a, b, integrator) = MockBackend::trio(script());
        Ensemble::new(Arc::new(a), Arc::new(b), Arc::new(integrator))
    }

    fn write_corpus(dir: &Path) -> PipelineSettings {
        let transcript = dir.join("ep001.txt");
        fs::write(&transcript, transcript_text()).unwrap();
        let speakers = dir.join("speakers.csv");
        fs::write(
            &speakers,
            "name,profession,gender\n\
             Noah Park,academic,male\n\
             Mara Stone,industry_tech_executive,female\n",
        )
        .unwrap();
        let themes = dir.join("question_themes.csv");
        fs::write(&themes, "question_id,theme\nQ001,\"Economy, Labor, and Society\"\n").unwrap();
        PipelineSettings {
            episodes: vec![EpisodeSource {
                episode: EPISODE.to_string(),
                path: transcript,
            }],
            speaker_table: Some(speakers),
            host_override: None,
            question_themes: Some(themes),
        }
    }

    fn open(out_root: &Path, corpus: &Path) -> Pipeline {
        Pipeline::open(
            out_root,
            write_corpus(corpus),
            mock_ensemble(),
            "test-config-digest".to_string(),
            None,
            Some(0),
        )
        .unwrap()
    }

    /// Relative path → bytes for every file under `root`.
    fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
        fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
            for entry in fs::read_dir(dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    walk(root, &path, out);
                } else {
                    let relative = path.strip_prefix(root).unwrap();
                    out.insert(
                        relative.to_string_lossy().into_owned(),
                        fs::read(&path).unwrap(),
                    );
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(root, root, &mut out);
        out
    }

    #[test]
    fn run_all_produces_every_artifact() {
        let corpus = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let mut pipeline = open(out.path(), corpus.path());
        let outcomes = pipeline.run_all().unwrap();
        assert_eq!(outcomes.len(), STAGES.len());
        assert!(outcomes
            .iter()
            .all(|(_, outcome)| matches!(outcome, StageOutcome::Ran { .. })));
        assert!(STAGES.iter().all(|s| pipeline.manifest().is_complete(s)));

        let store = pipeline.store();
        for relative in [
            "ingest/transcripts/ep001.json",
            "ingest/speakers.json",
            "segments/ep001.json",
            "summaries/index.json",
            "chains/ep001--noah-park.json",
            "chains/ep001--mara-stone.screen.json",
            "classified/decisions.json",
            "classified/topics.json",
            "disagreement/pairs.json",
            "aggregation/questions.json",
            "stats/summary.json",
            "stats/regression.csv",
            "report/report.json",
            "report/report.md",
            "report/themes.csv",
        ] {
            assert!(store.path(relative).exists(), "missing artifact {relative}");
        }

        // the soundboard operator spoke outside every argued segment
        let zed: SummaryArtifact = store.read_json("summaries/ep001--zed-ora.json").unwrap();
        assert_eq!(zed.summary, None);
        assert!(!store.path("chains/ep001--zed-ora.json").exists());

        let pairs: Vec<TopicPair> = store.read_json("disagreement/pairs.json").unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].optimist.speaker, "Noah Park");
        assert_eq!(pairs[0].pessimist.speaker, "Mara Stone");

        let report: DisagreementReport = store
            .read_json(&format!("disagreement/{}.json", pairs[0].pair_key()))
            .unwrap();
        assert!(report.is_disagreement);
        let root = report.root_point().unwrap();
        assert_eq!(root.dtype, PremiseType::Causal);
        assert!(root.is_root);

        let questions: Vec<CausalQuestion> = store.read_json("aggregation/questions.json").unwrap();
        assert_eq!(questions.len(), 1);
        assert_eq!(questions[0].id, "Q001");

        let stats: StatsSummary = store.read_json("stats/summary.json").unwrap();
        assert_eq!(stats.disagreeing_pairs, 1);
        assert_eq!(stats.root_types.get(&PremiseType::Causal), Some(&1));
        let base = stats.base_probability.as_ref().unwrap();
        assert!((base[&PremiseType::Causal] - 0.5).abs() < 1e-12);
        assert!(stats.chi_square.is_some());

        let run_report: RunReport = store.read_json("report/report.json").unwrap();
        assert_eq!(run_report.corpus.episodes, 1);
        assert_eq!(run_report.corpus.chains, 2);
        assert_eq!(run_report.classification.table.decisions, 2);
        assert_eq!(run_report.classification.new_topics, 1);
        assert_eq!(run_report.disagreement.disagreements, 1);
        assert_eq!(run_report.questions.questions.len(), 1);
        assert_eq!(run_report.questions.consistency, Some(1.0));
        let themes = run_report.themes.as_ref().unwrap();
        assert_eq!(themes.themes["Economy, Labor, and Society"].divergences, 1);
        // summarize finals matched neither worker; the rest matched both
        let summarize = run_report
            .task_agreement
            .iter()
            .find(|row| row.task == "summarize")
            .unwrap();
        assert_eq!(summarize.r1, 2);
        let classify = run_report
            .task_agreement
            .iter()
            .find(|row| row.task == "classify")
            .unwrap();
        assert_eq!(classify.r3, 2);
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let corpus = tempfile::tempdir().unwrap();
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        open(out_a.path(), corpus.path()).run_all().unwrap();
        open(out_b.path(), corpus.path()).run_all().unwrap();
        let (first, second) = (snapshot(out_a.path()), snapshot(out_b.path()));
        assert_eq!(
            first.keys().collect::<Vec<_>>(),
            second.keys().collect::<Vec<_>>()
        );
        for (path, bytes) in &first {
            assert_eq!(Some(bytes), second.get(path).as_deref(), "differs: {path}");
        }
    }

    #[test]
    fn resume_skips_completed_stages() {
        let corpus = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        open(out.path(), corpus.path()).run_all().unwrap();
        let mut resumed = open(out.path(), corpus.path());
        let outcomes = resumed.run_all().unwrap();
        assert!(outcomes
            .iter()
            .all(|(_, outcome)| *outcome == StageOutcome::AlreadyComplete));
    }

    #[test]
    fn tampered_artifact_invalidates_downstream_and_rebuilds_identically() {
        let corpus = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let mut pipeline = open(out.path(), corpus.path());
        pipeline.run_all().unwrap();
        let pristine = snapshot(out.path());
        let chain_path = pipeline.store().path("chains/ep001--noah-park.json");
        fs::write(&chain_path, b"tampered").unwrap();

        let mut resumed = open(out.path(), corpus.path());
        assert!(!resumed.manifest().is_complete("extract"));
        assert!(!resumed.manifest().is_complete("report"));
        assert!(resumed.manifest().is_complete("summarize"));
        let outcomes = resumed.run_all().unwrap();
        let by_name: BTreeMap<&str, &StageOutcome> = outcomes
            .iter()
            .map(|(name, outcome)| (name.as_str(), outcome))
            .collect();
        assert_eq!(by_name["ingest"], &StageOutcome::AlreadyComplete);
        assert_eq!(by_name["summarize"], &StageOutcome::AlreadyComplete);
        assert!(matches!(by_name["extract"], StageOutcome::Ran { .. }));
        assert!(matches!(by_name["report"], StageOutcome::Ran { .. }));
        assert_eq!(snapshot(out.path()), pristine);
    }

    #[test]
    fn stage_prerequisites_are_enforced() {
        let corpus = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let mut pipeline = open(out.path(), corpus.path());
        let err = pipeline.run_stage("extract").unwrap_err();
        match err {
            PipelineError::MissingPrerequisite { stage, missing } => {
                assert_eq!(stage, "extract");
                assert_eq!(missing, "ingest");
            }
            other => panic!("expected MissingPrerequisite, got {other:?}"),
        }
        assert!(matches!(
            pipeline.run_stage("no-such-stage").unwrap_err(),
            PipelineError::UnknownStage(_)
        ));
    }

    #[test]
    fn requested_run_id_must_match_derived() {
        let corpus = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let settings = write_corpus(corpus.path());
        let Err(err) = Pipeline::open(
            out.path(),
            settings,
            mock_ensemble(),
            "test-config-digest".to_string(),
            Some("run-0000000000000000"),
            Some(0),
        ) else {
            panic!("a mismatched run id must be rejected");
        };
        assert!(matches!(err, PipelineError::RunIdMismatch { .. }));
    }

    #[test]
    fn run_identity_rejects_duplicate_episodes() {
        let corpus = tempfile::tempdir().unwrap();
        let mut settings = write_corpus(corpus.path());
        settings.episodes.push(settings.episodes[0].clone());
        let err = run_identity(&settings, "digest").unwrap_err();
        assert!(matches!(err, PipelineError::Invalid(_)));
    }
}
