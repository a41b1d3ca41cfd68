//! Core library for dissecting argumentative reasoning in conversation
//! transcripts.
//!
//! The pipeline turns raw interview transcripts into *typed reasoning
//! chains* — a conclusion, its supporting premises, and the logical
//! relationships connecting them — then compares chains from speakers with
//! opposing attitudes on the same topic to locate the *root divergence*:
//! the most upstream pair of premises on which the two arguments part ways.
//!
//! Module map:
//!
//! * [`label`] — `P`/`R`/`C` reference labels shared by every layer.
//! * [`chain`] — reasoning-chain data model, premise-type normalization,
//!   canonical JSON schema, and enthymeme statistics.
//! * [`dag`] — the dependency graph induced by a chain's relationships,
//!   with depth and reachability queries.
//! * [`relation`] — parser and canonical serializer for relationship
//!   notation such as `R18: R8 + R17 => P26 -> gloss`.
//! * [`validate`] — structural validation (`V1`..`V8`) and the coherence
//!   gap heuristic for candidate missing-premise sites.
//! * [`ensemble`] — the two-worker/one-integrator LLM harness: backends,
//!   prompt templates, disk cache, agreement bookkeeping, and the
//!   segmentation / summarization / extraction stages.
//! * [`topic`] — topic & attitude classification against an append-only
//!   topic list, plus the classification agreement table.
//! * [`disagreement`] — chain pairing, divergence analysis, and the
//!   deterministic root-divergence rule.
//! * [`stats`] — base-rate model for divergence types, chi-square
//!   goodness of fit, pooled two-proportion z-test, premise composition
//!   summaries, and the regression CSV export.
//! * [`aggregate`] — clustering causal root divergences into an
//!   append-only map of causal questions with exactly two stances.
//! * [`store`] — transcript ingestion, content digests, run manifests,
//!   and crash-safe artifact persistence.
//! * [`pipeline`] — end-to-end orchestration of the stages above.
//! * [`report`] — JSON + CSV report emission for a completed run.

pub mod aggregate;
pub mod chain;
pub mod dag;
pub mod disagreement;
pub mod ensemble;
pub mod label;
pub mod pipeline;
pub mod relation;
pub mod report;
pub mod stats;
pub mod store;
pub mod topic;
pub mod validate;

pub use chain::{
    normalize_premise_type, Attitude, Conclusion, DerivedPremise, Explicitness, Premise,
    PremiseType, ReasoningChain, SpeakerMeta,
};
pub use dag::ChainDag;
pub use label::{LabelKind, RefLabel};
pub use pipeline::{
    run_identity, EpisodeSource, Pipeline, PipelineError, PipelineSettings, RunIdentity,
    StageOutcome,
};
pub use relation::{parse_relation, serialize_relation, RelationKind, Relationship};
pub use report::RunReport;
pub use validate::{validate_chain, ValidationReport, Violation, ViolationCode};
