//! Topic registry and topic/attitude classification bookkeeping.
//!
//! The registry starts from a curated seed of AI-risk discussion topics
//! (plus the one non-AI bucket) and only ever grows: classification may
//! register new topics but never rename, retype, or remove existing ones,
//! so topic ids stay meaningful across runs. A revision counter records
//! how many additions have happened.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Attitude;

/// Label of the one topic that is not about AI.
pub const NON_AI_LABEL: &str = "Non-AI topic";

const SEED_JSON: &str = include_str!("../data/topic_seed.json");

/// Where a topic entered the registry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicOrigin {
    /// Part of the built-in catalogue.
    Seed,
    /// Registered by a classification decision during a run.
    #[default]
    ModelCreated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    /// Stable id of the form `T001`, assigned in registration order.
    pub id: String,
    pub label: String,
    pub theme: String,
    /// Everything except the non-AI bucket counts as an AI-risk topic.
    pub is_ai_risk: bool,
    #[serde(default)]
    pub origin: TopicOrigin,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopicError {
    #[error("a topic labelled {0:?} already exists")]
    DuplicateLabel(String),
    #[error("no topic {0:?} in the registry")]
    UnknownTopic(String),
    #[error("topic label must not be empty")]
    EmptyLabel,
}

/// Case- and whitespace-insensitive form used for label uniqueness and
/// label equivalence checks.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Append-only topic catalogue.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRegistry {
    topics: Vec<Topic>,
    /// Number of topics added after construction (seed or empty).
    revision: u64,
}

impl TopicRegistry {
    pub fn empty() -> Self {
        TopicRegistry::default()
    }

    /// The built-in catalogue of AI-risk topics plus the non-AI bucket.
    pub fn seed() -> Self {
        #[derive(Deserialize)]
        struct SeedEntry {
            label: String,
            theme: String,
        }
        let entries: Vec<SeedEntry> =
            serde_json::from_str(SEED_JSON).expect("built-in topic seed parses");
        let mut registry = TopicRegistry::empty();
        for entry in entries {
            registry
                .push_topic(&entry.label, &entry.theme, TopicOrigin::Seed)
                .expect("built-in topic seed has unique labels");
        }
        registry.revision = 0;
        registry
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn get(&self, id: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.id == id)
    }

    /// Look a topic up by label, ignoring case and whitespace runs.
    pub fn by_label(&self, label: &str) -> Option<&Topic> {
        let wanted = normalize_label(label);
        self.topics
            .iter()
            .find(|t| normalize_label(&t.label) == wanted)
    }

    /// Register a new topic, assigning it the next id. Labels must be
    /// unique modulo case and whitespace.
    pub fn add(&mut self, label: &str, theme: &str) -> Result<&Topic, TopicError> {
        self.push_topic(label, theme, TopicOrigin::ModelCreated)
    }

    fn push_topic(
        &mut self,
        label: &str,
        theme: &str,
        origin: TopicOrigin,
    ) -> Result<&Topic, TopicError> {
        let label = label.split_whitespace().collect::<Vec<_>>().join(" ");
        if label.is_empty() {
            return Err(TopicError::EmptyLabel);
        }
        if let Some(existing) = self.by_label(&label) {
            return Err(TopicError::DuplicateLabel(existing.label.clone()));
        }
        let id = format!("T{:03}", self.topics.len() + 1);
        self.topics.push(Topic {
            id,
            is_ai_risk: normalize_label(&label) != normalize_label(NON_AI_LABEL),
            label,
            theme: theme.to_string(),
            origin,
        });
        self.revision += 1;
        Ok(self.topics.last().expect("just pushed"))
    }

    /// Resolve a classifier's topic reference — an id like `T004` or a
    /// label — to the registered topic.
    pub fn resolve(&self, reference: &str) -> Option<&Topic> {
        self.get(reference).or_else(|| self.by_label(reference))
    }

    /// True when `other` continues this registry: everything here is
    /// present there, unchanged, in the same order.
    pub fn is_prefix_of(&self, other: &TopicRegistry) -> bool {
        self.topics.len() <= other.topics.len()
            && self.topics.iter().zip(&other.topics).all(|(a, b)| a == b)
    }

    pub fn non_ai_topic(&self) -> Option<&Topic> {
        self.by_label(NON_AI_LABEL)
    }
}

/// One classifier's verdict on a single conclusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAttitudeCall {
    /// Topic id the classifier picked, if it picked an existing one that
    /// resolved; `None` means it proposed something outside the registry.
    pub topic_id: Option<String>,
    pub attitude: Attitude,
}

/// The reconciled decision for one conclusion, with enough context to
/// score how the three calls related.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationDecision {
    pub worker_a: TopicAttitudeCall,
    pub worker_b: TopicAttitudeCall,
    /// Final topic id (always resolves in the registry the decision was
    /// made against).
    pub topic_id: String,
    pub attitude: Attitude,
    /// The reconciler judged the two workers' topic picks to mean the
    /// same thing even if the ids differ.
    pub workers_equivalent: bool,
    /// The final topic was created during this decision.
    pub is_new_topic: bool,
}

/// How the final topic related to the workers' picks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicAgreement {
    /// Both workers picked the final topic.
    BothSame,
    /// Workers picked differently but equivalently; the final matches one.
    SelectsFromOne,
    AOnly,
    BOnly,
    /// The final topic was newly registered.
    NewTopic,
    /// The final is an existing topic neither worker picked.
    OverridesBoth,
}

/// How the final attitude related to the workers'.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeAgreement {
    AllThree,
    OneWorker,
    Neither,
}

/// How the three AI-vs-non-AI judgements split. Three binary opinions
/// always have a majority, so it is one of these two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AiAgreement {
    AllThree,
    TwoOfThree,
}

pub fn classify_topic_agreement(decision: &ClassificationDecision) -> TopicAgreement {
    if decision.is_new_topic {
        return TopicAgreement::NewTopic;
    }
    let a = decision.worker_a.topic_id.as_deref();
    let b = decision.worker_b.topic_id.as_deref();
    let final_topic = Some(decision.topic_id.as_str());
    match (a == final_topic, b == final_topic) {
        (true, true) => TopicAgreement::BothSame,
        (true, false) | (false, true) if decision.workers_equivalent => {
            TopicAgreement::SelectsFromOne
        }
        (true, false) => TopicAgreement::AOnly,
        (false, true) => TopicAgreement::BOnly,
        (false, false) => TopicAgreement::OverridesBoth,
    }
}

pub fn classify_attitude_agreement(decision: &ClassificationDecision) -> AttitudeAgreement {
    let a = decision.worker_a.attitude == decision.attitude;
    let b = decision.worker_b.attitude == decision.attitude;
    match (a, b) {
        (true, true) => AttitudeAgreement::AllThree,
        (true, false) | (false, true) => AttitudeAgreement::OneWorker,
        (false, false) => AttitudeAgreement::Neither,
    }
}

/// AI-vs-non-AI consensus. A worker pick that resolves to no registered
/// topic is a proposal for a new topic, and new topics are AI-risk
/// topics by construction, so it counts as an AI judgement.
pub fn classify_ai_agreement(
    registry: &TopicRegistry,
    decision: &ClassificationDecision,
) -> Result<AiAgreement, TopicError> {
    let is_ai = |topic_id: Option<&str>| -> Result<bool, TopicError> {
        match topic_id {
            None => Ok(true),
            Some(id) => registry
                .get(id)
                .map(|t| t.is_ai_risk)
                .ok_or_else(|| TopicError::UnknownTopic(id.to_string())),
        }
    };
    let final_ai = is_ai(Some(&decision.topic_id))?;
    let a = is_ai(decision.worker_a.topic_id.as_deref())?;
    let b = is_ai(decision.worker_b.topic_id.as_deref())?;
    Ok(if a == final_ai && b == final_ai {
        AiAgreement::AllThree
    } else {
        AiAgreement::TwoOfThree
    })
}

/// Running tally of classification agreement, one count per outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub ai: BTreeMap<AiAgreement, u64>,
    pub topic: BTreeMap<TopicAgreement, u64>,
    pub attitude: BTreeMap<AttitudeAgreement, u64>,
    pub decisions: u64,
}

impl AgreementTable {
    pub fn record(
        &mut self,
        registry: &TopicRegistry,
        decision: &ClassificationDecision,
    ) -> Result<(), TopicError> {
        let ai = classify_ai_agreement(registry, decision)?;
        *self.ai.entry(ai).or_insert(0) += 1;
        *self
            .topic
            .entry(classify_topic_agreement(decision))
            .or_insert(0) += 1;
        *self
            .attitude
            .entry(classify_attitude_agreement(decision))
            .or_insert(0) += 1;
        self.decisions += 1;
        Ok(())
    }
}
