//! Aggregating causal root divergences into recurring questions.
//!
//! Root divergences of causal type across many argument pairs tend to
//! instantiate the same underlying empirical question ("does X actually
//! lead to Y?"). The [`ConflictMap`] catalogues those questions
//! append-only, each with exactly two opposing stances; every causal root
//! divergence is assigned to a question with the optimist on one stance
//! and the pessimist on the other.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::PremiseType;
use crate::disagreement::DivergencePoint;

/// A recurring empirical question with its two opposing stances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalQuestion {
    /// Stable id of the form `Q001`, assigned in registration order.
    pub id: String,
    pub text: String,
    /// Exactly two distinct stances; a divergence puts one side on each.
    pub stances: [String; 2],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("only causal root divergences aggregate into questions; this one is {dtype}")]
    NotCausal { dtype: PremiseType },
    #[error("no question {0:?} in the conflict map")]
    UnknownQuestion(String),
    #[error("a question with text {0:?} already exists")]
    DuplicateQuestion(String),
    #[error("a question needs exactly two distinct, non-empty stances")]
    BadStances,
    #[error("stance index {0} is not 0 or 1")]
    StanceOutOfRange(u8),
    #[error("optimist and pessimist cannot take the same stance")]
    SameStance,
    #[error("question {0} has no theme mapping")]
    UnmappedQuestion(String),
    #[error("theme mapping references unknown question {0}")]
    UnknownMappedQuestion(String),
    #[error("theme mapping is missing the {0:?} column")]
    MissingColumn(&'static str),
    #[error("theme mapping is not readable as CSV: {0}")]
    BadCsv(String),
}

fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Append-only catalogue of causal questions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictMap {
    questions: Vec<CausalQuestion>,
    /// Number of questions added since construction.
    revision: u64,
}

impl ConflictMap {
    pub fn new() -> Self {
        ConflictMap::default()
    }

    pub fn questions(&self) -> &[CausalQuestion] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn get(&self, id: &str) -> Option<&CausalQuestion> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Find a question by text, ignoring case and whitespace runs.
    pub fn by_text(&self, text: &str) -> Option<&CausalQuestion> {
        let wanted = normalize_text(text);
        self.questions
            .iter()
            .find(|q| normalize_text(&q.text) == wanted)
    }

    /// Register a new question with its two stances.
    pub fn add(
        &mut self,
        text: &str,
        stances: [&str; 2],
    ) -> Result<&CausalQuestion, AggregationError> {
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(AggregationError::BadStances);
        }
        if let Some(existing) = self.by_text(&text) {
            return Err(AggregationError::DuplicateQuestion(existing.text.clone()));
        }
        let stances = [stances[0].trim().to_string(), stances[1].trim().to_string()];
        if stances[0].is_empty()
            || stances[1].is_empty()
            || normalize_text(&stances[0]) == normalize_text(&stances[1])
        {
            return Err(AggregationError::BadStances);
        }
        let id = format!("Q{:03}", self.questions.len() + 1);
        self.questions.push(CausalQuestion { id, text, stances });
        self.revision += 1;
        Ok(self.questions.last().expect("just pushed"))
    }

    /// True when `other` continues this map: everything here is present
    /// there, unchanged, in the same order.
    pub fn is_prefix_of(&self, other: &ConflictMap) -> bool {
        self.questions.len() <= other.questions.len()
            && self.questions.iter().zip(&other.questions).all(|(a, b)| a == b)
    }
}

/// How a divergence maps onto a question, as proposed by whatever
/// compared the pair against the map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QuestionChoice {
    /// Assign to an existing question.
    Existing { question_id: String },
    /// Register a new question and assign to it.
    New { text: String, stances: [String; 2] },
}

/// A causal root divergence placed on a question, one side per stance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAssignment {
    pub pair_key: String,
    pub question_id: String,
    /// Index into the question's stances for the optimist side.
    pub optimist_stance: u8,
    /// Index into the question's stances for the pessimist side.
    pub pessimist_stance: u8,
}

/// Validate a root divergence and place it on a question, registering the
/// question first when the choice proposes a new one. Only causal
/// divergences are accepted, and the two sides must take the two
/// different stances.
pub fn classify_divergence(
    map: &mut ConflictMap,
    point: &DivergencePoint,
    pair_key: &str,
    choice: &QuestionChoice,
    optimist_stance: u8,
    pessimist_stance: u8,
) -> Result<QuestionAssignment, AggregationError> {
    if point.dtype != PremiseType::Causal {
        return Err(AggregationError::NotCausal { dtype: point.dtype });
    }
    for stance in [optimist_stance, pessimist_stance] {
        if stance > 1 {
            return Err(AggregationError::StanceOutOfRange(stance));
        }
    }
    if optimist_stance == pessimist_stance {
        return Err(AggregationError::SameStance);
    }
    let question_id = match choice {
        QuestionChoice::Existing { question_id } => map
            .get(question_id)
            .ok_or_else(|| AggregationError::UnknownQuestion(question_id.clone()))?
            .id
            .clone(),
        QuestionChoice::New { text, stances } => {
            // an equivalent question may already exist; reuse it
            match map.by_text(text) {
                Some(existing) => existing.id.clone(),
                None => map.add(text, [&stances[0], &stances[1]])?.id.clone(),
            }
        }
    };
    Ok(QuestionAssignment {
        pair_key: pair_key.to_string(),
        question_id,
        optimist_stance,
        pessimist_stance,
    })
}

/// One integration record for scoring: which question each worker chose
/// (`None` when a worker proposed something that matched no question) and
/// which one the final decision used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionChoiceRecord {
    pub worker_a: Option<String>,
    pub worker_b: Option<String>,
    pub chosen: String,
}

/// Share of records where the final question matched both workers'
/// choices. `None` for an empty record set.
pub fn consistency_rate(records: &[QuestionChoiceRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let matched = records
        .iter()
        .filter(|r| {
            r.worker_a.as_deref() == Some(r.chosen.as_str())
                && r.worker_b.as_deref() == Some(r.chosen.as_str())
        })
        .count();
    Some(matched as f64 / records.len() as f64)
}

/// Per-theme rollup of questions and the divergences assigned to them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeReport {
    pub themes: BTreeMap<String, ThemeBlock>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeBlock {
    /// Question ids under this theme, in id order.
    pub questions: Vec<String>,
    /// Total divergences assigned to those questions.
    pub divergences: u64,
}

/// Roll assignments up by theme, given a `question_id,theme` CSV mapping.
/// Every question in the conflict map must be mapped — an unmapped
/// question is a hard error, as is a mapping row for a question that does
/// not exist.
pub fn theme_report(
    map: &ConflictMap,
    assignments: &[QuestionAssignment],
    theme_csv: impl Read,
) -> Result<ThemeReport, AggregationError> {
    let mut reader = csv::Reader::from_reader(theme_csv);
    let headers = reader
        .headers()
        .map_err(|e| AggregationError::BadCsv(e.to_string()))?
        .clone();
    let column = |name: &'static str| -> Result<usize, AggregationError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(AggregationError::MissingColumn(name))
    };
    let question_col = column("question_id")?;
    let theme_col = column("theme")?;

    let mut theme_of: BTreeMap<String, String> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| AggregationError::BadCsv(e.to_string()))?;
        let question_id = record.get(question_col).unwrap_or("").trim().to_string();
        let theme = record.get(theme_col).unwrap_or("").trim().to_string();
        if map.get(&question_id).is_none() {
            return Err(AggregationError::UnknownMappedQuestion(question_id));
        }
        theme_of.insert(question_id, theme);
    }
    for question in map.questions() {
        if !theme_of.contains_key(&question.id) {
            return Err(AggregationError::UnmappedQuestion(question.id.clone()));
        }
    }

    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for assignment in assignments {
        if map.get(&assignment.question_id).is_none() {
            return Err(AggregationError::UnknownQuestion(
                assignment.question_id.clone(),
            ));
        }
        *counts.entry(assignment.question_id.as_str()).or_insert(0) += 1;
    }

    let mut report = ThemeReport::default();
    for question in map.questions() {
        let theme = theme_of.get(&question.id).expect("checked above");
        let block = report.themes.entry(theme.clone()).or_default();
        block.questions.push(question.id.clone());
        block.divergences += counts.get(question.id.as_str()).copied().unwrap_or(0);
    }
    Ok(report)
}
