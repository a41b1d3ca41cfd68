//! Run-level reporting: folds a finished run's artifacts — chains,
//! classification decisions, divergence analyses, question placements, and
//! the statistics computed over them — into one serializable report, and
//! renders that report as Markdown and as a family of CSV tables.
//!
//! Everything here is pure: [`build`] reads borrowed inputs in their
//! pipeline order and the renderers are functions of the built report, so
//! the same run produces the same bytes every time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    consistency_rate, ConflictMap, QuestionAssignment, QuestionChoiceRecord, ThemeReport,
};
use crate::chain::{Attitude, PremiseType, ReasoningChain};
use crate::disagreement::{root_type_distribution, DisagreementReport};
use crate::ensemble::Agreement;
use crate::stats::{expected_root_counts, ChiSquareTest, CompositionSummary};
use crate::topic::{AgreementTable, TopicOrigin, TopicRegistry};

/// Task kinds in pipeline order, for stable report rows.
const TASK_ORDER: [&str; 6] = [
    "segment",
    "summarize",
    "extract",
    "classify",
    "disagree",
    "aggregate",
];

// ---------------------------------------------------------------------------
// Report shape
// ---------------------------------------------------------------------------

/// Size of the analyzed corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub episodes: usize,
    /// Distinct speakers with an extracted chain.
    pub speakers: usize,
    pub chains: usize,
    pub conclusions: usize,
    /// Listed premises across all chains.
    pub premises: usize,
    pub derived_premises: usize,
}

/// Final-vs-workers agreement counts for one task kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAgreementRow {
    pub task: String,
    /// Final answer matched neither worker.
    pub r1: u64,
    /// Final answer matched worker A only.
    pub r2_matches_a: u64,
    /// Final answer matched worker B only.
    pub r2_matches_b: u64,
    /// Final answer matched both workers.
    pub r3: u64,
}

impl TaskAgreementRow {
    pub fn total(&self) -> u64 {
        self.r1 + self.r2_matches_a + self.r2_matches_b + self.r3
    }
}

/// Attitude counts for one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAttitudeRow {
    pub topic_id: String,
    pub label: String,
    pub theme: String,
    pub is_ai_risk: bool,
    /// Registered during this run rather than seeded.
    pub model_created: bool,
    pub optimistic: u64,
    pub neutral: u64,
    pub pessimistic: u64,
}

impl TopicAttitudeRow {
    pub fn total(&self) -> u64 {
        self.optimistic + self.neutral + self.pessimistic
    }
}

/// Classification outcomes: the agreement tallies plus the attitude
/// breakdown per topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationSection {
    pub table: AgreementTable,
    /// Topics registered during this run.
    pub new_topics: u64,
    /// One row per registry topic, in registry order.
    pub by_topic: Vec<TopicAttitudeRow>,
}

/// Root-divergence tally for one premise type, next to its expectation
/// under the chains' base premise composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootTypeRow {
    pub premise_type: PremiseType,
    pub actual: u64,
    pub base_share: Option<f64>,
    pub expected: Option<f64>,
}

/// Pair comparison outcomes and the root-type distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementSection {
    pub pairs: usize,
    pub disagreements: usize,
    pub no_disagreements: usize,
    /// One row per premise type, in the fixed type order.
    pub root_types: Vec<RootTypeRow>,
    /// Goodness-of-fit of the actual root types against the base shares.
    pub chi_square: Option<ChiSquareTest>,
    /// Why the test is absent, when it is.
    pub chi_square_note: Option<String>,
}

/// One causal question with its placement count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub id: String,
    pub text: String,
    pub stances: [String; 2],
    pub assignments: u64,
}

/// The causal-question map and how consistently it was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSection {
    pub questions: Vec<QuestionRow>,
    pub assignments: usize,
    /// Share of placements where both workers already named the chosen
    /// question. `None` when nothing was placed.
    pub consistency: Option<f64>,
}

/// Everything a run produced, in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    /// Unix seconds.
    pub created_at: u64,
    pub prompt_version: String,
    pub corpus: CorpusSummary,
    /// Absent when the run extracted no chains.
    pub composition: Option<CompositionSummary>,
    pub task_agreement: Vec<TaskAgreementRow>,
    pub classification: ClassificationSection,
    pub disagreement: DisagreementSection,
    pub questions: QuestionSection,
    /// Present only when a question→theme mapping was supplied.
    pub themes: Option<ThemeReport>,
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Borrowed inputs for [`build`], all in the pipeline's deterministic
/// artifact order.
pub struct ReportInputs<'a> {
    pub run_id: &'a str,
    pub created_at: u64,
    pub prompt_version: &'a str,
    pub episodes: usize,
    pub chains: &'a [ReasoningChain],
    pub registry: &'a TopicRegistry,
    pub table: &'a AgreementTable,
    /// Final (topic id, attitude) per classified conclusion.
    pub classifications: &'a [(String, Attitude)],
    /// (task kind name, agreement) per persisted exchange.
    pub task_agreements: &'a [(String, Agreement)],
    pub pair_count: usize,
    pub reports: &'a [DisagreementReport],
    pub base_probability: Option<&'a BTreeMap<PremiseType, f64>>,
    pub chi_square: Option<ChiSquareTest>,
    pub chi_square_note: Option<String>,
    pub composition: Option<&'a CompositionSummary>,
    pub conflict_map: &'a ConflictMap,
    pub assignments: &'a [QuestionAssignment],
    pub choice_records: &'a [QuestionChoiceRecord],
    pub themes: Option<ThemeReport>,
}

/// Assemble the report. Pure: equal inputs give an equal report.
pub fn build(inputs: ReportInputs<'_>) -> RunReport {
    RunReport {
        run_id: inputs.run_id.to_string(),
        created_at: inputs.created_at,
        prompt_version: inputs.prompt_version.to_string(),
        corpus: corpus_summary(inputs.episodes, inputs.chains),
        composition: inputs.composition.cloned(),
        task_agreement: fold_task_agreements(inputs.task_agreements),
        classification: classification_section(
            inputs.registry,
            inputs.table,
            inputs.classifications,
        ),
        disagreement: disagreement_section(
            inputs.pair_count,
            inputs.reports,
            inputs.base_probability,
            inputs.chi_square,
            inputs.chi_square_note,
        ),
        questions: question_section(
            inputs.conflict_map,
            inputs.assignments,
            inputs.choice_records,
        ),
        themes: inputs.themes,
    }
}

fn corpus_summary(episodes: usize, chains: &[ReasoningChain]) -> CorpusSummary {
    let speakers: BTreeSet<&str> = chains.iter().map(|c| c.speaker.name.as_str()).collect();
    CorpusSummary {
        episodes,
        speakers: speakers.len(),
        chains: chains.len(),
        conclusions: chains.iter().map(|c| c.conclusions.len()).sum(),
        premises: chains.iter().map(|c| c.premises.len()).sum(),
        derived_premises: chains.iter().map(|c| c.derived_premises.len()).sum(),
    }
}

fn fold_task_agreements(rows: &[(String, Agreement)]) -> Vec<TaskAgreementRow> {
    let mut by_task: BTreeMap<&str, TaskAgreementRow> = BTreeMap::new();
    for (task, agreement) in rows {
        let row = by_task.entry(task.as_str()).or_insert_with(|| TaskAgreementRow {
            task: task.clone(),
            ..TaskAgreementRow::default()
        });
        match agreement {
            Agreement::R1 => row.r1 += 1,
            Agreement::R2MatchesA => row.r2_matches_a += 1,
            Agreement::R2MatchesB => row.r2_matches_b += 1,
            Agreement::R3 => row.r3 += 1,
        }
    }
    let mut out: Vec<TaskAgreementRow> = by_task.into_values().collect();
    let position =
        |name: &str| TASK_ORDER.iter().position(|t| *t == name).unwrap_or(TASK_ORDER.len());
    out.sort_by(|a, b| {
        position(&a.task)
            .cmp(&position(&b.task))
            .then_with(|| a.task.cmp(&b.task))
    });
    out
}

fn classification_section(
    registry: &TopicRegistry,
    table: &AgreementTable,
    classifications: &[(String, Attitude)],
) -> ClassificationSection {
    let mut counts: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
    for (topic_id, attitude) in classifications {
        let slot = counts.entry(topic_id.as_str()).or_default();
        match attitude {
            Attitude::Optimistic => slot.0 += 1,
            Attitude::Neutral => slot.1 += 1,
            Attitude::Pessimistic => slot.2 += 1,
        }
    }
    let by_topic = registry
        .topics()
        .iter()
        .map(|topic| {
            let (optimistic, neutral, pessimistic) =
                counts.get(topic.id.as_str()).copied().unwrap_or_default();
            TopicAttitudeRow {
                topic_id: topic.id.clone(),
                label: topic.label.clone(),
                theme: topic.theme.clone(),
                is_ai_risk: topic.is_ai_risk,
                model_created: topic.origin == TopicOrigin::ModelCreated,
                optimistic,
                neutral,
                pessimistic,
            }
        })
        .collect();
    ClassificationSection {
        table: table.clone(),
        new_topics: registry
            .topics()
            .iter()
            .filter(|t| t.origin == TopicOrigin::ModelCreated)
            .count() as u64,
        by_topic,
    }
}

fn disagreement_section(
    pair_count: usize,
    reports: &[DisagreementReport],
    base: Option<&BTreeMap<PremiseType, f64>>,
    chi_square: Option<ChiSquareTest>,
    chi_square_note: Option<String>,
) -> DisagreementSection {
    let disagreements = reports.iter().filter(|r| r.is_disagreement).count();
    let actual = root_type_distribution(reports);
    let expected = base.map(|shares| expected_root_counts(shares, disagreements as u64));
    let root_types = PremiseType::ALL
        .iter()
        .map(|&ptype| RootTypeRow {
            premise_type: ptype,
            actual: actual.get(&ptype).copied().unwrap_or(0),
            base_share: base.and_then(|b| b.get(&ptype).copied()),
            expected: expected.as_ref().and_then(|e| e.get(&ptype).copied()),
        })
        .collect();
    DisagreementSection {
        pairs: pair_count,
        disagreements,
        no_disagreements: reports.len() - disagreements,
        root_types,
        chi_square,
        chi_square_note,
    }
}

fn question_section(
    map: &ConflictMap,
    assignments: &[QuestionAssignment],
    choice_records: &[QuestionChoiceRecord],
) -> QuestionSection {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for assignment in assignments {
        *counts.entry(assignment.question_id.as_str()).or_insert(0) += 1;
    }
    QuestionSection {
        questions: map
            .questions()
            .iter()
            .map(|q| QuestionRow {
                id: q.id.clone(),
                text: q.text.clone(),
                stances: q.stances.clone(),
                assignments: counts.get(q.id.as_str()).copied().unwrap_or(0),
            })
            .collect(),
        assignments: assignments.len(),
        consistency: consistency_rate(choice_records),
    }
}

// ---------------------------------------------------------------------------
// Markdown rendering
// ---------------------------------------------------------------------------

/// A table cell: pipes escaped, newlines flattened.
fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace(['\n', '\r'], " ")
}

fn pct(count: u64, total: u64) -> String {
    if total == 0 {
        "-".to_string()
    } else {
        format!("{:.1}%", 100.0 * count as f64 / total as f64)
    }
}

fn opt_share(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

/// The canonical snake_case name of a unit-variant enum value.
fn variant_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(name)) => name,
        _ => String::new(),
    }
}

/// Render the report as a Markdown document.
pub fn render_markdown(report: &RunReport) -> String {
    let mut md = String::new();
    let push_line = |md: &mut String, line: &str| {
        md.push_str(line);
        md.push('\n');
    };

    push_line(&mut md, &format!("# Run report: {}", report.run_id));
    push_line(&mut md, "");
    push_line(
        &mut md,
        &format!(
            "Created at unix time {}, prompts {}.",
            report.created_at, report.prompt_version
        ),
    );
    push_line(&mut md, "");

    // Corpus
    push_line(&mut md, "## Corpus");
    push_line(&mut md, "");
    let corpus = &report.corpus;
    push_line(&mut md, &format!("- Episodes: {}", corpus.episodes));
    push_line(&mut md, &format!("- Speakers with a chain: {}", corpus.speakers));
    push_line(&mut md, &format!("- Reasoning chains: {}", corpus.chains));
    push_line(&mut md, &format!("- Conclusions: {}", corpus.conclusions));
    push_line(
        &mut md,
        &format!(
            "- Premises: {} listed, {} derived",
            corpus.premises, corpus.derived_premises
        ),
    );
    push_line(&mut md, "");

    // Composition
    push_line(&mut md, "## Premise composition");
    push_line(&mut md, "");
    match &report.composition {
        None => push_line(&mut md, "No chains were extracted, so there is no composition."),
        Some(composition) => {
            push_line(&mut md, "| Premise type | Mean share | Explicit | Implicit |");
            push_line(&mut md, "|---|---|---|---|");
            for ptype in PremiseType::ALL {
                push_line(
                    &mut md,
                    &format!(
                        "| {} | {:.4} | {:.4} | {:.4} |",
                        ptype,
                        composition.mean_type_shares[&ptype],
                        composition.mean_explicit_shares[&ptype],
                        composition.mean_implicit_shares[&ptype],
                    ),
                );
            }
            push_line(&mut md, "");
            push_line(
                &mut md,
                &format!(
                    "Mean implicit share per chain: {:.4}. Chain sizes: {}.",
                    composition.mean_implicit_share,
                    composition
                        .premise_count_histogram
                        .iter()
                        .map(|(size, count)| format!("{size} premises x{count}"))
                        .collect::<Vec<_>>()
                        .join(", "),
                ),
            );
        }
    }
    push_line(&mut md, "");

    // Model agreement
    push_line(&mut md, "## Model agreement");
    push_line(&mut md, "");
    if report.task_agreement.is_empty() {
        push_line(&mut md, "No ensemble exchanges were recorded.");
    } else {
        push_line(
            &mut md,
            "| Task | Exchanges | Neither (R1) | A only (R2) | B only (R2) | Both (R3) |",
        );
        push_line(&mut md, "|---|---|---|---|---|---|");
        for row in &report.task_agreement {
            let total = row.total();
            push_line(
                &mut md,
                &format!(
                    "| {} | {} | {} ({}) | {} ({}) | {} ({}) | {} ({}) |",
                    cell(&row.task),
                    total,
                    row.r1,
                    pct(row.r1, total),
                    row.r2_matches_a,
                    pct(row.r2_matches_a, total),
                    row.r2_matches_b,
                    pct(row.r2_matches_b, total),
                    row.r3,
                    pct(row.r3, total),
                ),
            );
        }
    }
    push_line(&mut md, "");

    // Classification
    push_line(&mut md, "## Classification");
    push_line(&mut md, "");
    let classification = &report.classification;
    let decisions = classification.table.decisions;
    push_line(
        &mut md,
        &format!(
            "{} conclusions classified; {} new topics registered.",
            decisions, classification.new_topics
        ),
    );
    push_line(&mut md, "");
    push_line(&mut md, "| Dimension | Outcome | Count | Share |");
    push_line(&mut md, "|---|---|---|---|");
    for (outcome, count) in &classification.table.ai {
        push_line(
            &mut md,
            &format!(
                "| AI-risk consensus | {} | {} | {} |",
                variant_name(outcome),
                count,
                pct(*count, decisions)
            ),
        );
    }
    for (outcome, count) in &classification.table.topic {
        push_line(
            &mut md,
            &format!(
                "| Topic | {} | {} | {} |",
                variant_name(outcome),
                count,
                pct(*count, decisions)
            ),
        );
    }
    for (outcome, count) in &classification.table.attitude {
        push_line(
            &mut md,
            &format!(
                "| Attitude | {} | {} | {} |",
                variant_name(outcome),
                count,
                pct(*count, decisions)
            ),
        );
    }
    push_line(&mut md, "");
    let assigned: Vec<&TopicAttitudeRow> = classification
        .by_topic
        .iter()
        .filter(|row| row.total() > 0)
        .collect();
    if assigned.is_empty() {
        push_line(&mut md, "No conclusions were assigned to any topic.");
    } else {
        push_line(
            &mut md,
            "| Topic | Theme | Optimistic | Neutral | Pessimistic |",
        );
        push_line(&mut md, "|---|---|---|---|---|");
        for row in assigned {
            push_line(
                &mut md,
                &format!(
                    "| {} ({}) | {} | {} | {} | {} |",
                    cell(&row.label),
                    row.topic_id,
                    cell(&row.theme),
                    row.optimistic,
                    row.neutral,
                    row.pessimistic,
                ),
            );
        }
    }
    push_line(&mut md, "");

    // Disagreement
    push_line(&mut md, "## Disagreement");
    push_line(&mut md, "");
    let disagreement = &report.disagreement;
    push_line(
        &mut md,
        &format!(
            "{} opposing pairs compared: {} disagreements, {} without a real disagreement.",
            disagreement.pairs, disagreement.disagreements, disagreement.no_disagreements
        ),
    );
    push_line(&mut md, "");
    push_line(&mut md, "| Root type | Actual | Base share | Expected |");
    push_line(&mut md, "|---|---|---|---|");
    for row in &disagreement.root_types {
        push_line(
            &mut md,
            &format!(
                "| {} | {} | {} | {} |",
                row.premise_type,
                row.actual,
                opt_share(row.base_share),
                opt_share(row.expected),
            ),
        );
    }
    push_line(&mut md, "");
    match (&disagreement.chi_square, &disagreement.chi_square_note) {
        (Some(test), _) => push_line(
            &mut md,
            &format!(
                "Actual vs expected: chi-square = {:.6}, df = {}, p = {:e}{}.",
                test.statistic,
                test.df,
                test.p_value,
                if test.clamped { " (clamped)" } else { "" },
            ),
        ),
        (None, Some(note)) => push_line(&mut md, &format!("No chi-square test: {note}.")),
        (None, None) => push_line(&mut md, "No chi-square test was computed."),
    }
    push_line(&mut md, "");

    // Questions
    push_line(&mut md, "## Causal questions");
    push_line(&mut md, "");
    let questions = &report.questions;
    if questions.questions.is_empty() {
        push_line(&mut md, "No causal root divergences were placed.");
    } else {
        push_line(&mut md, "| Id | Question | Stances | Divergences |");
        push_line(&mut md, "|---|---|---|---|");
        for row in &questions.questions {
            push_line(
                &mut md,
                &format!(
                    "| {} | {} | 0: {} / 1: {} | {} |",
                    row.id,
                    cell(&row.text),
                    cell(&row.stances[0]),
                    cell(&row.stances[1]),
                    row.assignments,
                ),
            );
        }
        push_line(&mut md, "");
        match questions.consistency {
            Some(rate) => push_line(
                &mut md,
                &format!(
                    "{} placements; both workers named the chosen question in {:.1}% of them.",
                    questions.assignments,
                    100.0 * rate
                ),
            ),
            None => push_line(&mut md, "0 placements."),
        }
    }
    push_line(&mut md, "");

    // Themes
    if let Some(themes) = &report.themes {
        push_line(&mut md, "## Question themes");
        push_line(&mut md, "");
        let total: u64 = themes.themes.values().map(|b| b.divergences).sum();
        push_line(&mut md, "| Theme | Questions | Divergences | Share |");
        push_line(&mut md, "|---|---|---|---|");
        for (theme, block) in &themes.themes {
            push_line(
                &mut md,
                &format!(
                    "| {} | {} | {} | {} |",
                    cell(theme),
                    block.questions.len(),
                    block.divergences,
                    pct(block.divergences, total),
                ),
            );
        }
        push_line(&mut md, "");
    }

    md
}

// ---------------------------------------------------------------------------
// CSV rendering
// ---------------------------------------------------------------------------

fn csv_from(rows: Vec<Vec<String>>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row).expect("csv rows serialize");
    }
    String::from_utf8(writer.into_inner().expect("csv buffer flushes"))
        .expect("csv output is utf-8")
}

fn strings(fields: &[&str]) -> Vec<String> {
    fields.iter().map(|s| s.to_string()).collect()
}

fn opt_number(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Mean premise-type shares, one row per type.
pub fn composition_csv(report: &RunReport) -> String {
    let mut rows = vec![strings(&[
        "premise_type",
        "mean_share",
        "mean_explicit_share",
        "mean_implicit_share",
    ])];
    if let Some(composition) = &report.composition {
        for ptype in PremiseType::ALL {
            rows.push(vec![
                ptype.to_string(),
                composition.mean_type_shares[&ptype].to_string(),
                composition.mean_explicit_shares[&ptype].to_string(),
                composition.mean_implicit_shares[&ptype].to_string(),
            ]);
        }
    }
    csv_from(rows)
}

/// Attitude counts per topic, one row per registry topic.
pub fn attitude_by_topic_csv(report: &RunReport) -> String {
    let mut rows = vec![strings(&[
        "topic_id",
        "label",
        "theme",
        "is_ai_risk",
        "model_created",
        "optimistic",
        "neutral",
        "pessimistic",
        "total",
    ])];
    for row in &report.classification.by_topic {
        rows.push(vec![
            row.topic_id.clone(),
            row.label.clone(),
            row.theme.clone(),
            row.is_ai_risk.to_string(),
            row.model_created.to_string(),
            row.optimistic.to_string(),
            row.neutral.to_string(),
            row.pessimistic.to_string(),
            row.total().to_string(),
        ]);
    }
    csv_from(rows)
}

/// Actual vs expected root-divergence counts, one row per premise type.
pub fn root_types_csv(report: &RunReport) -> String {
    let mut rows = vec![strings(&[
        "premise_type",
        "actual",
        "base_share",
        "expected",
    ])];
    for row in &report.disagreement.root_types {
        rows.push(vec![
            row.premise_type.to_string(),
            row.actual.to_string(),
            opt_number(row.base_share),
            opt_number(row.expected),
        ]);
    }
    csv_from(rows)
}

/// Final-vs-workers agreement counts, one row per task kind.
pub fn agreement_csv(report: &RunReport) -> String {
    let mut rows = vec![strings(&[
        "task",
        "r1",
        "r2_matches_a",
        "r2_matches_b",
        "r3",
        "total",
    ])];
    for row in &report.task_agreement {
        rows.push(vec![
            row.task.clone(),
            row.r1.to_string(),
            row.r2_matches_a.to_string(),
            row.r2_matches_b.to_string(),
            row.r3.to_string(),
            row.total().to_string(),
        ]);
    }
    csv_from(rows)
}

/// Classification agreement tallies, one row per (dimension, outcome).
pub fn classification_agreement_csv(report: &RunReport) -> String {
    let table = &report.classification.table;
    let share = |count: u64| {
        if table.decisions == 0 {
            String::new()
        } else {
            (count as f64 / table.decisions as f64).to_string()
        }
    };
    let mut rows = vec![strings(&["dimension", "outcome", "count", "share"])];
    for (outcome, count) in &table.ai {
        rows.push(vec![
            "ai".to_string(),
            variant_name(outcome),
            count.to_string(),
            share(*count),
        ]);
    }
    for (outcome, count) in &table.topic {
        rows.push(vec![
            "topic".to_string(),
            variant_name(outcome),
            count.to_string(),
            share(*count),
        ]);
    }
    for (outcome, count) in &table.attitude {
        rows.push(vec![
            "attitude".to_string(),
            variant_name(outcome),
            count.to_string(),
            share(*count),
        ]);
    }
    csv_from(rows)
}

/// Per-theme divergence rollup; `None` when the report has no theme
/// mapping.
pub fn themes_csv(report: &RunReport) -> Option<String> {
    let themes = report.themes.as_ref()?;
    let total: u64 = themes.themes.values().map(|b| b.divergences).sum();
    let mut rows = vec![strings(&[
        "theme",
        "questions",
        "divergences",
        "divergence_share",
    ])];
    for (theme, block) in &themes.themes {
        let share = if total == 0 {
            String::new()
        } else {
            (block.divergences as f64 / total as f64).to_string()
        };
        rows.push(vec![
            theme.clone(),
            block.questions.len().to_string(),
            block.divergences.to_string(),
            share,
        ]);
    }
    Some(csv_from(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::ThemeBlock;
    use crate::chain::{
        Conclusion, Explicitness, Gender, Premise, Profession, SpeakerMeta,
    };
    use crate::disagreement::{ArgumentKey, DivergencePoint};
    use crate::label::RefLabel;
    use crate::topic::{ClassificationDecision, TopicAttitudeCall};

    fn chain(episode: &str, speaker: &str, premises: usize) -> ReasoningChain {
        let speaker = SpeakerMeta {
            name: speaker.to_string(),
            profession: Profession::Academic,
            gender: Gender::Unspecified,
        };
        let premises = (1..=premises)
            .map(|i| Premise {
                id: RefLabel::premise(i as u32),
                text: format!("premise {i}"),
                ptype: if i % 2 == 0 {
                    PremiseType::Causal
                } else {
                    PremiseType::Factual
                },
                explicitness: Explicitness::Explicit,
                confidence: 90,
            })
            .collect();
        let conclusions = vec![Conclusion {
            id: RefLabel::conclusion(1),
            text: "conclusion".to_string(),
            topic: None,
            attitude: None,
        }];
        ReasoningChain::from_parts(speaker, episode.to_string(), conclusions, premises, Vec::new())
    }

    fn disagreement_report(root_type: PremiseType) -> DisagreementReport {
        DisagreementReport {
            topic_id: "T001".to_string(),
            optimist: ArgumentKey::new("ep1", "Ada", RefLabel::conclusion(1)),
            pessimist: ArgumentKey::new("ep1", "Bo", RefLabel::conclusion(1)),
            is_disagreement: true,
            points: vec![DivergencePoint {
                optimist_ref: RefLabel::premise(1),
                pessimist_ref: RefLabel::premise(2),
                dtype: root_type,
                description: "clash".to_string(),
                depends_on: Vec::new(),
                is_root: true,
            }],
            root: Some(0),
        }
    }

    fn sample_inputs<'a>(
        chains: &'a [ReasoningChain],
        registry: &'a TopicRegistry,
        table: &'a AgreementTable,
        classifications: &'a [(String, Attitude)],
        task_agreements: &'a [(String, Agreement)],
        reports: &'a [DisagreementReport],
        base: &'a BTreeMap<PremiseType, f64>,
        map: &'a ConflictMap,
        assignments: &'a [QuestionAssignment],
        choices: &'a [QuestionChoiceRecord],
    ) -> ReportInputs<'a> {
        ReportInputs {
            run_id: "run-test",
            created_at: 42,
            prompt_version: "v1",
            episodes: 2,
            chains,
            registry,
            table,
            classifications,
            task_agreements,
            pair_count: reports.len(),
            reports,
            base_probability: Some(base),
            chi_square: None,
            chi_square_note: Some("too few categories".to_string()),
            composition: None,
            conflict_map: map,
            assignments,
            choice_records: choices,
            themes: None,
        }
    }

    fn decision(topic_id: &str, attitude: Attitude) -> ClassificationDecision {
        let call = TopicAttitudeCall {
            topic_id: Some(topic_id.to_string()),
            attitude,
        };
        ClassificationDecision {
            worker_a: call.clone(),
            worker_b: call,
            topic_id: topic_id.to_string(),
            attitude,
            workers_equivalent: true,
            is_new_topic: false,
        }
    }

    #[test]
    fn build_folds_every_section() {
        let chains = vec![chain("ep1", "Ada", 4), chain("ep2", "Bo", 2)];
        let mut registry = TopicRegistry::empty();
        registry.add("existential risk", "macro outcomes").unwrap();
        registry.add("job loss", "economics").unwrap();
        let mut table = AgreementTable::default();
        table
            .record(&registry, &decision("T001", Attitude::Pessimistic))
            .unwrap();
        table
            .record(&registry, &decision("T001", Attitude::Optimistic))
            .unwrap();
        let classifications = vec![
            ("T001".to_string(), Attitude::Pessimistic),
            ("T001".to_string(), Attitude::Optimistic),
        ];
        let task_agreements = vec![
            ("classify".to_string(), Agreement::R3),
            ("classify".to_string(), Agreement::R1),
            ("extract".to_string(), Agreement::R2MatchesB),
        ];
        let reports = vec![disagreement_report(PremiseType::Causal)];
        let base = BTreeMap::from([
            (PremiseType::Factual, 0.5),
            (PremiseType::Causal, 0.5),
        ]);
        let mut map = ConflictMap::new();
        map.add("will automation outpace retraining", ["yes", "no"]).unwrap();
        let assignments = vec![QuestionAssignment {
            pair_key: "a--vs--b".to_string(),
            question_id: "Q001".to_string(),
            optimist_stance: 1,
            pessimist_stance: 0,
        }];
        let choices = vec![QuestionChoiceRecord {
            worker_a: Some("Q001".to_string()),
            worker_b: None,
            chosen: "Q001".to_string(),
        }];
        let report = build(sample_inputs(
            &chains,
            &registry,
            &table,
            &classifications,
            &task_agreements,
            &reports,
            &base,
            &map,
            &assignments,
            &choices,
        ));

        assert_eq!(report.corpus.episodes, 2);
        assert_eq!(report.corpus.speakers, 2);
        assert_eq!(report.corpus.chains, 2);
        assert_eq!(report.corpus.conclusions, 2);
        assert_eq!(report.corpus.premises, 6);

        // extract sorts before classify in pipeline order
        assert_eq!(report.task_agreement.len(), 2);
        assert_eq!(report.task_agreement[0].task, "extract");
        assert_eq!(report.task_agreement[0].r2_matches_b, 1);
        assert_eq!(report.task_agreement[1].task, "classify");
        assert_eq!(report.task_agreement[1].r1, 1);
        assert_eq!(report.task_agreement[1].r3, 1);
        assert_eq!(report.task_agreement[1].total(), 2);

        assert_eq!(report.classification.table.decisions, 2);
        assert_eq!(report.classification.new_topics, 2);
        let row = &report.classification.by_topic[0];
        assert_eq!(row.topic_id, "T001");
        assert_eq!(row.optimistic, 1);
        assert_eq!(row.pessimistic, 1);
        assert_eq!(row.neutral, 0);
        assert_eq!(report.classification.by_topic[1].total(), 0);

        assert_eq!(report.disagreement.pairs, 1);
        assert_eq!(report.disagreement.disagreements, 1);
        assert_eq!(report.disagreement.no_disagreements, 0);
        let causal = report
            .disagreement
            .root_types
            .iter()
            .find(|r| r.premise_type == PremiseType::Causal)
            .unwrap();
        assert_eq!(causal.actual, 1);
        assert_eq!(causal.base_share, Some(0.5));
        assert_eq!(causal.expected, Some(0.5));
        let moral = report
            .disagreement
            .root_types
            .iter()
            .find(|r| r.premise_type == PremiseType::Moral)
            .unwrap();
        assert_eq!(moral.actual, 0);
        assert_eq!(moral.base_share, None);

        assert_eq!(report.questions.questions.len(), 1);
        assert_eq!(report.questions.questions[0].assignments, 1);
        assert_eq!(report.questions.consistency, Some(0.0));
    }

    #[test]
    fn markdown_renders_each_section_and_escapes_pipes() {
        let chains = vec![chain("ep1", "Ada", 2)];
        let mut registry = TopicRegistry::empty();
        registry.add("risk | reward", "macro outcomes").unwrap();
        let table = AgreementTable::default();
        let classifications = vec![("T001".to_string(), Attitude::Neutral)];
        let task_agreements = vec![("summarize".to_string(), Agreement::R3)];
        let reports: Vec<DisagreementReport> = Vec::new();
        let base = BTreeMap::new();
        let map = ConflictMap::new();
        let mut inputs = sample_inputs(
            &chains,
            &registry,
            &table,
            &classifications,
            &task_agreements,
            &reports,
            &base,
            &map,
            &[],
            &[],
        );
        inputs.base_probability = None;
        inputs.themes = Some(ThemeReport {
            themes: BTreeMap::from([(
                "economics".to_string(),
                ThemeBlock {
                    questions: vec!["Q001".to_string()],
                    divergences: 3,
                },
            )]),
        });
        let md = render_markdown(&build(inputs));

        for heading in [
            "# Run report: run-test",
            "## Corpus",
            "## Premise composition",
            "## Model agreement",
            "## Classification",
            "## Disagreement",
            "## Causal questions",
            "## Question themes",
        ] {
            assert!(md.contains(heading), "missing {heading:?} in:\n{md}");
        }
        assert!(md.contains("risk \\| reward"), "pipe must be escaped:\n{md}");
        assert!(md.contains("No chi-square test: too few categories."));
        assert!(md.contains("| economics | 1 | 3 | 100.0% |"));
    }

    #[test]
    fn csv_tables_have_fixed_headers_and_full_type_rows() {
        let chains = vec![chain("ep1", "Ada", 2)];
        let registry = TopicRegistry::empty();
        let table = AgreementTable::default();
        let base = BTreeMap::from([(PremiseType::Causal, 1.0)]);
        let map = ConflictMap::new();
        let reports = vec![disagreement_report(PremiseType::Causal)];
        let report = build(sample_inputs(
            &chains,
            &registry,
            &table,
            &[],
            &[],
            &reports,
            &base,
            &map,
            &[],
            &[],
        ));

        let composition = composition_csv(&report);
        assert_eq!(
            composition.lines().next().unwrap(),
            "premise_type,mean_share,mean_explicit_share,mean_implicit_share"
        );
        // no composition was supplied, so the table is header-only
        assert_eq!(composition.lines().count(), 1);

        let roots = root_types_csv(&report);
        assert_eq!(
            roots.lines().next().unwrap(),
            "premise_type,actual,base_share,expected"
        );
        assert_eq!(roots.lines().count(), 1 + PremiseType::ALL.len());
        assert!(roots.lines().any(|l| l == "causal,1,1,1"));
        assert!(roots.lines().any(|l| l == "moral,0,,"));

        assert_eq!(
            agreement_csv(&report).lines().next().unwrap(),
            "task,r1,r2_matches_a,r2_matches_b,r3,total"
        );
        assert_eq!(
            attitude_by_topic_csv(&report).lines().next().unwrap(),
            "topic_id,label,theme,is_ai_risk,model_created,optimistic,neutral,pessimistic,total"
        );
        assert_eq!(
            classification_agreement_csv(&report).lines().next().unwrap(),
            "dimension,outcome,count,share"
        );
        assert_eq!(themes_csv(&report), None);
    }

    #[test]
    fn build_is_deterministic() {
        let chains = vec![chain("ep1", "Ada", 3)];
        let registry = TopicRegistry::seed();
        let table = AgreementTable::default();
        let classifications = vec![("T001".to_string(), Attitude::Optimistic)];
        let task_agreements = vec![
            ("disagree".to_string(), Agreement::R2MatchesA),
            ("aggregate".to_string(), Agreement::R3),
        ];
        let reports = vec![disagreement_report(PremiseType::Factual)];
        let base = BTreeMap::from([(PremiseType::Factual, 1.0)]);
        let map = ConflictMap::new();
        let make = || {
            build(sample_inputs(
                &chains,
                &registry,
                &table,
                &classifications,
                &task_agreements,
                &reports,
                &base,
                &map,
                &[],
                &[],
            ))
        };
        let (first, second) = (make(), make());
        assert_eq!(first, second);
        assert_eq!(render_markdown(&first), render_markdown(&second));
        assert_eq!(agreement_csv(&first), agreement_csv(&second));
    }
}
