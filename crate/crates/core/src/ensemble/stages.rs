//! The six ensemble task types, one per pipeline stage that consults
//! models: segmentation, summarization, chain extraction, topic/attitude
//! classification, disagreement comparison, and causal-question placement.
//!
//! Each task carries everything needed to phrase its prompts and to parse,
//! validate, and compare payloads. Parsers are strict: a response that
//! deviates from the requested shape yields an `Err` description, which
//! the runner feeds back to the model in a repair request.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompts::{self, Prompt};
use super::{EnsembleTask, TaskKind};
use crate::aggregate::{CausalQuestion, QuestionChoice};
use crate::chain::{ChainBody, ReasoningChain, SpeakerMeta};
use crate::disagreement::{ArgumentKey, Divergence, Side};
use crate::relation::{parse_relation, serialize_relation};
use crate::topic::{normalize_label, Topic};
use crate::validate::validate_chain;
use crate::{Attitude, RefLabel};

// ---------------------------------------------------------------------------
// Shared parsing helpers
// ---------------------------------------------------------------------------

/// Extract a JSON value from a model response, tolerating a Markdown code
/// fence around it.
pub fn json_payload(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    let inner = if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        let rest = rest.trim_start_matches(['\r', '\n']);
        let end = rest.rfind("```").ok_or("unterminated code fence")?;
        &rest[..end]
    } else {
        trimmed
    };
    serde_json::from_str(inner).map_err(|e| format!("response is not valid JSON: {e}"))
}

fn as_object(value: &Value) -> Result<&serde_json::Map<String, Value>, String> {
    value.as_object().ok_or_else(|| "response must be a JSON object".to_string())
}

fn str_field(obj: &serde_json::Map<String, Value>, key: &str) -> Result<String, String> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| format!("missing or non-string field {key:?}"))
}

fn attitude_field(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Attitude, String> {
    let raw = str_field(obj, key)?;
    Attitude::parse(&raw)
        .ok_or_else(|| format!("{key:?} must be \"optimistic\", \"pessimistic\", or \"neutral\", not {raw:?}"))
}

fn label_field(obj: &serde_json::Map<String, Value>, key: &str) -> Result<RefLabel, String> {
    let raw = str_field(obj, key)?;
    raw.parse::<RefLabel>()
        .map_err(|_| format!("{key:?} must be a node label like \"P19\", not {raw:?}"))
}

/// Everything in `obj` except the named payload fields, kept as the
/// integrator's free commentary.
fn extra_except(obj: &serde_json::Map<String, Value>, payload_keys: &[&str]) -> Value {
    let rest: serde_json::Map<String, Value> = obj
        .iter()
        .filter(|(k, _)| !payload_keys.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Value::Object(rest)
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// One argued span of a transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_turn: u32,
    pub end_turn: u32,
    pub description: String,
}

/// Mark the argued AI spans of one episode.
#[derive(Debug, Clone)]
pub struct SegmentTask {
    pub episode: String,
    pub speakers: Vec<String>,
    /// Numbered transcript rendering, `[turn N] Speaker: text` lines.
    pub turns: String,
    pub max_turn: u32,
}

fn parse_segments(value: &Value) -> Result<Option<Vec<Segment>>, String> {
    let obj = as_object(value)?;
    match obj.get("segments") {
        None => Err("missing field \"segments\"".into()),
        Some(Value::Null) => Ok(None),
        Some(Value::Array(_)) => {
            let segments: Vec<Segment> = serde_json::from_value(obj["segments"].clone())
                .map_err(|e| format!("bad segment list: {e}"))?;
            Ok(Some(segments))
        }
        Some(_) => Err("\"segments\" must be an array or null".into()),
    }
}

impl EnsembleTask for SegmentTask {
    type Payload = Vec<Segment>;

    fn kind(&self) -> TaskKind {
        TaskKind::Segment
    }

    fn input(&self) -> Value {
        json!({
            "episode": self.episode,
            "speakers": self.speakers,
            "turns": self.turns,
        })
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("episode".to_string(), self.episode.clone())])
    }

    fn worker_prompt(&self) -> Prompt {
        prompts::prompt(
            prompts::SEGMENT_WORKER,
            &[
                ("episode", &self.episode),
                ("speakers", &self.speakers.join(", ")),
                ("turns", &self.turns),
            ],
        )
    }

    fn parse_worker(&self, text: &str) -> Result<Option<Self::Payload>, String> {
        parse_segments(&json_payload(text)?)
    }

    fn validate(&self, segments: &Self::Payload) -> Result<(), String> {
        let mut previous_end = 0u32;
        for (index, segment) in segments.iter().enumerate() {
            if segment.start_turn < 1 {
                return Err(format!("segment {index}: turns are numbered from 1"));
            }
            if segment.end_turn < segment.start_turn {
                return Err(format!(
                    "segment {index}: end_turn {} is before start_turn {}",
                    segment.end_turn, segment.start_turn
                ));
            }
            if segment.end_turn > self.max_turn {
                return Err(format!(
                    "segment {index}: end_turn {} is beyond the last turn ({})",
                    segment.end_turn, self.max_turn
                ));
            }
            if segment.start_turn <= previous_end {
                return Err(format!(
                    "segment {index} starts at turn {}, which overlaps or reorders the previous segment (ends at {})",
                    segment.start_turn, previous_end
                ));
            }
            previous_end = segment.end_turn;
        }
        Ok(())
    }

    fn integrator_prompt(&self, a: Option<&Self::Payload>, b: Option<&Self::Payload>) -> Prompt {
        let render = |payload: Option<&Vec<Segment>>| match payload {
            None => "{\"segments\": null}".to_string(),
            Some(segments) => serde_json::to_string_pretty(&json!({ "segments": segments }))
                .expect("segments serialize"),
        };
        prompts::prompt(
            prompts::SEGMENT_INTEGRATOR,
            &[
                ("episode", &self.episode),
                ("turns", &self.turns),
                ("proposal_a", &render(a)),
                ("proposal_b", &render(b)),
            ],
        )
    }

    fn parse_integrator(&self, text: &str) -> Result<(Option<Self::Payload>, Value), String> {
        let value = json_payload(text)?;
        let payload = parse_segments(&value)?;
        Ok((payload, extra_except(as_object(&value)?, &["segments"])))
    }
}

// ---------------------------------------------------------------------------
// Summarization
// ---------------------------------------------------------------------------

/// One argued span handed to summarization, with its turns rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizeSegment {
    pub start_turn: u32,
    pub end_turn: u32,
    pub description: String,
    /// Rendering of the segment's turns.
    pub turns: String,
}

/// Summarize one speaker's whole argument across an episode's argued
/// segments.
///
/// Each worker is asked once per segment; its non-empty part summaries
/// are concatenated into that worker's answer. A worker whose parts all
/// came back empty has found no argument at all. The integrator then
/// synthesizes the final per-speaker summary from both workers' combined
/// answers next to the full transcript.
#[derive(Debug, Clone)]
pub struct SummarizeTask {
    pub episode: String,
    pub speaker: String,
    /// The argued segments, in transcript order. Must be non-empty.
    pub segments: Vec<SummarizeSegment>,
    /// Rendering of the episode's full transcript, for the integrator.
    pub transcript: String,
}

fn parse_summary(value: &Value) -> Result<Option<String>, String> {
    let obj = as_object(value)?;
    match obj.get("summary") {
        None => Err("missing field \"summary\"".into()),
        Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err("\"summary\" must be a string or null".into()),
    }
}

impl SummarizeTask {
    fn segment_prompt(&self, segment: &SummarizeSegment) -> Prompt {
        prompts::prompt(
            prompts::SUMMARIZE_WORKER,
            &[
                ("episode", &self.episode),
                ("speaker", &self.speaker),
                ("start_turn", &segment.start_turn.to_string()),
                ("end_turn", &segment.end_turn.to_string()),
                ("description", &segment.description),
                ("turns", &segment.turns),
            ],
        )
    }

    /// A part's contribution: `null` and blank both mean "nothing in this
    /// segment" and contribute nothing.
    fn merge_part(&self, so_far: String, part_text: &str) -> Result<String, String> {
        let part = parse_summary(&json_payload(part_text)?)?.unwrap_or_default();
        let part = part.trim();
        if part.is_empty() {
            return Ok(so_far);
        }
        if so_far.is_empty() {
            Ok(part.to_string())
        } else {
            Ok(format!("{so_far}\n\n{part}"))
        }
    }
}

impl EnsembleTask for SummarizeTask {
    type Payload = String;

    fn kind(&self) -> TaskKind {
        TaskKind::Summarize
    }

    fn input(&self) -> Value {
        json!({
            "episode": self.episode,
            "speaker": self.speaker,
            "segments": self.segments,
            "transcript": self.transcript,
        })
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("episode".to_string(), self.episode.clone()),
            ("speaker".to_string(), self.speaker.clone()),
        ])
    }

    fn worker_prompt(&self) -> Prompt {
        let first = self
            .segments
            .first()
            .expect("a summarize task needs at least one segment");
        self.segment_prompt(first)
    }

    fn parse_worker(&self, text: &str) -> Result<Option<Self::Payload>, String> {
        // Never answer "nothing here" from the first segment alone: later
        // segments may still carry the speaker's argument. finish_worker
        // downgrades a fully empty accumulation.
        self.merge_part(String::new(), text).map(Some)
    }

    fn worker_followups(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }

    fn followup_prompt(&self, index: usize, _draft: &Self::Payload) -> Prompt {
        self.segment_prompt(&self.segments[index + 1])
    }

    fn merge_followup(
        &self,
        _index: usize,
        draft: Self::Payload,
        text: &str,
    ) -> Result<Self::Payload, String> {
        self.merge_part(draft, text)
    }

    fn finish_worker(&self, draft: Self::Payload) -> Option<Self::Payload> {
        if draft.trim().is_empty() {
            None
        } else {
            Some(draft)
        }
    }

    fn validate(&self, summary: &Self::Payload) -> Result<(), String> {
        if summary.trim().is_empty() {
            return Err("summary must not be blank; use null for a speaker with no argument".into());
        }
        Ok(())
    }

    fn integrator_prompt(&self, a: Option<&Self::Payload>, b: Option<&Self::Payload>) -> Prompt {
        let render = |payload: Option<&String>| match payload {
            None => "(found no argument by this speaker)".to_string(),
            Some(summary) => summary.clone(),
        };
        prompts::prompt(
            prompts::SUMMARIZE_INTEGRATOR,
            &[
                ("episode", &self.episode),
                ("speaker", &self.speaker),
                ("transcript", &self.transcript),
                ("summary_a", &render(a)),
                ("summary_b", &render(b)),
            ],
        )
    }

    fn parse_integrator(&self, text: &str) -> Result<(Option<Self::Payload>, Value), String> {
        let value = json_payload(text)?;
        let payload = parse_summary(&value)?;
        Ok((payload, extra_except(as_object(&value)?, &["summary"])))
    }

    /// Free prose never matches byte-for-byte; whitespace-insensitive
    /// equality is the strictest comparison that is not vacuous.
    fn equivalent(&self, a: &Self::Payload, b: &Self::Payload) -> bool {
        a.split_whitespace().eq(b.split_whitespace())
    }
}

// ---------------------------------------------------------------------------
// Chain extraction
// ---------------------------------------------------------------------------

/// Extract one speaker's reasoning chain from their summarized argument.
///
/// Workers answer in two steps: a first pass drafts the full chain —
/// premises, conclusions, and relationship lines — and a second pass
/// reviews that draft against the source material and re-emits it
/// corrected. Models catch their own omissions far more reliably when
/// shown their draft as an object to criticize.
#[derive(Debug, Clone)]
pub struct ExtractTask {
    pub episode: String,
    pub speaker: SpeakerMeta,
    pub summary: String,
    pub turns: String,
}

/// Convert the prompt's premise shape (`"explicit": bool`) into the
/// schema shape (`"explicitness": "explicit" | "implicit"`).
fn premise_from_prompt_shape(value: &Value, index: usize) -> Result<Value, String> {
    let obj = value
        .as_object()
        .ok_or_else(|| format!("premise {index} must be an object"))?;
    let mut out = obj.clone();
    let explicit = out
        .remove("explicit")
        .and_then(|v| v.as_bool())
        .ok_or_else(|| format!("premise {index}: missing or non-boolean field \"explicit\""))?;
    out.insert(
        "explicitness".to_string(),
        Value::String(if explicit { "explicit" } else { "implicit" }.to_string()),
    );
    Ok(Value::Object(out))
}

fn premise_to_prompt_shape(premise: &crate::chain::Premise) -> Value {
    json!({
        "id": premise.id.to_string(),
        "text": premise.text,
        "type": premise.ptype.name(),
        "explicit": premise.explicitness == crate::chain::Explicitness::Explicit,
        "confidence": premise.confidence,
    })
}

/// Parse the stage-1 shape: premises and conclusions, no relationships.
fn parse_skeleton(value: &Value) -> Result<Option<ChainBody>, String> {
    let obj = as_object(value)?;
    match obj.get("premises") {
        None => return Err("missing field \"premises\"".into()),
        Some(Value::Null) => return Ok(None),
        Some(Value::Array(_)) => {}
        Some(_) => return Err("\"premises\" must be an array or null".into()),
    }
    let premises: Vec<Value> = obj["premises"]
        .as_array()
        .expect("checked above")
        .iter()
        .enumerate()
        .map(|(i, p)| premise_from_prompt_shape(p, i))
        .collect::<Result<_, _>>()?;
    let conclusions = obj
        .get("conclusions")
        .cloned()
        .ok_or("missing field \"conclusions\"")?;
    let body: ChainBody = serde_json::from_value(json!({
        "premises": premises,
        "conclusions": conclusions,
        "relationships": [],
    }))
    .map_err(|e| e.to_string())?;
    Ok(Some(body))
}

/// Parse the full combined shape: skeleton plus relationship lines.
fn parse_full_chain(value: &Value) -> Result<Option<ChainBody>, String> {
    let Some(mut body) = parse_skeleton(value)? else {
        return Ok(None);
    };
    let obj = as_object(value)?;
    let lines = obj
        .get("relationships")
        .and_then(Value::as_array)
        .ok_or("missing or non-array field \"relationships\"")?;
    let mut relationships = Vec::with_capacity(lines.len());
    for (index, line) in lines.iter().enumerate() {
        let line = line
            .as_str()
            .ok_or_else(|| format!("relationship {index} must be a string line"))?;
        relationships.push(
            parse_relation(line).map_err(|e| format!("relationship {index} ({line:?}): {e}"))?,
        );
    }
    body.relationships = relationships;
    Ok(Some(body))
}

fn body_to_prompt_json(body: &ChainBody) -> String {
    let value = json!({
        "premises": body.premises.iter().map(premise_to_prompt_shape).collect::<Vec<_>>(),
        "conclusions": body.conclusions.iter().map(|c| json!({
            "id": c.id.to_string(),
            "text": c.text,
        })).collect::<Vec<_>>(),
        "relationships": body.relationships.iter().map(serialize_relation).collect::<Vec<_>>(),
    });
    serde_json::to_string_pretty(&value).expect("body serializes")
}

/// The structural findings that block a chain at extraction time:
/// duplicate ids, references to nothing, cycles, out-of-range confidence,
/// and malformed relationship arity. Anything else (an unsupported
/// conclusion, a non-moral evaluator) is kept on the stored chain for the
/// global coherence screen to flag.
const EXTRACTION_BLOCKERS: &[crate::validate::ViolationCode] = &[
    crate::validate::ViolationCode::V1_DuplicateId,
    crate::validate::ViolationCode::V2_UnresolvedRef,
    crate::validate::ViolationCode::V3_Cycle,
    crate::validate::ViolationCode::V7_ConfidenceRange,
    crate::validate::ViolationCode::V8_BadArity,
];

impl ExtractTask {
    fn check_chain(&self, body: &ChainBody) -> Result<(), String> {
        let chain = ReasoningChain::from_body(self.speaker.clone(), self.episode.clone(), body.clone());
        let report = validate_chain(&chain);
        let problems: Vec<String> = report
            .errors()
            .filter(|v| EXTRACTION_BLOCKERS.contains(&v.code))
            .map(|v| format!("{:?} at {}: {}", v.code, v.subject, v.detail))
            .collect();
        if problems.is_empty() {
            return Ok(());
        }
        Err(problems.join("; "))
    }
}

impl EnsembleTask for ExtractTask {
    type Payload = ChainBody;

    fn kind(&self) -> TaskKind {
        TaskKind::Extract
    }

    fn input(&self) -> Value {
        json!({
            "episode": self.episode,
            "speaker": self.speaker.name,
            "summary": self.summary,
            "turns": self.turns,
        })
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("episode".to_string(), self.episode.clone()),
            ("speaker".to_string(), self.speaker.name.clone()),
        ])
    }

    fn worker_prompt(&self) -> Prompt {
        prompts::prompt(
            prompts::EXTRACT_WORKER_STAGE1,
            &[
                ("episode", &self.episode),
                ("speaker", &self.speaker.name),
                ("summary", &self.summary),
                ("turns", &self.turns),
            ],
        )
    }

    fn parse_worker(&self, text: &str) -> Result<Option<Self::Payload>, String> {
        parse_full_chain(&json_payload(text)?)
    }

    /// One review turn: the worker sees its own draft and re-emits the
    /// corrected chain.
    fn worker_followups(&self) -> usize {
        1
    }

    fn followup_prompt(&self, _index: usize, draft: &Self::Payload) -> Prompt {
        prompts::prompt(
            prompts::EXTRACT_WORKER_STAGE2,
            &[
                ("episode", &self.episode),
                ("speaker", &self.speaker.name),
                ("summary", &self.summary),
                ("turns", &self.turns),
                ("chain", &body_to_prompt_json(draft)),
            ],
        )
    }

    fn merge_followup(
        &self,
        _index: usize,
        _draft: Self::Payload,
        text: &str,
    ) -> Result<Self::Payload, String> {
        parse_full_chain(&json_payload(text)?)?.ok_or_else(|| {
            "the review turn must re-emit the corrected chain, not retract it".to_string()
        })
    }

    /// After a failed validation the model re-emits the whole chain in the
    /// same combined JSON shape.
    fn parse_corrected(
        &self,
        _draft: Self::Payload,
        text: &str,
    ) -> Result<Option<Self::Payload>, String> {
        parse_full_chain(&json_payload(text)?)
    }

    fn validate(&self, body: &Self::Payload) -> Result<(), String> {
        self.check_chain(body)
    }

    fn integrator_prompt(&self, a: Option<&Self::Payload>, b: Option<&Self::Payload>) -> Prompt {
        let render = |payload: Option<&ChainBody>| match payload {
            None => "(found no argument to extract)".to_string(),
            Some(body) => body_to_prompt_json(body),
        };
        prompts::prompt(
            prompts::EXTRACT_INTEGRATOR,
            &[
                ("episode", &self.episode),
                ("speaker", &self.speaker.name),
                ("summary", &self.summary),
                ("chain_a", &render(a)),
                ("chain_b", &render(b)),
            ],
        )
    }

    fn parse_integrator(&self, text: &str) -> Result<(Option<Self::Payload>, Value), String> {
        let value = json_payload(text)?;
        let payload = parse_full_chain(&value)?;
        Ok((
            payload,
            extra_except(as_object(&value)?, &["premises", "conclusions", "relationships"]),
        ))
    }

    fn equivalent(&self, a: &Self::Payload, b: &Self::Payload) -> bool {
        a.eq_modulo_gloss(b)
    }
}

// ---------------------------------------------------------------------------
// Topic/attitude classification
// ---------------------------------------------------------------------------

/// One classifier's answer for one conclusion, resolved against the topic
/// snapshot the task was built with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicVote {
    /// `Some` when the answer named a registered topic (by id or label);
    /// `None` when it proposed a topic outside the registry.
    pub topic_id: Option<String>,
    /// The answer as given.
    pub raw_topic: String,
    pub attitude: Attitude,
}

/// Classify one conclusion against a snapshot of the topic registry.
#[derive(Debug, Clone)]
pub struct ClassifyTask {
    pub episode: String,
    pub speaker: String,
    pub conclusion: String,
    /// Rendering of the premises behind the conclusion.
    pub premise_lines: String,
    /// Topic registry snapshot at decision time.
    pub topics: Vec<Topic>,
    /// Theme vocabulary for filing new topics.
    pub themes: Vec<String>,
}

/// `T001: label (theme)` lines for prompts.
pub fn render_topics(topics: &[Topic]) -> String {
    topics
        .iter()
        .map(|t| format!("{}: {} ({})", t.id, t.label, t.theme))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ClassifyTask {
    fn resolve(&self, reference: &str) -> Option<&Topic> {
        let wanted = normalize_label(reference);
        self.topics
            .iter()
            .find(|t| t.id == reference || normalize_label(&t.label) == wanted)
    }

    fn vote_from(&self, obj: &serde_json::Map<String, Value>) -> Result<TopicVote, String> {
        let raw_topic = str_field(obj, "topic")?;
        if raw_topic.trim().is_empty() {
            return Err("\"topic\" must not be blank".into());
        }
        let attitude = attitude_field(obj, "attitude")?;
        Ok(TopicVote {
            topic_id: self.resolve(&raw_topic).map(|t| t.id.clone()),
            raw_topic,
            attitude,
        })
    }

    fn render_vote(&self, vote: Option<&TopicVote>) -> String {
        match vote {
            None => "(no usable classification)".to_string(),
            Some(v) => match &v.topic_id {
                Some(id) => {
                    let label = self
                        .topics
                        .iter()
                        .find(|t| &t.id == id)
                        .map(|t| t.label.as_str())
                        .unwrap_or("?");
                    format!("topic {id} ({label}), attitude {}", v.attitude)
                }
                None => format!("a new topic {:?}, attitude {}", v.raw_topic, v.attitude),
            },
        }
    }
}

impl EnsembleTask for ClassifyTask {
    type Payload = TopicVote;

    fn kind(&self) -> TaskKind {
        TaskKind::Classify
    }

    fn input(&self) -> Value {
        json!({
            "episode": self.episode,
            "speaker": self.speaker,
            "conclusion": self.conclusion,
            "premises": self.premise_lines,
            "topics": render_topics(&self.topics),
        })
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("episode".to_string(), self.episode.clone()),
            ("speaker".to_string(), self.speaker.clone()),
            ("conclusion".to_string(), self.conclusion.clone()),
        ])
    }

    fn worker_prompt(&self) -> Prompt {
        prompts::prompt(
            prompts::CLASSIFY_WORKER,
            &[
                ("episode", &self.episode),
                ("speaker", &self.speaker),
                ("conclusion", &self.conclusion),
                ("premise_lines", &self.premise_lines),
                ("topics", &render_topics(&self.topics)),
            ],
        )
    }

    fn parse_worker(&self, text: &str) -> Result<Option<Self::Payload>, String> {
        let value = json_payload(text)?;
        self.vote_from(as_object(&value)?).map(Some)
    }

    fn integrator_prompt(&self, a: Option<&Self::Payload>, b: Option<&Self::Payload>) -> Prompt {
        prompts::prompt(
            prompts::CLASSIFY_INTEGRATOR,
            &[
                ("episode", &self.episode),
                ("speaker", &self.speaker),
                ("conclusion", &self.conclusion),
                ("topics", &render_topics(&self.topics)),
                ("themes", &self.themes.join("\n")),
                ("vote_a", &self.render_vote(a)),
                ("vote_b", &self.render_vote(b)),
            ],
        )
    }

    fn parse_integrator(&self, text: &str) -> Result<(Option<Self::Payload>, Value), String> {
        let value = json_payload(text)?;
        let obj = as_object(&value)?;
        let vote = self.vote_from(obj)?;
        let equivalent = obj
            .get("equivalent")
            .and_then(Value::as_bool)
            .ok_or("missing or non-boolean field \"equivalent\"")?;
        let new_topic = obj.get("new_topic").cloned().unwrap_or(Value::Null);
        if vote.topic_id.is_none() {
            // a topic outside the registry needs filing information
            let new_obj = new_topic
                .as_object()
                .ok_or("the topic is not in the registry, so \"new_topic\" must be an object with \"label\" and \"theme\"")?;
            let label = new_obj.get("label").and_then(Value::as_str).unwrap_or("");
            let theme = new_obj.get("theme").and_then(Value::as_str).unwrap_or("");
            if label.trim().is_empty() || theme.trim().is_empty() {
                return Err("\"new_topic\" needs non-empty \"label\" and \"theme\"".into());
            }
            if normalize_label(label) != normalize_label(&vote.raw_topic) {
                return Err("\"new_topic.label\" must match \"topic\"".into());
            }
            if !self.themes.iter().any(|t| t == theme) {
                return Err(format!("\"new_topic.theme\" {theme:?} is not one of the listed themes"));
            }
        }
        let extra = json!({
            "workers_equivalent": equivalent,
            "new_topic": if vote.topic_id.is_none() { new_topic } else { Value::Null },
        });
        Ok((Some(vote), extra))
    }

    /// Two votes mean the same thing when the attitudes match and the
    /// topics are the same registered id — or both are unregistered
    /// proposals with the same normalized label.
    fn equivalent(&self, a: &Self::Payload, b: &Self::Payload) -> bool {
        a.attitude == b.attitude
            && match (&a.topic_id, &b.topic_id) {
                (Some(x), Some(y)) => x == y,
                (None, None) => normalize_label(&a.raw_topic) == normalize_label(&b.raw_topic),
                _ => false,
            }
    }
}

// ---------------------------------------------------------------------------
// Disagreement comparison
// ---------------------------------------------------------------------------

/// One comparer's verdict on a pair of opposing chains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreeVote {
    pub is_disagreement: bool,
    pub divergences: Vec<Divergence>,
    /// Index into `divergences` the comparer thinks is most upstream. The
    /// deterministic dependency analysis has the final word; this claim is
    /// recorded and checked against it.
    pub claimed_root: Option<usize>,
}

/// Compare the two chains of one optimist/pessimist pair.
#[derive(Debug, Clone)]
pub struct DisagreeTask {
    pub topic_label: String,
    pub optimist: ArgumentKey,
    pub pessimist: ArgumentKey,
    pub optimist_chain: ReasoningChain,
    pub pessimist_chain: ReasoningChain,
}

/// Human-readable chain rendering for comparison prompts.
pub fn render_chain(chain: &ReasoningChain) -> String {
    let mut lines = Vec::new();
    for premise in &chain.premises {
        lines.push(format!(
            "{} [{}, {}, confidence {}]: {}",
            premise.id,
            premise.ptype.name(),
            match premise.explicitness {
                crate::chain::Explicitness::Explicit => "stated",
                crate::chain::Explicitness::Implicit => "unstated",
            },
            premise.confidence,
            premise.text
        ));
    }
    for derived in &chain.derived_premises {
        let ptype = derived
            .ptype
            .map(|t| t.name().to_string())
            .unwrap_or_else(|| "implied".to_string());
        let text = derived.text.clone().unwrap_or_else(|| {
            // fall back to the gloss of a relationship that derives it
            chain
                .relationships
                .iter()
                .find(|r| r.target == Some(derived.id))
                .and_then(|r| r.gloss.clone())
                .unwrap_or_else(|| "(implied claim)".to_string())
        });
        lines.push(format!("{} [{ptype}]: {text}", derived.id));
    }
    for relationship in &chain.relationships {
        lines.push(serialize_relation(relationship));
    }
    for conclusion in &chain.conclusions {
        lines.push(format!("{}: {}", conclusion.id, conclusion.text));
    }
    lines.join("\n")
}

fn parse_divergence(value: &Value, index: usize) -> Result<Divergence, String> {
    let obj = value
        .as_object()
        .ok_or_else(|| format!("divergence {index} must be an object"))?;
    let context = |e: String| format!("divergence {index}: {e}");
    let optimist_ref = label_field(obj, "optimist_ref").map_err(context)?;
    let pessimist_ref = label_field(obj, "pessimist_ref").map_err(context)?;
    let declared_type = match obj.get("type") {
        None | Some(Value::Null) => None,
        Some(Value::String(raw)) => Some(
            crate::chain::normalize_premise_type(raw)
                .map_err(|e| format!("divergence {index}: {e}"))?,
        ),
        Some(_) => return Err(format!("divergence {index}: \"type\" must be a string or null")),
    };
    let primary_side = match obj.get("primary_side") {
        None | Some(Value::Null) => None,
        Some(Value::String(raw)) => Some(match raw.trim().to_ascii_lowercase().as_str() {
            "optimist" => Side::Optimist,
            "pessimist" => Side::Pessimist,
            other => {
                return Err(format!(
                    "divergence {index}: \"primary_side\" must be \"optimist\" or \"pessimist\", not {other:?}"
                ))
            }
        }),
        Some(_) => {
            return Err(format!(
                "divergence {index}: \"primary_side\" must be a string or null"
            ))
        }
    };
    let description = obj
        .get("description")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    Ok(Divergence {
        optimist_ref,
        pessimist_ref,
        declared_type,
        primary_side,
        description,
    })
}

fn parse_disagree_vote(value: &Value) -> Result<DisagreeVote, String> {
    let obj = as_object(value)?;
    let is_disagreement = obj
        .get("is_disagreement")
        .and_then(Value::as_bool)
        .ok_or("missing or non-boolean field \"is_disagreement\"")?;
    let divergences = obj
        .get("divergences")
        .and_then(Value::as_array)
        .ok_or("missing or non-array field \"divergences\"")?
        .iter()
        .enumerate()
        .map(|(i, d)| parse_divergence(d, i))
        .collect::<Result<Vec<_>, _>>()?;
    let claimed_root = match obj.get("root") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => Some(
            n.as_u64()
                .ok_or("\"root\" must be a non-negative index or null")? as usize,
        ),
        Some(_) => return Err("\"root\" must be a non-negative index or null".into()),
    };
    Ok(DisagreeVote {
        is_disagreement,
        divergences,
        claimed_root,
    })
}

fn render_disagree_vote(vote: Option<&DisagreeVote>) -> String {
    match vote {
        None => "(no usable comparison)".to_string(),
        Some(v) => serde_json::to_string_pretty(&json!({
            "is_disagreement": v.is_disagreement,
            "divergences": v.divergences.iter().map(|d| json!({
                "optimist_ref": d.optimist_ref.to_string(),
                "pessimist_ref": d.pessimist_ref.to_string(),
                "type": d.declared_type.map(|t| t.name()),
                "primary_side": d.primary_side.map(|s| match s {
                    Side::Optimist => "optimist",
                    Side::Pessimist => "pessimist",
                }),
                "description": d.description,
            })).collect::<Vec<_>>(),
            "root": v.claimed_root,
        }))
        .expect("vote serializes"),
    }
}

impl EnsembleTask for DisagreeTask {
    type Payload = DisagreeVote;

    fn kind(&self) -> TaskKind {
        TaskKind::Disagree
    }

    fn input(&self) -> Value {
        json!({
            "topic": self.topic_label,
            "optimist": self.optimist.slug(),
            "pessimist": self.pessimist.slug(),
            "optimist_chain": render_chain(&self.optimist_chain),
            "pessimist_chain": render_chain(&self.pessimist_chain),
        })
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("topic".to_string(), self.topic_label.clone()),
            ("optimist".to_string(), self.optimist.speaker.clone()),
            ("pessimist".to_string(), self.pessimist.speaker.clone()),
        ])
    }

    fn worker_prompt(&self) -> Prompt {
        prompts::prompt(
            prompts::DISAGREE_WORKER,
            &[
                ("topic", &self.topic_label),
                ("optimist", &self.optimist.speaker),
                ("pessimist", &self.pessimist.speaker),
                ("optimist_chain", &render_chain(&self.optimist_chain)),
                ("pessimist_chain", &render_chain(&self.pessimist_chain)),
            ],
        )
    }

    fn parse_worker(&self, text: &str) -> Result<Option<Self::Payload>, String> {
        parse_disagree_vote(&json_payload(text)?).map(Some)
    }

    fn validate(&self, vote: &Self::Payload) -> Result<(), String> {
        if !vote.is_disagreement {
            if !vote.divergences.is_empty() || vote.claimed_root.is_some() {
                return Err(
                    "a no-disagreement verdict must list no divergences and no root".into(),
                );
            }
            return Ok(());
        }
        if vote.divergences.is_empty() {
            return Err("a disagreement verdict must list at least one divergence".into());
        }
        for (index, divergence) in vote.divergences.iter().enumerate() {
            if !self.optimist_chain.resolves(divergence.optimist_ref) {
                return Err(format!(
                    "divergence {index}: {} is not a node of the optimist's chain",
                    divergence.optimist_ref
                ));
            }
            if !self.pessimist_chain.resolves(divergence.pessimist_ref) {
                return Err(format!(
                    "divergence {index}: {} is not a node of the pessimist's chain",
                    divergence.pessimist_ref
                ));
            }
        }
        if let Some(root) = vote.claimed_root {
            if root >= vote.divergences.len() {
                return Err(format!(
                    "root index {root} is out of range for {} divergences",
                    vote.divergences.len()
                ));
            }
        }
        Ok(())
    }

    fn integrator_prompt(&self, a: Option<&Self::Payload>, b: Option<&Self::Payload>) -> Prompt {
        prompts::prompt(
            prompts::DISAGREE_INTEGRATOR,
            &[
                ("topic", &self.topic_label),
                ("optimist", &self.optimist.speaker),
                ("pessimist", &self.pessimist.speaker),
                ("optimist_chain", &render_chain(&self.optimist_chain)),
                ("pessimist_chain", &render_chain(&self.pessimist_chain)),
                ("vote_a", &render_disagree_vote(a)),
                ("vote_b", &render_disagree_vote(b)),
            ],
        )
    }

    fn parse_integrator(&self, text: &str) -> Result<(Option<Self::Payload>, Value), String> {
        let value = json_payload(text)?;
        let vote = parse_disagree_vote(&value)?;
        Ok((
            Some(vote),
            extra_except(as_object(&value)?, &["is_disagreement", "divergences", "root"]),
        ))
    }

    /// Verdicts agree when both say "no disagreement", or both say
    /// "disagreement" and claim structurally identical roots (same two
    /// references, same declared type). A disagreement verdict without a
    /// root claim cannot be confirmed equivalent to anything.
    fn equivalent(&self, a: &Self::Payload, b: &Self::Payload) -> bool {
        match (a.is_disagreement, b.is_disagreement) {
            (false, false) => true,
            (true, true) => match (a.claimed_root, b.claimed_root) {
                (Some(ra), Some(rb)) => {
                    let (da, db) = (&a.divergences[ra], &b.divergences[rb]);
                    da.optimist_ref == db.optimist_ref
                        && da.pessimist_ref == db.pessimist_ref
                        && da.declared_type == db.declared_type
                }
                _ => false,
            },
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Causal-question placement
// ---------------------------------------------------------------------------

/// One placer's answer: which question the clash instantiates and which
/// stance each side takes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionVote {
    pub choice: QuestionChoice,
    pub optimist_stance: u8,
    pub pessimist_stance: u8,
}

/// Place one causal root divergence onto the question map.
#[derive(Debug, Clone)]
pub struct AggregateTask {
    pub pair_key: String,
    pub optimist_name: String,
    pub pessimist_name: String,
    pub optimist_premise: String,
    pub pessimist_premise: String,
    pub description: String,
    /// Question map snapshot at decision time.
    pub questions: Vec<CausalQuestion>,
}

/// `Q001: text [0: stance; 1: stance]` lines for prompts.
pub fn render_questions(questions: &[CausalQuestion]) -> String {
    if questions.is_empty() {
        return "(none yet)".to_string();
    }
    questions
        .iter()
        .map(|q| {
            format!(
                "{}: {} [0: {}; 1: {}]",
                q.id, q.text, q.stances[0], q.stances[1]
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_question_vote(value: &Value) -> Result<QuestionVote, String> {
    let obj = as_object(value)?;
    let choice: QuestionChoice = serde_json::from_value(
        obj.get("question")
            .cloned()
            .ok_or("missing field \"question\"")?,
    )
    .map_err(|e| format!("bad \"question\": {e}"))?;
    let stance = |key: &str| -> Result<u8, String> {
        obj.get(key)
            .and_then(Value::as_u64)
            .and_then(|n| u8::try_from(n).ok())
            .ok_or_else(|| format!("missing or non-integer field {key:?}"))
    };
    Ok(QuestionVote {
        choice,
        optimist_stance: stance("optimist_stance")?,
        pessimist_stance: stance("pessimist_stance")?,
    })
}

fn render_question_vote(questions: &[CausalQuestion], vote: Option<&QuestionVote>) -> String {
    match vote {
        None => "(no usable placement)".to_string(),
        Some(v) => {
            let choice = match &v.choice {
                QuestionChoice::Existing { question_id } => {
                    let text = questions
                        .iter()
                        .find(|q| &q.id == question_id)
                        .map(|q| q.text.as_str())
                        .unwrap_or("?");
                    format!("existing question {question_id} ({text})")
                }
                QuestionChoice::New { text, stances } => {
                    format!("a new question {text:?} [0: {}; 1: {}]", stances[0], stances[1])
                }
            };
            format!(
                "{choice}; optimist takes stance {}, pessimist takes stance {}",
                v.optimist_stance, v.pessimist_stance
            )
        }
    }
}

impl EnsembleTask for AggregateTask {
    type Payload = QuestionVote;

    fn kind(&self) -> TaskKind {
        TaskKind::Aggregate
    }

    fn input(&self) -> Value {
        json!({
            "pair_key": self.pair_key,
            "optimist_premise": self.optimist_premise,
            "pessimist_premise": self.pessimist_premise,
            "description": self.description,
            "questions": render_questions(&self.questions),
        })
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("pair_key".to_string(), self.pair_key.clone())])
    }

    fn worker_prompt(&self) -> Prompt {
        prompts::prompt(
            prompts::AGGREGATE_WORKER,
            &[
                ("optimist", &self.optimist_name),
                ("pessimist", &self.pessimist_name),
                ("optimist_premise", &self.optimist_premise),
                ("pessimist_premise", &self.pessimist_premise),
                ("description", &self.description),
                ("questions", &render_questions(&self.questions)),
            ],
        )
    }

    fn parse_worker(&self, text: &str) -> Result<Option<Self::Payload>, String> {
        parse_question_vote(&json_payload(text)?).map(Some)
    }

    fn validate(&self, vote: &Self::Payload) -> Result<(), String> {
        if vote.optimist_stance > 1 || vote.pessimist_stance > 1 {
            return Err("stance indices must be 0 or 1".into());
        }
        if vote.optimist_stance == vote.pessimist_stance {
            return Err("the two sides must take different stances".into());
        }
        match &vote.choice {
            QuestionChoice::Existing { question_id } => {
                if !self.questions.iter().any(|q| &q.id == question_id) {
                    return Err(format!("{question_id:?} is not on the question map"));
                }
            }
            QuestionChoice::New { text, stances } => {
                if text.trim().is_empty() {
                    return Err("a new question needs non-empty text".into());
                }
                if stances[0].trim().is_empty() || stances[1].trim().is_empty() {
                    return Err("a new question needs two non-empty stances".into());
                }
                if normalize_label(&stances[0]) == normalize_label(&stances[1]) {
                    return Err("a new question needs two different stances".into());
                }
            }
        }
        Ok(())
    }

    fn integrator_prompt(&self, a: Option<&Self::Payload>, b: Option<&Self::Payload>) -> Prompt {
        prompts::prompt(
            prompts::AGGREGATE_INTEGRATOR,
            &[
                ("optimist", &self.optimist_name),
                ("pessimist", &self.pessimist_name),
                ("optimist_premise", &self.optimist_premise),
                ("pessimist_premise", &self.pessimist_premise),
                ("description", &self.description),
                ("questions", &render_questions(&self.questions)),
                ("choice_a", &render_question_vote(&self.questions, a)),
                ("choice_b", &render_question_vote(&self.questions, b)),
            ],
        )
    }

    fn parse_integrator(&self, text: &str) -> Result<(Option<Self::Payload>, Value), String> {
        let value = json_payload(text)?;
        let vote = parse_question_vote(&value)?;
        Ok((
            Some(vote),
            extra_except(
                as_object(&value)?,
                &["question", "optimist_stance", "pessimist_stance"],
            ),
        ))
    }

    /// Two placements agree when they put the clash on the same question —
    /// the same existing id, or new questions with the same normalized
    /// text. Stance assignments are bookkeeping, not identity.
    fn equivalent(&self, a: &Self::Payload, b: &Self::Payload) -> bool {
        match (&a.choice, &b.choice) {
            (
                QuestionChoice::Existing { question_id: x },
                QuestionChoice::Existing { question_id: y },
            ) => x == y,
            (QuestionChoice::New { text: x, .. }, QuestionChoice::New { text: y, .. }) => {
                normalize_label(x) == normalize_label(y)
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Conclusion, Explicitness, Premise, PremiseType};

    #[test]
    fn json_payload_strips_code_fences() {
        assert_eq!(json_payload("{\"a\": 1}").unwrap(), json!({"a": 1}));
        assert_eq!(
            json_payload("```json\n{\"a\": 1}\n```").unwrap(),
            json!({"a": 1})
        );
        assert_eq!(json_payload("```\n[1, 2]\n```").unwrap(), json!([1, 2]));
        assert!(json_payload("not json").is_err());
        assert!(json_payload("```json\n{\"a\": 1}").is_err());
    }

    fn segment_task() -> SegmentTask {
        SegmentTask {
            episode: "ep052".into(),
            speakers: vec!["Host".into(), "Guest".into()],
            turns: "[turn 1] Host: hello".into(),
            max_turn: 40,
        }
    }

    #[test]
    fn segment_parsing_handles_list_null_and_garbage() {
        let task = segment_task();
        let parsed = task
            .parse_worker(r#"{"segments": [{"start_turn": 2, "end_turn": 9, "description": "d"}]}"#)
            .unwrap()
            .unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].start_turn, 2);
        assert!(task.parse_worker(r#"{"segments": null}"#).unwrap().is_none());
        assert!(task.parse_worker(r#"{"segments": 3}"#).is_err());
        assert!(task.parse_worker(r#"{}"#).is_err());
    }

    #[test]
    fn segment_validation_enforces_order_bounds_and_overlap() {
        let task = segment_task();
        let seg = |s: u32, e: u32| Segment {
            start_turn: s,
            end_turn: e,
            description: String::new(),
        };
        assert!(task.validate(&vec![seg(1, 5), seg(6, 9)]).is_ok());
        assert!(task.validate(&vec![seg(0, 5)]).is_err(), "turns start at 1");
        assert!(task.validate(&vec![seg(5, 4)]).is_err(), "end before start");
        assert!(task.validate(&vec![seg(1, 41)]).is_err(), "beyond last turn");
        assert!(task.validate(&vec![seg(1, 5), seg(5, 9)]).is_err(), "overlap");
        assert!(task.validate(&vec![seg(6, 9), seg(1, 5)]).is_err(), "disorder");
    }

    fn summarize_task() -> SummarizeTask {
        let segment = |s: u32, e: u32, topic: &str| SummarizeSegment {
            start_turn: s,
            end_turn: e,
            description: topic.into(),
            turns: format!("[turn {s}] Guest: words about {topic}."),
        };
        SummarizeTask {
            episode: "ep052".into(),
            speaker: "Guest".into(),
            segments: vec![segment(3, 9, "jobs"), segment(14, 20, "safety")],
            transcript: "[turn 1] Host: welcome".into(),
        }
    }

    #[test]
    fn summary_equivalence_ignores_whitespace_only() {
        let task = summarize_task();
        assert!(task.equivalent(&"a  b\nc".to_string(), &"a b c".to_string()));
        assert!(!task.equivalent(&"a b".to_string(), &"a B".to_string()));
    }

    #[test]
    fn summarize_asks_once_per_segment_and_concatenates() {
        let task = summarize_task();
        assert_eq!(task.worker_followups(), 1);
        assert!(task.worker_prompt().user.contains("turns 3-9"));
        assert!(task.followup_prompt(0, &String::new()).user.contains("turns 14-20"));

        let first = task.parse_worker(r#"{"summary": "Jobs part."}"#).unwrap().unwrap();
        let both = task.merge_followup(0, first, r#"{"summary": "Safety part."}"#).unwrap();
        assert_eq!(both, "Jobs part.\n\nSafety part.");
        assert_eq!(task.finish_worker(both.clone()), Some(both));
    }

    #[test]
    fn summarize_empty_parts_contribute_nothing() {
        let task = summarize_task();
        // null and blank parts mean the same thing: nothing in this segment
        let first = task.parse_worker(r#"{"summary": null}"#).unwrap().unwrap();
        assert_eq!(first, "");
        let after_blank = task.merge_followup(0, first, r#"{"summary": "   "}"#).unwrap();
        assert_eq!(after_blank, "");
        assert_eq!(task.finish_worker(after_blank), None, "all-empty means no argument");

        let only_second = task
            .merge_followup(0, String::new(), r#"{"summary": "Late bloomer."}"#)
            .unwrap();
        assert_eq!(only_second, "Late bloomer.");
        assert!(task.parse_worker(r#"{"wrong_key": 1}"#).is_err());
    }

    fn extract_task() -> ExtractTask {
        ExtractTask {
            episode: "ep1".into(),
            speaker: SpeakerMeta::named("Guest"),
            summary: "summary".into(),
            turns: "turns".into(),
        }
    }

    const FULL_CHAIN: &str = r#"{
        "premises": [
            {"id": "P1", "text": "a", "type": "factual", "explicit": true, "confidence": 90},
            {"id": "P2", "text": "b", "type": "moral", "explicit": false, "confidence": 100}
        ],
        "conclusions": [{"id": "C1", "text": "c"}],
        "relationships": ["R1: P1 ^ P2 -> evaluation", "R2: R1 => C1"]
    }"#;

    #[test]
    fn extract_first_pass_parses_the_full_chain() {
        let task = extract_task();
        let body = task.parse_worker(FULL_CHAIN).unwrap().unwrap();
        assert_eq!(body.premises.len(), 2);
        assert_eq!(body.premises[0].explicitness, Explicitness::Explicit);
        assert_eq!(body.premises[1].explicitness, Explicitness::Implicit);
        assert_eq!(body.premises[1].ptype, PremiseType::Moral);
        assert_eq!(body.relationships.len(), 2);
        assert!(task.validate(&body).is_ok());
        assert!(task.parse_worker(r#"{"premises": null}"#).unwrap().is_none());
        // missing the explicit flag is malformed
        let no_flag = r#"{"premises": [{"id": "P1", "text": "a", "type": "factual", "confidence": 9}], "conclusions": [], "relationships": []}"#;
        assert!(task.parse_worker(no_flag).is_err());
        // missing the relationships is malformed
        let no_relations = r#"{"premises": [], "conclusions": []}"#;
        assert!(task.parse_worker(no_relations).is_err());
        // a malformed relationship line is named in the error
        let bad_line = r#"{"premises": [], "conclusions": [], "relationships": ["R1: P1 + => C1"]}"#;
        assert!(task.parse_worker(bad_line).is_err());
    }

    #[test]
    fn extract_review_turn_shows_the_draft_and_replaces_it() {
        let task = extract_task();
        let draft = task.parse_worker(FULL_CHAIN).unwrap().unwrap();
        assert_eq!(task.worker_followups(), 1);
        let review = task.followup_prompt(0, &draft);
        // the reviewer sees the source material and the draft to criticize
        assert!(review.user.contains("summary"));
        assert!(review.user.contains("\"id\": \"P1\""));
        assert!(review.user.contains("R1: P1 ^ P2 -> evaluation"));

        let corrected = r#"{
            "premises": [{"id": "P1", "text": "a", "type": "factual", "explicit": true, "confidence": 90}],
            "conclusions": [{"id": "C1", "text": "c"}],
            "relationships": ["R1: P1 => C1"]
        }"#;
        let merged = task.merge_followup(0, draft.clone(), corrected).unwrap();
        assert_eq!(merged.premises.len(), 1);
        assert_eq!(merged.relationships.len(), 1);
        assert!(task.merge_followup(0, draft.clone(), r#"{"premises": null}"#).is_err(), "no retracting");
        assert!(task.merge_followup(0, draft, "not json").is_err());
    }

    #[test]
    fn extract_validation_blocks_structural_defects_only() {
        let task = extract_task();
        // P9 is used as an operand but defined nowhere -> blocking
        let dangling = r#"{
            "premises": [{"id": "P1", "text": "a", "type": "factual", "explicit": true, "confidence": 90}],
            "conclusions": [{"id": "C1", "text": "c"}],
            "relationships": ["R1: P1 + P9 => C1"]
        }"#;
        let body = task.parse_worker(dangling).unwrap().unwrap();
        let err = task.validate(&body).unwrap_err();
        assert!(err.contains("V2_UnresolvedRef"), "{err}");

        // an unsupported conclusion is a coherence finding, not an
        // extraction blocker: the chain is stored and screened later
        let unsupported = r#"{
            "premises": [{"id": "P1", "text": "a", "type": "factual", "explicit": true, "confidence": 90}],
            "conclusions": [{"id": "C1", "text": "c"}, {"id": "C2", "text": "extra"}],
            "relationships": ["R1: P1 => C1"]
        }"#;
        let body = task.parse_worker(unsupported).unwrap().unwrap();
        assert!(task.validate(&body).is_ok());
    }

    #[test]
    fn extract_corrected_response_uses_combined_shape() {
        let task = extract_task();
        let combined = r#"{
            "premises": [{"id": "P1", "text": "a", "type": "factual", "explicit": true, "confidence": 90}],
            "conclusions": [{"id": "C1", "text": "c"}],
            "relationships": ["R1: P1 => C1 -> so"]
        }"#;
        let body = task
            .parse_corrected(ChainBody { conclusions: vec![], premises: vec![], relationships: vec![] }, combined)
            .unwrap()
            .unwrap();
        assert_eq!(body.relationships.len(), 1);
        assert!(task.validate(&body).is_ok());
    }

    #[test]
    fn extract_equivalence_is_modulo_gloss() {
        let task = extract_task();
        let combined = |gloss: &str| -> ChainBody {
            let text = format!(
                r#"{{
                    "premises": [{{"id": "P1", "text": "a", "type": "factual", "explicit": true, "confidence": 90}}],
                    "conclusions": [{{"id": "C1", "text": "c"}}],
                    "relationships": ["R1: P1 => C1 -> {gloss}"]
                }}"#
            );
            task.parse_corrected(
                ChainBody { conclusions: vec![], premises: vec![], relationships: vec![] },
                &text,
            )
            .unwrap()
            .unwrap()
        };
        assert!(task.equivalent(&combined("one"), &combined("two")));
    }

    fn classify_task() -> ClassifyTask {
        ClassifyTask {
            episode: "ep1".into(),
            speaker: "Guest".into(),
            conclusion: "AI will help".into(),
            premise_lines: "P1: stuff".into(),
            topics: vec![
                Topic {
                    id: "T001".into(),
                    label: "Existential risk from AGI".into(),
                    theme: "Existential and Catastrophic Risks".into(),
                    is_ai_risk: true,
                    origin: crate::topic::TopicOrigin::Seed,
                },
                Topic {
                    id: "T002".into(),
                    label: "AI in medicine".into(),
                    theme: "Economy, Labor, and Society".into(),
                    is_ai_risk: true,
                    origin: crate::topic::TopicOrigin::Seed,
                },
            ],
            themes: vec![
                "Existential and Catastrophic Risks".into(),
                "Economy, Labor, and Society".into(),
            ],
        }
    }

    #[test]
    fn classify_resolves_ids_and_labels_case_insensitively() {
        let task = classify_task();
        let by_id = task
            .parse_worker(r#"{"topic": "T002", "attitude": "optimistic"}"#)
            .unwrap()
            .unwrap();
        assert_eq!(by_id.topic_id.as_deref(), Some("T002"));
        let by_label = task
            .parse_worker(r#"{"topic": "ai  IN medicine", "attitude": "optimistic"}"#)
            .unwrap()
            .unwrap();
        assert_eq!(by_label.topic_id.as_deref(), Some("T002"));
        let novel = task
            .parse_worker(r#"{"topic": "AI and chess", "attitude": "neutral"}"#)
            .unwrap()
            .unwrap();
        assert_eq!(novel.topic_id, None);
        assert_eq!(novel.raw_topic, "AI and chess");
        assert!(task.parse_worker(r#"{"topic": "T002", "attitude": "great"}"#).is_err());
        assert!(task.parse_worker(r#"{"attitude": "neutral"}"#).is_err());
    }

    #[test]
    fn classify_integrator_requires_filing_for_new_topics() {
        let task = classify_task();
        let (vote, extra) = task
            .parse_integrator(
                r#"{"topic": "T001", "attitude": "pessimistic", "equivalent": true, "new_topic": null}"#,
            )
            .unwrap();
        assert_eq!(vote.unwrap().topic_id.as_deref(), Some("T001"));
        assert_eq!(extra["workers_equivalent"], json!(true));
        assert_eq!(extra["new_topic"], Value::Null);

        let ok_new = task.parse_integrator(
            r#"{"topic": "AI and chess", "attitude": "neutral", "equivalent": false,
                "new_topic": {"label": "AI and chess", "theme": "Economy, Labor, and Society"}}"#,
        );
        let (vote, extra) = ok_new.unwrap();
        assert_eq!(vote.unwrap().topic_id, None);
        assert_eq!(extra["new_topic"]["label"], json!("AI and chess"));

        // unregistered topic without filing info is malformed
        assert!(task
            .parse_integrator(
                r#"{"topic": "AI and chess", "attitude": "neutral", "equivalent": false, "new_topic": null}"#
            )
            .is_err());
        // theme outside the vocabulary is malformed
        assert!(task
            .parse_integrator(
                r#"{"topic": "AI and chess", "attitude": "neutral", "equivalent": false,
                    "new_topic": {"label": "AI and chess", "theme": "Misc"}}"#
            )
            .is_err());
    }

    #[test]
    fn classify_equivalence_requires_matching_attitude_and_topic() {
        let task = classify_task();
        let vote = |id: Option<&str>, raw: &str, attitude: Attitude| TopicVote {
            topic_id: id.map(str::to_string),
            raw_topic: raw.into(),
            attitude,
        };
        assert!(task.equivalent(
            &vote(Some("T001"), "T001", Attitude::Pessimistic),
            &vote(Some("T001"), "existential risk from agi", Attitude::Pessimistic),
        ));
        assert!(!task.equivalent(
            &vote(Some("T001"), "T001", Attitude::Pessimistic),
            &vote(Some("T001"), "T001", Attitude::Neutral),
        ));
        assert!(task.equivalent(
            &vote(None, "AI  and chess", Attitude::Neutral),
            &vote(None, "ai and chess", Attitude::Neutral),
        ));
        assert!(!task.equivalent(
            &vote(Some("T001"), "T001", Attitude::Neutral),
            &vote(None, "T001-ish", Attitude::Neutral),
        ));
    }

    fn two_chains() -> (ReasoningChain, ReasoningChain) {
        let premise = |i: u32, t: PremiseType| Premise {
            id: RefLabel::premise(i),
            text: format!("p{i}"),
            ptype: t,
            explicitness: Explicitness::Explicit,
            confidence: 90,
        };
        let conclusion = Conclusion {
            id: RefLabel::conclusion(1),
            text: "c".into(),
            topic: None,
            attitude: None,
        };
        let optimist = ReasoningChain::from_parts(
            SpeakerMeta::named("Opt"),
            "ep1".into(),
            vec![conclusion.clone()],
            vec![premise(1, PremiseType::Factual), premise(2, PremiseType::Causal)],
            vec![
                parse_relation("R1: P1 + P2").unwrap(),
                parse_relation("R2: R1 => C1").unwrap(),
            ],
        );
        let pessimist = ReasoningChain::from_parts(
            SpeakerMeta::named("Pess"),
            "ep2".into(),
            vec![conclusion],
            vec![premise(1, PremiseType::Factual), premise(3, PremiseType::Moral)],
            vec![
                parse_relation("R1: P1 ^ P3").unwrap(),
                parse_relation("R2: R1 => C1").unwrap(),
            ],
        );
        (optimist, pessimist)
    }

    fn disagree_task() -> DisagreeTask {
        let (optimist_chain, pessimist_chain) = two_chains();
        DisagreeTask {
            topic_label: "AI risk".into(),
            optimist: ArgumentKey::new("ep1", "Opt", RefLabel::conclusion(1)),
            pessimist: ArgumentKey::new("ep2", "Pess", RefLabel::conclusion(1)),
            optimist_chain,
            pessimist_chain,
        }
    }

    #[test]
    fn disagree_parses_and_validates_refs() {
        let task = disagree_task();
        let vote = task
            .parse_worker(
                r#"{"is_disagreement": true, "divergences": [
                    {"optimist_ref": "P1", "pessimist_ref": "P1", "type": "factual",
                     "primary_side": "pessimist", "description": "d"}], "root": 0}"#,
            )
            .unwrap()
            .unwrap();
        assert!(task.validate(&vote).is_ok());
        assert_eq!(vote.divergences[0].primary_side, Some(Side::Pessimist));

        let bad_ref = task
            .parse_worker(
                r#"{"is_disagreement": true, "divergences": [
                    {"optimist_ref": "P9", "pessimist_ref": "P1", "type": null,
                     "primary_side": null, "description": ""}], "root": null}"#,
            )
            .unwrap()
            .unwrap();
        assert!(task.validate(&bad_ref).is_err());

        let none = task
            .parse_worker(r#"{"is_disagreement": false, "divergences": [], "root": null}"#)
            .unwrap()
            .unwrap();
        assert!(task.validate(&none).is_ok());

        let contradictory = DisagreeVote {
            is_disagreement: false,
            divergences: vote.divergences.clone(),
            claimed_root: None,
        };
        assert!(task.validate(&contradictory).is_err());

        let out_of_range = DisagreeVote {
            claimed_root: Some(5),
            ..vote
        };
        assert!(task.validate(&out_of_range).is_err());
    }

    #[test]
    fn disagree_type_aliases_normalize() {
        let task = disagree_task();
        let vote = task
            .parse_worker(
                r#"{"is_disagreement": true, "divergences": [
                    {"optimist_ref": "P2", "pessimist_ref": "P3", "type": "moral_outcome",
                     "primary_side": null, "description": "d"}], "root": 0}"#,
            )
            .unwrap()
            .unwrap();
        assert_eq!(vote.divergences[0].declared_type, Some(PremiseType::Moral));
    }

    #[test]
    fn disagree_equivalence_compares_root_claims() {
        let task = disagree_task();
        let divergence = |o: u32, p: u32| Divergence {
            optimist_ref: RefLabel::premise(o),
            pessimist_ref: RefLabel::premise(p),
            declared_type: Some(PremiseType::Factual),
            primary_side: None,
            description: "x".into(),
        };
        let vote = |divs: Vec<Divergence>, root: Option<usize>| DisagreeVote {
            is_disagreement: true,
            divergences: divs,
            claimed_root: root,
        };
        let quiet = DisagreeVote {
            is_disagreement: false,
            divergences: vec![],
            claimed_root: None,
        };
        assert!(task.equivalent(&quiet, &quiet.clone()));
        // same root clash at different list positions
        assert!(task.equivalent(
            &vote(vec![divergence(1, 1), divergence(2, 3)], Some(0)),
            &vote(vec![divergence(2, 3), divergence(1, 1)], Some(1)),
        ));
        assert!(!task.equivalent(
            &vote(vec![divergence(1, 1)], Some(0)),
            &vote(vec![divergence(2, 3)], Some(0)),
        ));
        assert!(!task.equivalent(&vote(vec![divergence(1, 1)], Some(0)), &quiet));
        assert!(!task.equivalent(
            &vote(vec![divergence(1, 1)], None),
            &vote(vec![divergence(1, 1)], None),
        ));
    }

    fn aggregate_task() -> AggregateTask {
        let mut map = crate::aggregate::ConflictMap::new();
        map.add("Does adaptation generalize?", ["yes", "no"]).unwrap();
        AggregateTask {
            pair_key: "a--vs--b".into(),
            optimist_name: "Opt".into(),
            pessimist_name: "Pess".into(),
            optimist_premise: "history shows adaptation".into(),
            pessimist_premise: "this time is different".into(),
            description: "whether history applies".into(),
            questions: map.questions().to_vec(),
        }
    }

    #[test]
    fn aggregate_parses_existing_and_new_choices() {
        let task = aggregate_task();
        let existing = task
            .parse_worker(
                r#"{"question": {"kind": "existing", "question_id": "Q001"},
                    "optimist_stance": 0, "pessimist_stance": 1}"#,
            )
            .unwrap()
            .unwrap();
        assert!(task.validate(&existing).is_ok());

        let new = task
            .parse_worker(
                r#"{"question": {"kind": "new", "text": "Is compute the bottleneck?",
                    "stances": ["yes", "no"]}, "optimist_stance": 1, "pessimist_stance": 0}"#,
            )
            .unwrap()
            .unwrap();
        assert!(task.validate(&new).is_ok());

        assert!(task.parse_worker(r#"{"question": {"kind": "other"}, "optimist_stance": 0, "pessimist_stance": 1}"#).is_err());
    }

    #[test]
    fn aggregate_validation_checks_stances_and_ids() {
        let task = aggregate_task();
        let vote = |choice: QuestionChoice, o: u8, p: u8| QuestionVote {
            choice,
            optimist_stance: o,
            pessimist_stance: p,
        };
        let existing = QuestionChoice::Existing { question_id: "Q001".into() };
        assert!(task.validate(&vote(existing.clone(), 0, 0)).is_err(), "same stance");
        assert!(task.validate(&vote(existing.clone(), 2, 0)).is_err(), "stance range");
        assert!(task
            .validate(&vote(QuestionChoice::Existing { question_id: "Q999".into() }, 0, 1))
            .is_err());
        assert!(task
            .validate(&vote(
                QuestionChoice::New { text: " ".into(), stances: ["a".into(), "b".into()] },
                0,
                1
            ))
            .is_err());
        assert!(task
            .validate(&vote(
                QuestionChoice::New { text: "q".into(), stances: ["same".into(), "SAME".into()] },
                0,
                1
            ))
            .is_err());
        assert!(task.validate(&vote(existing, 1, 0)).is_ok());
    }

    #[test]
    fn aggregate_equivalence_is_question_identity() {
        let task = aggregate_task();
        let existing = |id: &str, o: u8| QuestionVote {
            choice: QuestionChoice::Existing { question_id: id.into() },
            optimist_stance: o,
            pessimist_stance: 1 - o,
        };
        // stance flips do not break question identity
        assert!(task.equivalent(&existing("Q001", 0), &existing("Q001", 1)));
        let new = |text: &str| QuestionVote {
            choice: QuestionChoice::New { text: text.into(), stances: ["a".into(), "b".into()] },
            optimist_stance: 0,
            pessimist_stance: 1,
        };
        assert!(task.equivalent(&new("Is X true?"), &new("is x TRUE?")));
        assert!(!task.equivalent(&existing("Q001", 0), &new("Q001")));
    }

    #[test]
    fn chain_rendering_covers_derived_premises() {
        let (optimist, _) = two_chains();
        let rendered = render_chain(&optimist);
        assert!(rendered.contains("P1 [factual, stated, confidence 90]: p1"));
        assert!(rendered.contains("R2: R1 => C1"));
        assert!(rendered.contains("C1: c"));

        let with_derived = ReasoningChain::from_parts(
            SpeakerMeta::named("s"),
            "e".into(),
            vec![],
            vec![Premise {
                id: RefLabel::premise(1),
                text: "a".into(),
                ptype: PremiseType::Factual,
                explicitness: Explicitness::Explicit,
                confidence: 90,
            }],
            vec![parse_relation("R1: P1 => P9 -> the implied point").unwrap()],
        );
        let rendered = render_chain(&with_derived);
        assert!(rendered.contains("P9 [implied]: the implied point"));
    }
}
