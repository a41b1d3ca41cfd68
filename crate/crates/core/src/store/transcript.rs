//! Transcript ingestion: turn-level parsing, speaker roles, and the
//! optional speaker-metadata sidecar.
//!
//! Two input formats are accepted:
//!
//! * **JSON lines** — one `{"speaker": "...", "text": "..."}` object per
//!   non-empty line.
//! * **Plain text** — `SPEAKER: text` lines; a line without a speaker
//!   prefix continues the previous turn.
//!
//! Turns are numbered strictly consecutively from 1 in either format.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Gender, Profession, SpeakerMeta};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// 1-based position in the conversation.
    pub index: u32,
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub episode: String,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("line {line}: {detail}")]
    FormatError { line: usize, detail: String },
    #[error("transcript has no turns")]
    EmptyTranscript,
    #[error("turn {position} is numbered {found}, expected {expected}")]
    NonConsecutiveTurn {
        position: usize,
        found: u32,
        expected: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptFormat {
    JsonLines,
    Plain,
}

/// Guess the format from content: a first non-blank line that looks like
/// a JSON object means JSON lines.
pub fn sniff_format(text: &str) -> TranscriptFormat {
    match text.lines().find(|l| !l.trim().is_empty()) {
        Some(line) if line.trim_start().starts_with('{') => TranscriptFormat::JsonLines,
        _ => TranscriptFormat::Plain,
    }
}

pub fn parse_transcript(
    episode: &str,
    text: &str,
    format: TranscriptFormat,
) -> Result<Transcript, TranscriptError> {
    match format {
        TranscriptFormat::JsonLines => parse_jsonl(episode, text),
        TranscriptFormat::Plain => parse_plain(episode, text),
    }
}

pub fn parse_jsonl(episode: &str, text: &str) -> Result<Transcript, TranscriptError> {
    #[derive(Deserialize)]
    struct Line {
        speaker: String,
        text: String,
    }
    let mut turns = Vec::new();
    for (offset, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(line).map_err(|e| TranscriptError::FormatError {
            line: offset + 1,
            detail: format!("not a speaker/text object: {e}"),
        })?;
        if parsed.speaker.trim().is_empty() {
            return Err(TranscriptError::FormatError {
                line: offset + 1,
                detail: "speaker must not be empty".into(),
            });
        }
        turns.push(Turn {
            index: turns.len() as u32 + 1,
            speaker: parsed.speaker.trim().to_string(),
            text: parsed.text.trim().to_string(),
        });
    }
    finish(episode, turns)
}

/// A plain-text line opens a new turn when it starts with `Name:` — at
/// most four words before the colon, each starting with an uppercase
/// letter or digit, using only name-like characters. That keeps clock
/// times ("we meet at 10:30…") and mid-sentence colons in continuation
/// lines from being misread as speakers.
fn speaker_prefix(line: &str) -> Option<(&str, &str)> {
    let colon = line.find(':')?;
    let (name, rest) = line.split_at(colon);
    let name = name.trim();
    let words: Vec<&str> = name.split_whitespace().collect();
    let name_like = !words.is_empty()
        && words.len() <= 4
        && name.len() <= 48
        && name.chars().any(|c| c.is_alphabetic())
        && words.iter().all(|w| {
            w.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
        })
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, ' ' | '.' | '\'' | '-' | '_'));
    if !name_like {
        return None;
    }
    Some((name, rest[1..].trim_start()))
}

pub fn parse_plain(episode: &str, text: &str) -> Result<Transcript, TranscriptError> {
    let mut turns: Vec<Turn> = Vec::new();
    for (offset, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        match speaker_prefix(line) {
            Some((speaker, rest)) => turns.push(Turn {
                index: turns.len() as u32 + 1,
                speaker: speaker.to_string(),
                text: rest.trim().to_string(),
            }),
            None => match turns.last_mut() {
                Some(turn) => {
                    if !turn.text.is_empty() {
                        turn.text.push(' ');
                    }
                    turn.text.push_str(line.trim());
                }
                None => {
                    return Err(TranscriptError::FormatError {
                        line: offset + 1,
                        detail: "text before any speaker prefix".into(),
                    })
                }
            },
        }
    }
    finish(episode, turns)
}

fn finish(episode: &str, turns: Vec<Turn>) -> Result<Transcript, TranscriptError> {
    let transcript = Transcript {
        episode: episode.to_string(),
        turns,
    };
    transcript.validate()?;
    Ok(transcript)
}

impl Transcript {
    /// Check the structural invariant: at least one turn, numbered
    /// strictly consecutively from 1. Use after deserializing a
    /// transcript from storage.
    pub fn validate(&self) -> Result<(), TranscriptError> {
        if self.turns.is_empty() {
            return Err(TranscriptError::EmptyTranscript);
        }
        for (position, turn) in self.turns.iter().enumerate() {
            let expected = position as u32 + 1;
            if turn.index != expected {
                return Err(TranscriptError::NonConsecutiveTurn {
                    position: position + 1,
                    found: turn.index,
                    expected,
                });
            }
        }
        Ok(())
    }

    /// Speakers in order of first appearance, with turn counts.
    pub fn speaker_turn_counts(&self) -> Vec<(String, usize)> {
        let mut order: Vec<String> = Vec::new();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for turn in &self.turns {
            if !counts.contains_key(turn.speaker.as_str()) {
                order.push(turn.speaker.clone());
            }
            *counts.entry(turn.speaker.as_str()).or_insert(0) += 1;
        }
        order
            .into_iter()
            .map(|name| {
                let count = counts[name.as_str()];
                (name, count)
            })
            .collect()
    }

    /// The host: the speaker with the most turns; ties go to whoever
    /// appeared first.
    pub fn host(&self) -> &str {
        let counts = self.speaker_turn_counts();
        let best = counts
            .iter()
            .enumerate()
            .max_by(|(ia, (_, ca)), (ib, (_, cb))| ca.cmp(cb).then(ib.cmp(ia)))
            .expect("validated transcripts have turns");
        let name = &best.1 .0;
        // return a reference into self, not into the temporary
        self.turns
            .iter()
            .find(|t| &t.speaker == name)
            .map(|t| t.speaker.as_str())
            .expect("speaker came from the turns")
    }

    /// Non-host speakers in order of first appearance.
    pub fn guests(&self) -> Vec<String> {
        let host = self.host().to_string();
        self.speaker_turn_counts()
            .into_iter()
            .map(|(name, _)| name)
            .filter(|name| *name != host)
            .collect()
    }

    /// Turn text for an inclusive 1-based turn range, rendered as
    /// `Speaker: text` lines.
    pub fn render_turns(&self, start: u32, end: u32) -> String {
        self.turns
            .iter()
            .filter(|t| t.index >= start && t.index <= end)
            .map(|t| format!("{}: {}", t.speaker, t.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Speakers with at least one turn in an inclusive turn range, in
    /// order of first appearance within the range.
    pub fn speakers_in_range(&self, start: u32, end: u32) -> Vec<String> {
        let mut seen = Vec::new();
        for turn in &self.turns {
            if turn.index >= start
                && turn.index <= end
                && !seen.contains(&turn.speaker)
            {
                seen.push(turn.speaker.clone());
            }
        }
        seen
    }
}

/// A contiguous run of the conversation in which one guest is the active
/// interviewee.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuestSection {
    pub guest: String,
    pub start_turn: u32,
    pub end_turn: u32,
}

/// Split the conversation into per-guest sections. A new section opens at
/// the first turn of a guest different from the current one; host turns
/// stay attached to the running section. Episodes where guests never
/// alternate (the common case: one guest) yield one section covering
/// every turn. A guest who speaks again after another guest opens a fresh
/// section — sections are contiguous by construction.
pub fn guest_sections(transcript: &Transcript) -> Vec<GuestSection> {
    let host = transcript.host().to_string();
    let last_turn = transcript.turns.len() as u32;
    let mut sections: Vec<GuestSection> = Vec::new();
    for turn in &transcript.turns {
        if turn.speaker == host {
            continue;
        }
        match sections.last_mut() {
            Some(section) if section.guest == turn.speaker => {}
            _ => {
                let start = if sections.is_empty() { 1 } else { turn.index };
                if let Some(previous) = sections.last_mut() {
                    previous.end_turn = turn.index - 1;
                }
                sections.push(GuestSection {
                    guest: turn.speaker.clone(),
                    start_turn: start,
                    end_turn: last_turn,
                });
            }
        }
    }
    sections
}

/// Parse the optional `name,profession,gender` sidecar. Unknown
/// professions or genders are an error (they are closed vocabularies);
/// speakers absent from the table default to
/// `other` / `unspecified` at lookup time via [`speaker_meta`].
pub fn parse_speaker_table(
    reader: impl Read,
) -> Result<BTreeMap<String, SpeakerMeta>, TranscriptError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| TranscriptError::FormatError {
            line: 1,
            detail: format!("unreadable speaker table: {e}"),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (name_col, profession_col, gender_col) =
        match (column("name"), column("profession"), column("gender")) {
            (Some(n), Some(p), Some(g)) => (n, p, g),
            _ => {
                return Err(TranscriptError::FormatError {
                    line: 1,
                    detail: "speaker table needs name, profession, gender columns".into(),
                })
            }
        };
    let mut table = BTreeMap::new();
    for (offset, record) in csv_reader.records().enumerate() {
        let line = offset + 2;
        let record = record.map_err(|e| TranscriptError::FormatError {
            line,
            detail: format!("unreadable speaker table row: {e}"),
        })?;
        let field = |col: usize| record.get(col).unwrap_or("").trim().to_string();
        let name = field(name_col);
        if name.is_empty() {
            return Err(TranscriptError::FormatError {
                line,
                detail: "speaker name must not be empty".into(),
            });
        }
        let parse_enum = |what: &str, raw: &str| -> Result<serde_json::Value, TranscriptError> {
            Ok(serde_json::Value::String(raw.to_string())).and_then(|v| {
                if raw.is_empty() {
                    Err(TranscriptError::FormatError {
                        line,
                        detail: format!("empty {what}"),
                    })
                } else {
                    Ok(v)
                }
            })
        };
        let profession: Profession =
            serde_json::from_value(parse_enum("profession", &field(profession_col))?).map_err(
                |_| TranscriptError::FormatError {
                    line,
                    detail: format!("unknown profession {:?}", field(profession_col)),
                },
            )?;
        let gender: Gender = serde_json::from_value(parse_enum("gender", &field(gender_col))?)
            .map_err(|_| TranscriptError::FormatError {
                line,
                detail: format!("unknown gender {:?}", field(gender_col)),
            })?;
        table.insert(
            name.clone(),
            SpeakerMeta {
                name,
                profession,
                gender,
            },
        );
    }
    Ok(table)
}

/// Metadata for a speaker, defaulting when the sidecar has no row.
pub fn speaker_meta(table: &BTreeMap<String, SpeakerMeta>, name: &str) -> SpeakerMeta {
    table.get(name).cloned().unwrap_or_else(|| SpeakerMeta {
        name: name.to_string(),
        profession: Profession::Other,
        gender: Gender::Unspecified,
    })
}
