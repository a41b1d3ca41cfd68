//! Parser and canonical serializer for relationship notation.
//!
//! A relationship line names a relationship and describes how existing
//! nodes combine to support something:
//!
//! ```text
//! R15: P15 + P16 -> AGI development will be gradual, not sudden.
//! R16: R15 => P23 -> The gradual nature provides time for safety measures.
//! R4:  P32 ^ P27 -> The potential for human extinction is evaluated as bad.
//! ```
//!
//! Grammar (whitespace between tokens is free):
//!
//! ```text
//! RELDEF   := RLabel ':' EXPR [IMP TARGET] [GLOSSSEP text]
//! EXPR     := OPERAND (PLUS OPERAND)* | OPERAND EVAL OPERAND
//! OPERAND  := PLabel | RLabel
//! TARGET   := PLabel | CLabel | RLabel
//! IMP      := '⇒'  | '=>'
//! PLUS     := '+'
//! EVAL     := '∧'  | '^'
//! GLOSSSEP := '→'  | '->' | ','
//! ```
//!
//! The arrow `→` / `->` / `,` is a gloss separator — everything after it is
//! free prose — and never an implication. Only `⇒` / `=>` introduces a
//! target. Mixing `+` and `∧` in one expression is rejected. Arity rules
//! (combinations take two or more operands, implications exactly one
//! source, evaluations exactly two operands and no target) are *not*
//! enforced here; they are structural-validation concerns so that
//! malformed chains can be represented and then flagged.
//!
//! Canonical serialization is pure ASCII — `=>`, `^`, single spaces, gloss
//! after ` -> ` — and parsing a canonical line reproduces the same
//! relationship (serialize ∘ parse is idempotent).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{LabelKind, RefLabel};

/// How a relationship's operands support its result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    /// `A + B (+ ...)`: additive support, optionally implying a premise.
    Combine,
    /// `A => T`: one source implies a target premise or conclusion.
    Imply,
    /// `A ^ M`: the first operand is morally evaluated by moral premise `M`.
    Evaluate,
}

/// One parsed relationship line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relationship {
    pub id: RefLabel,
    pub kind: RelationKind,
    pub operands: Vec<RefLabel>,
    pub target: Option<RefLabel>,
    pub gloss: Option<String>,
}

impl Relationship {
    /// Structural equality ignoring the free-prose gloss.
    pub fn eq_modulo_gloss(&self, other: &Relationship) -> bool {
        self.id == other.id
            && self.kind == other.kind
            && self.operands == other.operands
            && self.target == other.target
    }
}

/// Why a relationship line failed to parse.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelationParseError {
    /// The input deviates from the grammar at `offset` (in bytes).
    #[error("parse error at byte {offset}: found {found}, expected {}", expected.join(" or "))]
    Parse {
        offset: usize,
        found: String,
        expected: Vec<&'static str>,
    },
    /// `+` and `^` appeared in the same expression.
    #[error("mixed operators at byte {offset}: '+' and '^' cannot appear in one expression")]
    MixedOperators { offset: usize },
}

impl RelationParseError {
    pub fn offset(&self) -> usize {
        match self {
            RelationParseError::Parse { offset, .. } => *offset,
            RelationParseError::MixedOperators { offset } => *offset,
        }
    }
}

struct Cursor<'a> {
    input: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(input: &'a str) -> Self {
        Cursor { input, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.input[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.input.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn found(&self) -> String {
        match self.rest().chars().next() {
            Some(c) => format!("{c:?}"),
            None => "end of input".to_string(),
        }
    }

    fn error(&self, expected: Vec<&'static str>) -> RelationParseError {
        RelationParseError::Parse {
            offset: self.pos,
            found: self.found(),
            expected,
        }
    }

    /// Parse a reference label restricted to `kinds`.
    fn label(&mut self, kinds: &[LabelKind], expected: Vec<&'static str>) -> Result<RefLabel, RelationParseError> {
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !c.is_ascii_alphanumeric())
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let word = &rest[..end];
        match word.parse::<RefLabel>() {
            Ok(label) if kinds.contains(&label.kind) => {
                self.pos += end;
                Ok(label)
            }
            _ => Err(self.error(expected)),
        }
    }
}

const OPERAND_KINDS: &[LabelKind] = &[LabelKind::Premise, LabelKind::Relationship];
const TARGET_KINDS: &[LabelKind] = &[
    LabelKind::Premise,
    LabelKind::Relationship,
    LabelKind::Conclusion,
];

fn eat_imp(c: &mut Cursor) -> bool {
    c.eat("⇒") || c.eat("=>")
}

fn eat_eval(c: &mut Cursor) -> bool {
    c.eat("∧") || c.eat("^")
}

fn eat_gloss_sep(c: &mut Cursor) -> bool {
    // "->" must be checked before any future single-char tokens; the order
    // here also keeps "→" (multi-byte) intact.
    c.eat("→") || c.eat("->") || c.eat(",")
}

/// Parse one relationship line.
pub fn parse_relation(line: &str) -> Result<Relationship, RelationParseError> {
    let mut c = Cursor::new(line);

    c.skip_ws();
    let id = c.label(
        &[LabelKind::Relationship],
        vec!["relationship label (R<n>)"],
    )?;
    c.skip_ws();
    if !c.eat(":") {
        return Err(c.error(vec!["':'"]));
    }

    c.skip_ws();
    let first = c.label(OPERAND_KINDS, vec!["operand (P<n> or R<n>)"])?;
    let mut operands = vec![first];
    let mut kind = RelationKind::Combine;

    // Operator phase: a run of '+', or a single '^'.
    c.skip_ws();
    if eat_eval(&mut c) {
        kind = RelationKind::Evaluate;
        c.skip_ws();
        operands.push(c.label(OPERAND_KINDS, vec!["operand (P<n> or R<n>)"])?);
        c.skip_ws();
        if c.rest().starts_with('+') {
            return Err(RelationParseError::MixedOperators { offset: c.pos });
        }
    } else {
        loop {
            let before = c.pos;
            if c.eat("+") {
                c.skip_ws();
                operands.push(c.label(OPERAND_KINDS, vec!["operand (P<n> or R<n>)"])?);
                c.skip_ws();
                if c.rest().starts_with('∧') || c.rest().starts_with('^') {
                    return Err(RelationParseError::MixedOperators { offset: c.pos });
                }
            } else {
                c.pos = before;
                break;
            }
        }
    }

    // Optional implication target.
    c.skip_ws();
    let mut target = None;
    if eat_imp(&mut c) {
        if kind == RelationKind::Combine && operands.len() == 1 {
            kind = RelationKind::Imply;
        }
        c.skip_ws();
        target = Some(c.label(TARGET_KINDS, vec!["target (P<n>, C<n>, or R<n>)"])?);
    }

    // Optional gloss.
    c.skip_ws();
    let mut gloss = None;
    if eat_gloss_sep(&mut c) {
        let text = c.rest().trim();
        if !text.is_empty() {
            gloss = Some(text.to_string());
        }
        c.pos = c.input.len();
    }

    c.skip_ws();
    if !c.rest().is_empty() {
        let expected = match (kind, target.is_some()) {
            (RelationKind::Evaluate, _) | (_, true) => {
                vec!["gloss separator ('->' or ',')", "end of line"]
            }
            _ => vec![
                "'+'",
                "'=>'",
                "gloss separator ('->' or ',')",
                "end of line",
            ],
        };
        return Err(c.error(expected));
    }

    Ok(Relationship {
        id,
        kind,
        operands,
        target,
        gloss,
    })
}

/// The canonical ASCII expression — operands, operator, and target, without
/// the leading id or trailing gloss. This is the `expr` field of the JSON
/// chain schema.
pub fn expr_canonical(rel: &Relationship) -> String {
    let mut out = String::new();
    match rel.kind {
        RelationKind::Evaluate => {
            let mut first = true;
            for op in &rel.operands {
                if !first {
                    out.push_str(" ^ ");
                }
                let _ = write!(out, "{op}");
                first = false;
            }
        }
        RelationKind::Combine | RelationKind::Imply => {
            let mut first = true;
            for op in &rel.operands {
                if !first {
                    out.push_str(" + ");
                }
                let _ = write!(out, "{op}");
                first = false;
            }
        }
    }
    if let Some(target) = rel.target {
        let _ = write!(out, " => {target}");
    }
    out
}

/// Serialize a relationship to its canonical single-line form:
/// `R18: R8 + R17 => P26 -> gloss text`.
///
/// The output is pure ASCII, single-spaced, and stable: parsing it yields
/// the same relationship back, and re-serializing that parse yields
/// byte-identical output.
pub fn serialize_relation(rel: &Relationship) -> String {
    let mut out = format!("{}: {}", rel.id, expr_canonical(rel));
    if let Some(gloss) = &rel.gloss {
        let _ = write!(out, " -> {gloss}");
    }
    out
}
