//! Reference labels (`P7`, `R15`, `C3`) used throughout reasoning chains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The node class a label refers to.
///
/// Ordering is `P < R < C`, which — together with the numeric index — gives
/// every chain a single deterministic node order used for reports,
/// violation listings, and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelKind {
    /// A premise (listed or derived).
    Premise,
    /// A relationship.
    Relationship,
    /// A conclusion.
    Conclusion,
}

impl LabelKind {
    /// The single-letter prefix used in the textual notation.
    pub fn letter(self) -> char {
        match self {
            LabelKind::Premise => 'P',
            LabelKind::Relationship => 'R',
            LabelKind::Conclusion => 'C',
        }
    }
}

/// A typed reference such as `P19`, `R4`, or `C1`.
///
/// The index is 1-based; `P0` is rejected. Indices need not be contiguous
/// or start at 1 within a chain (extracted chains frequently begin at
/// higher indices), only non-zero.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RefLabel {
    pub kind: LabelKind,
    pub index: u32,
}

/// Error from parsing a textual label.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid reference label {0:?}: expected P<n>, R<n>, or C<n> with n >= 1")]
pub struct BadLabel(pub String);

impl RefLabel {
    pub fn new(kind: LabelKind, index: u32) -> Self {
        debug_assert!(index >= 1, "label indices are 1-based");
        RefLabel { kind, index }
    }

    pub fn premise(index: u32) -> Self {
        Self::new(LabelKind::Premise, index)
    }

    pub fn relationship(index: u32) -> Self {
        Self::new(LabelKind::Relationship, index)
    }

    pub fn conclusion(index: u32) -> Self {
        Self::new(LabelKind::Conclusion, index)
    }
}

impl fmt::Display for RefLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.letter(), self.index)
    }
}

impl fmt::Debug for RefLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for RefLabel {
    type Err = BadLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let kind = match chars.next() {
            Some('P') => LabelKind::Premise,
            Some('R') => LabelKind::Relationship,
            Some('C') => LabelKind::Conclusion,
            _ => return Err(BadLabel(s.to_string())),
        };
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(BadLabel(s.to_string()));
        }
        let index: u32 = digits.parse().map_err(|_| BadLabel(s.to_string()))?;
        if index == 0 {
            return Err(BadLabel(s.to_string()));
        }
        Ok(RefLabel { kind, index })
    }
}

impl Serialize for RefLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RefLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
