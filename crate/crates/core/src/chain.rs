//! The reasoning-chain data model.
//!
//! A chain is one argument by one speaker: at least one conclusion, the
//! premises supporting it, and relationship lines connecting them. Premises
//! carry one of five canonical types, an explicit/implicit marker, and a
//! 0–100 confidence. Implication targets that name a premise absent from
//! the premise list are materialized as *derived premises* whose type is
//! unknown until someone retypes them (`unspecified-pending-validation` in
//! the JSON shape).
//!
//! Invariants documented on the types here (unique ids, resolvable
//! references, acyclicity, supported conclusions, confidence in range) are
//! *validated*, not enforced by construction — the structural validator in
//! [`crate::validate`] reports violations, which keeps malformed model
//! output representable.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{LabelKind, RefLabel};
use crate::relation::{expr_canonical, parse_relation, RelationParseError, Relationship};

/// Current version of the canonical JSON chain schema.
pub const CHAIN_SCHEMA_VERSION: &str = "1";

/// JSON marker for a derived premise whose type has not been assigned.
pub const UNSPECIFIED_PTYPE: &str = "unspecified-pending-validation";

/// The five canonical premise types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PremiseType {
    Factual,
    Forecast,
    Causal,
    Definitional,
    Moral,
}

impl PremiseType {
    /// All five types in their fixed reporting order.
    pub const ALL: [PremiseType; 5] = [
        PremiseType::Factual,
        PremiseType::Forecast,
        PremiseType::Causal,
        PremiseType::Definitional,
        PremiseType::Moral,
    ];

    /// Canonical lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            PremiseType::Factual => "factual",
            PremiseType::Forecast => "forecast",
            PremiseType::Causal => "causal",
            PremiseType::Definitional => "definitional",
            PremiseType::Moral => "moral",
        }
    }
}

impl fmt::Display for PremiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A raw premise-type string that maps to no canonical type.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown premise type {0:?}")]
pub struct UnknownPremiseType(pub String);

/// Map a raw premise-type string to its canonical type.
///
/// Matching is case-insensitive and ignores surrounding whitespace. The
/// alias table is fixed:
///
/// | raw                                      | canonical      |
/// |------------------------------------------|----------------|
/// | `factual`, `fact`                        | `factual`      |
/// | `forecast`, `prediction`                 | `forecast`     |
/// | `causal`                                 | `causal`       |
/// | `definitional`                           | `definitional` |
/// | `moral`, `moral_outcome`, `moral_action`, `evaluative` | `moral` |
///
/// Anything else errors; silent guessing would corrupt downstream
/// composition statistics. Canonical names map to themselves, so the
/// function is idempotent.
pub fn normalize_premise_type(raw: &str) -> Result<PremiseType, UnknownPremiseType> {
    let key = raw.trim().to_ascii_lowercase();
    match key.as_str() {
        "factual" | "fact" => Ok(PremiseType::Factual),
        "forecast" | "prediction" => Ok(PremiseType::Forecast),
        "causal" => Ok(PremiseType::Causal),
        "definitional" => Ok(PremiseType::Definitional),
        "moral" | "moral_outcome" | "moral_action" | "evaluative" => Ok(PremiseType::Moral),
        _ => Err(UnknownPremiseType(raw.to_string())),
    }
}

/// Whether the speaker stated a premise or left it unstated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Explicitness {
    Explicit,
    Implicit,
}

/// A speaker's stance toward a topic in one conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attitude {
    Optimistic,
    Neutral,
    Pessimistic,
}

impl Attitude {
    pub fn name(self) -> &'static str {
        match self {
            Attitude::Optimistic => "optimistic",
            Attitude::Neutral => "neutral",
            Attitude::Pessimistic => "pessimistic",
        }
    }

    /// Case-insensitive parse, tolerant of surrounding whitespace.
    pub fn parse(raw: &str) -> Option<Attitude> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "optimistic" => Some(Attitude::Optimistic),
            "neutral" => Some(Attitude::Neutral),
            "pessimistic" => Some(Attitude::Pessimistic),
            _ => None,
        }
    }
}

impl fmt::Display for Attitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Speaker profession taxonomy used by the regression export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profession {
    Academic,
    CreativeMediaPublicFigure,
    IndustryTechExecutive,
    MixedAcademicIndustry,
    PublicPolicyGovernmentMilitary,
    TechIndustryResearcherPractitioner,
    #[default]
    Other,
}

impl Profession {
    /// Human-readable label for reports.
    pub fn label(self) -> &'static str {
        match self {
            Profession::Academic => "Academic",
            Profession::CreativeMediaPublicFigure => "Creative/Media/Public Figure",
            Profession::IndustryTechExecutive => "Industry/Tech Executive",
            Profession::MixedAcademicIndustry => "Mixed Academic-Industry",
            Profession::PublicPolicyGovernmentMilitary => "Public/Policy/Government/Military",
            Profession::TechIndustryResearcherPractitioner => {
                "Tech/Industry Researcher/Practitioner"
            }
            Profession::Other => "Other",
        }
    }

    /// Machine-readable identifier for tables and CSV exports — the same
    /// snake_case string the speaker-table parser accepts.
    pub fn wire_name(self) -> &'static str {
        match self {
            Profession::Academic => "academic",
            Profession::CreativeMediaPublicFigure => "creative_media_public_figure",
            Profession::IndustryTechExecutive => "industry_tech_executive",
            Profession::MixedAcademicIndustry => "mixed_academic_industry",
            Profession::PublicPolicyGovernmentMilitary => "public_policy_government_military",
            Profession::TechIndustryResearcherPractitioner => {
                "tech_industry_researcher_practitioner"
            }
            Profession::Other => "other",
        }
    }
}

/// Speaker gender as recorded in the sidecar speaker table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unspecified,
}

/// Who made the argument. Keyed by `(name, episode)` at the corpus level;
/// the same name may appear across episodes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpeakerMeta {
    pub name: String,
    #[serde(default)]
    pub profession: Profession,
    #[serde(default)]
    pub gender: Gender,
}

impl SpeakerMeta {
    pub fn named(name: &str) -> Self {
        SpeakerMeta {
            name: name.to_string(),
            profession: Profession::default(),
            gender: Gender::default(),
        }
    }
}

/// A premise listed by the extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Premise {
    /// `P`-kind label, unique within the chain.
    pub id: RefLabel,
    pub text: String,
    pub ptype: PremiseType,
    pub explicitness: Explicitness,
    /// Integer percent; 0–100 when well-formed. Out-of-range values are
    /// representable so the validator can flag them.
    pub confidence: i64,
}

/// A premise that exists only because some relationship implies it
/// (`R1: P1 + P2 => P32` with no listed `P32`). Its type is unknown until
/// explicitly retyped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedPremise {
    /// `P`-kind label, unique within the chain.
    pub id: RefLabel,
    /// Optional prose; usually `None` (the deriving relationship's gloss
    /// carries the meaning).
    pub text: Option<String>,
    /// `None` means unspecified, pending validation/retyping.
    pub ptype: Option<PremiseType>,
}

/// An argued conclusion. `topic` and `attitude` are filled by the
/// classification stage, not extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conclusion {
    /// `C`-kind label, unique within the chain.
    pub id: RefLabel,
    pub text: String,
    pub topic: Option<String>,
    pub attitude: Option<Attitude>,
}

/// One complete reasoning chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningChain {
    pub speaker: SpeakerMeta,
    pub episode: String,
    pub conclusions: Vec<Conclusion>,
    pub premises: Vec<Premise>,
    /// Materialized from relationship targets absent from `premises`.
    pub derived_premises: Vec<DerivedPremise>,
    pub relationships: Vec<Relationship>,
}

impl ReasoningChain {
    /// Assemble a chain, materializing derived premises: every implication
    /// target with a `P` label that is not in the premise list becomes a
    /// [`DerivedPremise`] with unspecified type. Targets are materialized
    /// once even when several relationships imply the same label.
    pub fn from_parts(
        speaker: SpeakerMeta,
        episode: String,
        conclusions: Vec<Conclusion>,
        premises: Vec<Premise>,
        relationships: Vec<Relationship>,
    ) -> Self {
        let mut chain = ReasoningChain {
            speaker,
            episode,
            conclusions,
            premises,
            derived_premises: Vec::new(),
            relationships,
        };
        chain.materialize_derived();
        chain
    }

    /// (Re)compute the derived-premise list from relationship targets.
    pub fn materialize_derived(&mut self) {
        let mut derived: Vec<DerivedPremise> = Vec::new();
        for rel in &self.relationships {
            if let Some(target) = rel.target {
                if target.kind == LabelKind::Premise
                    && !self.premises.iter().any(|p| p.id == target)
                    && !derived.iter().any(|d| d.id == target)
                {
                    derived.push(DerivedPremise {
                        id: target,
                        text: None,
                        ptype: None,
                    });
                }
            }
        }
        derived.sort_by_key(|d| d.id);
        self.derived_premises = derived;
    }

    pub fn premise(&self, id: RefLabel) -> Option<&Premise> {
        self.premises.iter().find(|p| p.id == id)
    }

    pub fn derived_premise(&self, id: RefLabel) -> Option<&DerivedPremise> {
        self.derived_premises.iter().find(|d| d.id == id)
    }

    pub fn conclusion(&self, id: RefLabel) -> Option<&Conclusion> {
        self.conclusions.iter().find(|c| c.id == id)
    }

    pub fn relationship(&self, id: RefLabel) -> Option<&Relationship> {
        self.relationships.iter().find(|r| r.id == id)
    }

    /// The canonical premise type of a node, if it is a premise with a
    /// known type. Derived premises report their retyped value or `None`.
    pub fn premise_type_of(&self, id: RefLabel) -> Option<PremiseType> {
        self.premise(id)
            .map(|p| p.ptype)
            .or_else(|| self.derived_premise(id).and_then(|d| d.ptype))
    }

    /// True if `id` names any node of this chain (premise, derived
    /// premise, relationship, or conclusion).
    pub fn resolves(&self, id: RefLabel) -> bool {
        match id.kind {
            LabelKind::Premise => self.premise(id).is_some() || self.derived_premise(id).is_some(),
            LabelKind::Relationship => self.relationship(id).is_some(),
            LabelKind::Conclusion => self.conclusion(id).is_some(),
        }
    }
}

/// Explicit/implicit counts for one premise type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCount {
    pub explicit: usize,
    pub implicit: usize,
}

impl TypeCount {
    pub fn total(&self) -> usize {
        self.explicit + self.implicit
    }
}

/// Per-type explicit/implicit premise counts for one chain.
///
/// Counts cover listed premises only; derived premises carry neither a
/// confirmed type nor an explicitness marker and are excluded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnthymemeStats {
    pub counts: BTreeMap<PremiseType, TypeCount>,
    pub total: usize,
    pub implicit_total: usize,
}

impl EnthymemeStats {
    /// Share of listed premises that are implicit; 0 for an empty chain.
    pub fn implicit_share(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.implicit_total as f64 / self.total as f64
        }
    }

    pub fn count(&self, ptype: PremiseType) -> TypeCount {
        self.counts.get(&ptype).copied().unwrap_or_default()
    }
}

/// Count explicit/implicit premises of each type in one chain.
pub fn enthymeme_stats(chain: &ReasoningChain) -> EnthymemeStats {
    let mut stats = EnthymemeStats::default();
    for premise in &chain.premises {
        let slot = stats.counts.entry(premise.ptype).or_default();
        match premise.explicitness {
            Explicitness::Explicit => slot.explicit += 1,
            Explicitness::Implicit => slot.implicit += 1,
        }
        if premise.explicitness == Explicitness::Implicit {
            stats.implicit_total += 1;
        }
        stats.total += 1;
    }
    stats
}

// ---------------------------------------------------------------------------
// Canonical JSON schema (version "1")
// ---------------------------------------------------------------------------

/// Errors raised while reading or writing the JSON chain schema.
#[derive(Debug, Error)]
pub enum ChainSchemaError {
    #[error("chain schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported chain schema_version {0:?} (supported: \"1\")")]
    UnsupportedVersion(String),
    #[error("chain schema: {0}")]
    BadLabel(#[from] crate::label::BadLabel),
    #[error("chain schema: premise {id}: {source}")]
    BadPremiseType {
        id: String,
        source: UnknownPremiseType,
    },
    #[error("chain schema: premise {id} has non-integer confidence {value}")]
    BadConfidence { id: String, value: serde_json::Value },
    #[error("chain schema: conclusion {id} has unknown attitude {value:?}")]
    BadAttitude { id: String, value: String },
    #[error("chain schema: relationship {id}: {source}")]
    BadExpr {
        id: String,
        source: RelationParseError,
    },
    #[error("chain schema: relationship {id}: id field does not match its position")]
    ExprIdMismatch { id: String },
}

#[derive(Serialize, Deserialize)]
struct PremiseDoc {
    id: String,
    text: String,
    #[serde(rename = "type")]
    ptype: String,
    explicitness: Explicitness,
    confidence: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ConclusionDoc {
    id: String,
    text: String,
    topic: Option<String>,
    attitude: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RelationshipDoc {
    id: String,
    expr: String,
    gloss: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ChainDoc {
    schema_version: String,
    speaker: SpeakerMeta,
    episode: String,
    conclusions: Vec<ConclusionDoc>,
    premises: Vec<PremiseDoc>,
    relationships: Vec<RelationshipDoc>,
}

/// The conclusion/premise/relationship body of a chain, without speaker or
/// episode attribution. This is the shape extraction payloads use; the
/// pipeline attaches attribution afterwards via
/// [`ReasoningChain::from_parts`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChainBodyDoc", into = "ChainBodyDoc")]
pub struct ChainBody {
    pub conclusions: Vec<Conclusion>,
    pub premises: Vec<Premise>,
    pub relationships: Vec<Relationship>,
}

#[derive(Serialize, Deserialize)]
struct ChainBodyDoc {
    conclusions: Vec<ConclusionDoc>,
    premises: Vec<PremiseDoc>,
    relationships: Vec<RelationshipDoc>,
}

fn premise_from_doc(doc: PremiseDoc) -> Result<Premise, ChainSchemaError> {
    let id: RefLabel = doc.id.parse()?;
    let ptype = normalize_premise_type(&doc.ptype).map_err(|source| {
        ChainSchemaError::BadPremiseType {
            id: doc.id.clone(),
            source,
        }
    })?;
    let confidence = doc
        .confidence
        .as_i64()
        .ok_or_else(|| ChainSchemaError::BadConfidence {
            id: doc.id.clone(),
            value: doc.confidence.clone(),
        })?;
    Ok(Premise {
        id,
        text: doc.text,
        ptype,
        explicitness: doc.explicitness,
        confidence,
    })
}

fn conclusion_from_doc(doc: ConclusionDoc) -> Result<Conclusion, ChainSchemaError> {
    let id: RefLabel = doc.id.parse()?;
    let attitude = match doc.attitude {
        None => None,
        Some(raw) => Some(
            Attitude::parse(&raw).ok_or_else(|| ChainSchemaError::BadAttitude {
                id: doc.id.clone(),
                value: raw,
            })?,
        ),
    };
    Ok(Conclusion {
        id,
        text: doc.text,
        topic: doc.topic,
        attitude,
    })
}

fn relationship_from_doc(doc: RelationshipDoc) -> Result<Relationship, ChainSchemaError> {
    let line = format!("{}: {}", doc.id, doc.expr);
    let mut rel = parse_relation(&line).map_err(|source| ChainSchemaError::BadExpr {
        id: doc.id.clone(),
        source,
    })?;
    if rel.id.to_string() != doc.id {
        return Err(ChainSchemaError::ExprIdMismatch { id: doc.id });
    }
    rel.gloss = doc.gloss.filter(|g| !g.trim().is_empty());
    Ok(rel)
}

fn body_from_docs(
    conclusions: Vec<ConclusionDoc>,
    premises: Vec<PremiseDoc>,
    relationships: Vec<RelationshipDoc>,
) -> Result<ChainBody, ChainSchemaError> {
    Ok(ChainBody {
        conclusions: conclusions
            .into_iter()
            .map(conclusion_from_doc)
            .collect::<Result<_, _>>()?,
        premises: premises
            .into_iter()
            .map(premise_from_doc)
            .collect::<Result<_, _>>()?,
        relationships: relationships
            .into_iter()
            .map(relationship_from_doc)
            .collect::<Result<_, _>>()?,
    })
}

impl TryFrom<ChainBodyDoc> for ChainBody {
    type Error = ChainSchemaError;

    fn try_from(doc: ChainBodyDoc) -> Result<Self, Self::Error> {
        body_from_docs(doc.conclusions, doc.premises, doc.relationships)
    }
}

fn conclusion_to_doc(c: &Conclusion) -> ConclusionDoc {
    ConclusionDoc {
        id: c.id.to_string(),
        text: c.text.clone(),
        topic: c.topic.clone(),
        attitude: c.attitude.map(|a| a.name().to_string()),
    }
}

fn premise_to_doc(p: &Premise) -> PremiseDoc {
    PremiseDoc {
        id: p.id.to_string(),
        text: p.text.clone(),
        ptype: p.ptype.name().to_string(),
        explicitness: p.explicitness,
        confidence: serde_json::Value::from(p.confidence),
    }
}

fn relationship_to_doc(r: &Relationship) -> RelationshipDoc {
    RelationshipDoc {
        id: r.id.to_string(),
        expr: expr_canonical(r),
        gloss: r.gloss.clone(),
    }
}

impl From<ChainBody> for ChainBodyDoc {
    fn from(body: ChainBody) -> Self {
        ChainBodyDoc {
            conclusions: body.conclusions.iter().map(conclusion_to_doc).collect(),
            premises: body.premises.iter().map(premise_to_doc).collect(),
            relationships: body.relationships.iter().map(relationship_to_doc).collect(),
        }
    }
}

impl ReasoningChain {
    /// Serialize to the canonical JSON schema (version `"1"`).
    ///
    /// Field names are fixed: `schema_version`, `speaker`, `episode`,
    /// `conclusions[]{id,text,topic,attitude}`,
    /// `premises[]{id,text,type,explicitness,confidence}`,
    /// `relationships[]{id,expr,gloss}`. Relationship `expr` uses the
    /// canonical ASCII notation; derived premises are not stored — they
    /// are rematerialized on load.
    pub fn to_schema_json(&self) -> String {
        let doc = ChainDoc {
            schema_version: CHAIN_SCHEMA_VERSION.to_string(),
            speaker: self.speaker.clone(),
            episode: self.episode.clone(),
            conclusions: self.conclusions.iter().map(conclusion_to_doc).collect(),
            premises: self.premises.iter().map(premise_to_doc).collect(),
            relationships: self
                .relationships
                .iter()
                .map(relationship_to_doc)
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("chain serialization");
        out.push('\n');
        out
    }

    /// Parse a chain from canonical JSON, normalizing premise-type aliases
    /// and rematerializing derived premises.
    pub fn from_schema_json(json: &str) -> Result<ReasoningChain, ChainSchemaError> {
        let doc: ChainDoc = serde_json::from_str(json)?;
        if doc.schema_version != CHAIN_SCHEMA_VERSION {
            return Err(ChainSchemaError::UnsupportedVersion(doc.schema_version));
        }
        let body = body_from_docs(doc.conclusions, doc.premises, doc.relationships)?;
        Ok(ReasoningChain::from_parts(
            doc.speaker,
            doc.episode,
            body.conclusions,
            body.premises,
            body.relationships,
        ))
    }

    /// Attach attribution to an extraction-payload body.
    pub fn from_body(speaker: SpeakerMeta, episode: String, body: ChainBody) -> ReasoningChain {
        ReasoningChain::from_parts(
            speaker,
            episode,
            body.conclusions,
            body.premises,
            body.relationships,
        )
    }

    /// The attribution-free body of this chain.
    pub fn body(&self) -> ChainBody {
        ChainBody {
            conclusions: self.conclusions.clone(),
            premises: self.premises.clone(),
            relationships: self.relationships.clone(),
        }
    }

    /// Structural equality ignoring relationship gloss text. Used for
    /// worker/integrator agreement bookkeeping, where prose wording is
    /// not meaningful but structure is.
    pub fn eq_modulo_gloss(&self, other: &ReasoningChain) -> bool {
        self.speaker == other.speaker
            && self.episode == other.episode
            && self.conclusions == other.conclusions
            && self.premises == other.premises
            && self.derived_premises == other.derived_premises
            && self.relationships.len() == other.relationships.len()
            && self
                .relationships
                .iter()
                .zip(&other.relationships)
                .all(|(a, b)| a.eq_modulo_gloss(b))
    }
}

impl ChainBody {
    /// Structural equality ignoring relationship gloss text.
    pub fn eq_modulo_gloss(&self, other: &ChainBody) -> bool {
        self.conclusions == other.conclusions
            && self.premises == other.premises
            && self.relationships.len() == other.relationships.len()
            && self
                .relationships
                .iter()
                .zip(&other.relationships)
                .all(|(a, b)| a.eq_modulo_gloss(b))
    }
}
