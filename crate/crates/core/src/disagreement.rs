//! Pairing opposing arguments and locating the root of their divergence.
//!
//! Given two classified argument sets on a topic, [`enumerate_pairs`]
//! produces every optimistic × pessimistic pairing. For one pair,
//! [`find_root`] takes the premise-level divergences reported between the
//! two reasoning chains and determines which one is *root*: the
//! divergence most upstream in both chains, on which the others depend.
//! The result is a pure function of the chains and the divergence list,
//! so reruns agree regardless of how the divergences were produced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Attitude, PremiseType, ReasoningChain};
use crate::dag::{build_dag, ChainDag, DagError};
use crate::label::RefLabel;

/// Globally unique handle for one argument: its episode, speaker, and the
/// conclusion label inside that speaker's chain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArgumentKey {
    pub episode: String,
    pub speaker: String,
    pub conclusion: RefLabel,
}

impl ArgumentKey {
    pub fn new(episode: &str, speaker: &str, conclusion: RefLabel) -> Self {
        ArgumentKey {
            episode: episode.to_string(),
            speaker: speaker.to_string(),
            conclusion,
        }
    }

    /// Filename-safe slug: lowercase alphanumerics with single dashes.
    pub fn slug(&self) -> String {
        slugify(&format!(
            "{} {} {}",
            self.episode, self.speaker, self.conclusion
        ))
    }
}

/// Filename-safe slug of arbitrary text: lowercase ASCII alphanumerics,
/// runs of anything else collapsed to single interior dashes.
pub fn slugify(raw: &str) -> String {
    let mut slug = String::with_capacity(raw.len());
    let mut dash_pending = false;
    for ch in raw.chars() {
        if ch.is_ascii_alphanumeric() {
            if dash_pending && !slug.is_empty() {
                slug.push('-');
            }
            dash_pending = false;
            slug.push(ch.to_ascii_lowercase());
        } else {
            dash_pending = true;
        }
    }
    slug
}

/// One argument with its classification, ready for pairing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedArgument {
    pub key: ArgumentKey,
    pub topic_id: String,
    pub attitude: Attitude,
}

/// An optimistic and a pessimistic argument on the same topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicPair {
    pub topic_id: String,
    pub optimist: ArgumentKey,
    pub pessimist: ArgumentKey,
}

impl TopicPair {
    /// Stable, filename-safe identifier for this pair.
    pub fn pair_key(&self) -> String {
        format!("{}--vs--{}", self.optimist.slug(), self.pessimist.slug())
    }
}

/// Every optimistic × pessimistic pairing per topic, in deterministic
/// order (topic, then optimist key, then pessimist key). Neutral
/// arguments pair with nothing.
pub fn enumerate_pairs(arguments: &[ClassifiedArgument]) -> Vec<TopicPair> {
    let mut by_topic: BTreeMap<&str, (Vec<&ArgumentKey>, Vec<&ArgumentKey>)> = BTreeMap::new();
    for argument in arguments {
        let slot = by_topic.entry(argument.topic_id.as_str()).or_default();
        match argument.attitude {
            Attitude::Optimistic => slot.0.push(&argument.key),
            Attitude::Pessimistic => slot.1.push(&argument.key),
            Attitude::Neutral => {}
        }
    }
    let mut pairs = Vec::new();
    for (topic_id, (mut optimists, mut pessimists)) in by_topic {
        optimists.sort();
        optimists.dedup();
        pessimists.sort();
        pessimists.dedup();
        for optimist in &optimists {
            for pessimist in &pessimists {
                pairs.push(TopicPair {
                    topic_id: topic_id.to_string(),
                    optimist: (*optimist).clone(),
                    pessimist: (*pessimist).clone(),
                });
            }
        }
    }
    pairs
}

/// Which side of a pair a payload statement refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Optimist,
    Pessimist,
}

/// One premise-level divergence between the two chains of a pair, as
/// reported by whatever compared them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    /// Node in the optimist's chain.
    pub optimist_ref: RefLabel,
    /// Node in the pessimist's chain.
    pub pessimist_ref: RefLabel,
    /// Divergence type claimed upstream; used only when neither chain can
    /// type the referenced nodes itself.
    #[serde(default)]
    pub declared_type: Option<PremiseType>,
    /// Which side the reporter considered primary; breaks type ties.
    #[serde(default)]
    pub primary_side: Option<Side>,
    #[serde(default)]
    pub description: String,
}

/// A divergence after dependency analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergencePoint {
    pub optimist_ref: RefLabel,
    pub pessimist_ref: RefLabel,
    /// Resolved divergence type (see [`find_root`] for the resolution
    /// rules).
    pub dtype: PremiseType,
    pub description: String,
    /// Indices (into the report's point list) of divergences this one
    /// strictly depends on — those sitting upstream of it in either
    /// chain. Mutually dependent pairs cancel out.
    pub depends_on: Vec<usize>,
    pub is_root: bool,
}

/// Dependency analysis of one pair's divergences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootAnalysis {
    /// One point per input divergence, same order.
    pub points: Vec<DivergencePoint>,
    /// Index of the root point.
    pub root: usize,
}

/// Full per-pair result, as persisted by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub topic_id: String,
    pub optimist: ArgumentKey,
    pub pessimist: ArgumentKey,
    /// False when the comparison concluded the two arguments do not
    /// actually oppose each other; no points are recorded then.
    pub is_disagreement: bool,
    pub points: Vec<DivergencePoint>,
    pub root: Option<usize>,
}

impl DisagreementReport {
    pub fn root_point(&self) -> Option<&DivergencePoint> {
        self.root.map(|ix| &self.points[ix])
    }
}

/// Tie-break order used when a divergence's two sides resolve to
/// different premise types and no primary side was declared: the type
/// listed first wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypePrecedence(pub Vec<PremiseType>);

impl Default for TypePrecedence {
    fn default() -> Self {
        TypePrecedence(vec![
            PremiseType::Definitional,
            PremiseType::Causal,
            PremiseType::Factual,
            PremiseType::Forecast,
            PremiseType::Moral,
        ])
    }
}

impl TypePrecedence {
    fn pick(&self, a: PremiseType, b: PremiseType) -> PremiseType {
        for &candidate in &self.0 {
            if candidate == a || candidate == b {
                return candidate;
            }
        }
        a
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DisagreementError {
    #[error("cannot analyze dependencies: {0}")]
    Graph(#[from] DagError),
    #[error("divergence {index} references {reference}, which is not in the {side:?} chain")]
    UnknownRef {
        index: usize,
        side: Side,
        reference: RefLabel,
    },
    #[error("no divergences to analyze")]
    NoDivergences,
    #[error("divergence {index} cannot be typed: neither referenced node is a typed premise and no type was declared")]
    UntypableDivergence { index: usize },
}

/// Locate the root divergence of a pair.
///
/// Divergence `i` *depends on* divergence `j` when `j`'s reference is a
/// strict ancestor of `i`'s reference in the optimist's chain, or
/// likewise in the pessimist's chain: `j` contests something upstream of
/// what `i` contests. Mutual dependencies say the graphs disagree about
/// direction, so both are dropped. Root candidates are the divergences
/// left depending on nothing (all of them, if the dependency relation is
/// cyclic); among candidates the root is the one whose two references sit
/// shallowest (smallest summed longest-path depth), with the
/// lexicographically smallest `(optimist_ref, pessimist_ref)` breaking
/// ties.
///
/// The divergence *type* is resolved per point: the type of the
/// referenced premises when both sides agree; the declared primary side's
/// type when they differ; `precedence` order when they differ without a
/// primary side; the one typable side when only one is; the declared type
/// when neither reference is a typed premise.
pub fn find_root(
    optimist_chain: &ReasoningChain,
    pessimist_chain: &ReasoningChain,
    divergences: &[Divergence],
    precedence: &TypePrecedence,
) -> Result<RootAnalysis, DisagreementError> {
    if divergences.is_empty() {
        return Err(DisagreementError::NoDivergences);
    }
    let optimist_dag = build_dag(optimist_chain)?;
    let pessimist_dag = build_dag(pessimist_chain)?;
    for (index, div) in divergences.iter().enumerate() {
        for (side, dag, reference) in [
            (Side::Optimist, &optimist_dag, div.optimist_ref),
            (Side::Pessimist, &pessimist_dag, div.pessimist_ref),
        ] {
            if !dag.contains(reference) {
                return Err(DisagreementError::UnknownRef {
                    index,
                    side,
                    reference,
                });
            }
        }
    }

    let n = divergences.len();
    let upstream = |dag: &ChainDag, below: RefLabel, above: RefLabel| {
        dag.is_strict_descendant(below, above).expect("refs checked")
    };
    let mut depends = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            depends[i][j] = upstream(
                &optimist_dag,
                divergences[i].optimist_ref,
                divergences[j].optimist_ref,
            ) || upstream(
                &pessimist_dag,
                divergences[i].pessimist_ref,
                divergences[j].pessimist_ref,
            );
        }
    }
    // Mutual dependencies cancel: neither direction is trustworthy.
    let mut strict = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if depends[i][j] && !depends[j][i] {
                strict[i].push(j);
            }
        }
    }

    let mut candidates: Vec<usize> = (0..n).filter(|&i| strict[i].is_empty()).collect();
    if candidates.is_empty() {
        candidates = (0..n).collect();
    }
    let depth_sum = |div: &Divergence| -> usize {
        optimist_dag.depth(div.optimist_ref).expect("refs checked")
            + pessimist_dag.depth(div.pessimist_ref).expect("refs checked")
    };
    let root = candidates
        .into_iter()
        .min_by_key(|&i| {
            (
                depth_sum(&divergences[i]),
                divergences[i].optimist_ref,
                divergences[i].pessimist_ref,
            )
        })
        .expect("at least one candidate");

    let mut points = Vec::with_capacity(n);
    for (index, div) in divergences.iter().enumerate() {
        let optimist_type = optimist_chain.premise_type_of(div.optimist_ref);
        let pessimist_type = pessimist_chain.premise_type_of(div.pessimist_ref);
        let dtype = match (optimist_type, pessimist_type) {
            (Some(a), Some(b)) if a == b => a,
            (Some(a), Some(b)) => match div.primary_side {
                Some(Side::Optimist) => a,
                Some(Side::Pessimist) => b,
                None => precedence.pick(a, b),
            },
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => div
                .declared_type
                .ok_or(DisagreementError::UntypableDivergence { index })?,
        };
        points.push(DivergencePoint {
            optimist_ref: div.optimist_ref,
            pessimist_ref: div.pessimist_ref,
            dtype,
            description: div.description.clone(),
            depends_on: strict[index].clone(),
            is_root: index == root,
        });
    }
    Ok(RootAnalysis { points, root })
}

/// Count root divergence types over a set of pair reports. Pairs that
/// were judged not to disagree (or have no root) contribute nothing.
pub fn root_type_distribution<'a>(
    reports: impl IntoIterator<Item = &'a DisagreementReport>,
) -> BTreeMap<PremiseType, u64> {
    let mut counts = BTreeMap::new();
    for report in reports {
        if !report.is_disagreement {
            continue;
        }
        if let Some(point) = report.root_point() {
            *counts.entry(point.dtype).or_insert(0) += 1;
        }
    }
    counts
}
