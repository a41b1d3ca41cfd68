//! Structural validation of reasoning chains.
//!
//! [`validate_chain`] never mutates its input and reports every violation
//! it can still diagnose — one malformed relationship does not hide
//! findings elsewhere. Checks that require an acyclic, fully-resolved
//! graph (`V4`, `V5`) are skipped when `V2`/`V3` make the graph
//! meaningless.

use serde::{Deserialize, Serialize};

use crate::chain::{PremiseType, ReasoningChain};
use crate::dag::{build_dag, DagError};
use crate::label::{LabelKind, RefLabel};
use crate::relation::RelationKind;

/// The fixed violation catalogue. Variant names double as the code
/// strings reports carry, hence the embedded underscores.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    /// A label is declared by more than one node.
    V1_DuplicateId,
    /// A relationship references a label that names no node.
    V2_UnresolvedRef,
    /// The relationships form a reference cycle.
    V3_Cycle,
    /// A conclusion is not the target of any relationship.
    V4_UnsupportedConclusion,
    /// Warning: a premise neither feeds any relationship nor is derived by
    /// one — it plays no role in the argument.
    V5_OrphanPremise,
    /// The second operand of an evaluation is not a moral premise.
    /// Derived premises still typed `unspecified-pending-validation`
    /// trigger this until they are explicitly retyped moral.
    V6_EvalNotMoral,
    /// A premise confidence lies outside 0–100.
    V7_ConfidenceRange,
    /// A relationship breaks the arity rules: combinations need two or
    /// more operands (and only premise targets), implications exactly one
    /// source and a target, evaluations exactly two operands and no
    /// target.
    V8_BadArity,
}

impl ViolationCode {
    pub fn severity(self) -> Severity {
        match self {
            ViolationCode::V5_OrphanPremise => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One finding, anchored at the node it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub severity: Severity,
    pub subject: RefLabel,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, subject: RefLabel, detail: String) -> Self {
        Violation {
            code,
            severity: code.severity(),
            subject,
            detail,
        }
    }
}

/// All findings for one chain, in deterministic order (code, then subject).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// A chain is valid iff it has no error-severity findings; warnings
    /// (`V5`) do not invalidate it.
    pub fn is_valid(&self) -> bool {
        !self
            .violations
            .iter()
            .any(|v| v.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    /// The most severe finding: errors before warnings, then the
    /// deterministic (code, subject) order.
    pub fn highest(&self) -> Option<&Violation> {
        self.violations
            .iter()
            .min_by_key(|v| (v.severity, v.code, v.subject))
    }
}

/// Validate one chain against the fixed violation catalogue.
pub fn validate_chain(chain: &ReasoningChain) -> ValidationReport {
    let mut violations = Vec::new();

    // V1: duplicate ids across premises, derived premises, relationships,
    // and conclusions.
    let mut declared: Vec<RefLabel> = chain
        .premises
        .iter()
        .map(|p| p.id)
        .chain(chain.derived_premises.iter().map(|d| d.id))
        .chain(chain.relationships.iter().map(|r| r.id))
        .chain(chain.conclusions.iter().map(|c| c.id))
        .collect();
    declared.sort();
    for window in declared.windows(2) {
        if window[0] == window[1] && violations.iter().all(|v: &Violation| {
            !(v.code == ViolationCode::V1_DuplicateId && v.subject == window[0])
        }) {
            violations.push(Violation::new(
                ViolationCode::V1_DuplicateId,
                window[0],
                format!("label {} is declared more than once", window[0]),
            ));
        }
    }

    // V7: confidence range on listed premises.
    for premise in &chain.premises {
        if !(0..=100).contains(&premise.confidence) {
            violations.push(Violation::new(
                ViolationCode::V7_ConfidenceRange,
                premise.id,
                format!(
                    "confidence {} is outside the valid range 0-100",
                    premise.confidence
                ),
            ));
        }
    }

    // V2: every referenced label must resolve to a node of this chain.
    let mut unresolved_rels: Vec<RefLabel> = Vec::new();
    for rel in &chain.relationships {
        for reference in rel.operands.iter().chain(rel.target.iter()) {
            if !chain.resolves(*reference) {
                unresolved_rels.push(rel.id);
                violations.push(Violation::new(
                    ViolationCode::V2_UnresolvedRef,
                    rel.id,
                    format!("references unknown node {reference}"),
                ));
            }
        }
    }
    let any_unresolved = !unresolved_rels.is_empty();

    // V8: arity rules per relationship kind. A relationship with dangling
    // references is reported as V2 alone — its shape cannot be judged
    // until the references resolve.
    for rel in &chain.relationships {
        if unresolved_rels.contains(&rel.id) {
            continue;
        }
        let arity_problem = match rel.kind {
            RelationKind::Combine => {
                if rel.operands.len() < 2 {
                    Some("a combination needs at least two operands".to_string())
                } else if let Some(target) = rel.target {
                    (target.kind != LabelKind::Premise).then(|| {
                        format!("a combination may only imply a premise, not {target}")
                    })
                } else {
                    None
                }
            }
            RelationKind::Imply => {
                if rel.operands.len() != 1 {
                    Some("an implication takes exactly one source operand".to_string())
                } else if rel.target.is_none() {
                    Some("an implication requires a target".to_string())
                } else {
                    None
                }
            }
            RelationKind::Evaluate => {
                if rel.operands.len() != 2 {
                    Some("an evaluation takes exactly two operands".to_string())
                } else if rel.target.is_some() {
                    Some("an evaluation takes no target".to_string())
                } else {
                    None
                }
            }
        };
        if let Some(detail) = arity_problem {
            violations.push(Violation::new(ViolationCode::V8_BadArity, rel.id, detail));
        }
    }

    // V6: the second operand of an evaluation must be a premise whose
    // canonical type is moral. Skipped when the operand does not resolve
    // (that is already a V2) or the arity is broken (already a V8).
    for rel in &chain.relationships {
        if rel.kind != RelationKind::Evaluate || rel.operands.len() != 2 {
            continue;
        }
        let second = rel.operands[1];
        if !chain.resolves(second) {
            continue;
        }
        let detail = if second.kind != LabelKind::Premise {
            Some(format!("second operand {second} is not a premise"))
        } else {
            match chain.premise_type_of(second) {
                Some(PremiseType::Moral) => None,
                Some(other) => Some(format!(
                    "second operand {second} is a {other} premise, not moral"
                )),
                None => Some(format!(
                    "second operand {second} is a derived premise of unspecified type; retype it moral to evaluate with it"
                )),
            }
        };
        if let Some(detail) = detail {
            violations.push(Violation::new(ViolationCode::V6_EvalNotMoral, rel.id, detail));
        }
    }

    // V3 — and, on an intact graph, V4/V5.
    if !any_unresolved {
        match build_dag(chain) {
            Ok(dag) => {
                for conclusion in &chain.conclusions {
                    if dag.in_degree(conclusion.id).unwrap_or(0) == 0 {
                        violations.push(Violation::new(
                            ViolationCode::V4_UnsupportedConclusion,
                            conclusion.id,
                            format!(
                                "conclusion {} is not the target of any relationship",
                                conclusion.id
                            ),
                        ));
                    }
                }
                // V5: a premise that feeds no relationship and is not
                // itself derived/supported by one contributes nothing.
                for premise in &chain.premises {
                    let out = dag.out_degree(premise.id).unwrap_or(0);
                    let inn = dag.in_degree(premise.id).unwrap_or(0);
                    if out == 0 && inn == 0 {
                        violations.push(Violation::new(
                            ViolationCode::V5_OrphanPremise,
                            premise.id,
                            format!("premise {} plays no role in the argument", premise.id),
                        ));
                    }
                }
            }
            Err(DagError::CycleDetected(cycle)) => {
                let shown: Vec<String> = cycle.iter().map(|l| l.to_string()).collect();
                violations.push(Violation::new(
                    ViolationCode::V3_Cycle,
                    cycle[0],
                    format!("reference cycle: {}", shown.join(" -> ")),
                ));
            }
            Err(DagError::UnresolvedRef { relationship, reference }) => {
                // Defensive: V2 scanning above should have caught this.
                violations.push(Violation::new(
                    ViolationCode::V2_UnresolvedRef,
                    relationship,
                    format!("references unknown node {reference}"),
                ));
            }
        }
    }

    violations.sort_by(|a, b| (a.code, a.subject).cmp(&(b.code, b.subject)));
    ValidationReport { violations }
}

/// A candidate missing-premise site found by [`coherence_gap_report`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapSite {
    /// The conclusion or terminal derived premise whose support is
    /// suspiciously thin.
    pub site: RefLabel,
    /// The explicit factual/forecast premises that are its only support.
    pub support: Vec<RefLabel>,
}

/// Purely structural heuristic for candidate missing-premise sites.
///
/// A *site* is a conclusion, or a derived premise nothing consumes
/// (a terminal derivation endpoint). A site is flagged when its entire
/// support subgraph consists of explicit `factual`/`forecast` premises and
/// contains no evaluation relationship — an argument that leaps from bare
/// facts and forecasts to its endpoint without any stated value, causal,
/// or definitional bridge. Any implicit premise, any premise of another
/// type, any derived premise among the ancestors, or any evaluation on the
/// path closes the gap. Sites with no premise support at all are a
/// structural-validation concern (`V4`), not a gap.
///
/// The chain must be structurally sound enough to graph (no unresolved
/// references or cycles).
pub fn coherence_gap_report(chain: &ReasoningChain) -> Result<Vec<GapSite>, DagError> {
    let dag = build_dag(chain)?;
    let mut sites: Vec<RefLabel> = chain.conclusions.iter().map(|c| c.id).collect();
    for derived in &chain.derived_premises {
        if dag.out_degree(derived.id).unwrap_or(0) == 0 {
            sites.push(derived.id);
        }
    }
    sites.sort();

    let mut flagged = Vec::new();
    'site: for site in sites {
        let ancestors = dag.ancestors(site).expect("site is a chain node");
        let mut support = Vec::new();
        for node in ancestors {
            if chain.derived_premise(node).is_some() {
                continue 'site;
            }
            if let Some(premise) = chain.premise(node) {
                let plain_fact = premise.explicitness == crate::chain::Explicitness::Explicit
                    && matches!(premise.ptype, PremiseType::Factual | PremiseType::Forecast);
                if !plain_fact {
                    continue 'site;
                }
                support.push(node);
                continue;
            }
            if let Some(rel) = chain.relationship(node) {
                if rel.kind == RelationKind::Evaluate {
                    continue 'site;
                }
            }
        }
        if !support.is_empty() {
            flagged.push(GapSite { site, support });
        }
    }
    Ok(flagged)
}
