//! Statistical tests and summaries over premise-type distributions.
//!
//! Everything here is deterministic and pure: counts in, test results
//! out. P-values below [`MIN_REPORTABLE_P`] are floored there and marked
//! `clamped` so downstream reports can distinguish "vanishingly small"
//! from "exactly this".

pub mod gamma;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{enthymeme_stats, EnthymemeStats, Premise, PremiseType, ReasoningChain};
use crate::dag::{build_dag, DagError};

/// Smallest p-value ever reported; anything smaller is floored here and
/// flagged as clamped.
pub const MIN_REPORTABLE_P: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("input must not be empty")]
    EmptyInput,
    #[error("observed has {observed} categories but expected has {expected}")]
    LengthMismatch { observed: usize, expected: usize },
    #[error("a goodness-of-fit test needs at least two categories")]
    TooFewCategories,
    #[error("expected share for category {index} must be finite and positive")]
    BadExpectedShare { index: usize },
    #[error("expected shares sum to {sum}, not 1")]
    ExpectedNotNormalized { sum: f64 },
    #[error("observed counts sum to zero")]
    ZeroTotal,
    #[error("{successes} successes out of {trials} trials is not a valid proportion")]
    BadCounts { successes: u64, trials: u64 },
    #[error("pooled proportion is degenerate (all successes or all failures)")]
    DegeneratePool,
}

fn clamp_p(p: f64) -> (f64, bool) {
    if p < MIN_REPORTABLE_P {
        (MIN_REPORTABLE_P, true)
    } else {
        (p, false)
    }
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// True when the exact p-value fell below [`MIN_REPORTABLE_P`].
    pub clamped: bool,
}

/// Pearson chi-square goodness-of-fit of observed counts against expected
/// shares (which must be positive and sum to 1). The statistic is
/// Σ (Oᵢ − Eᵢ·n)² / (Eᵢ·n) with n = Σ Oᵢ, tested on k − 1 degrees of
/// freedom.
pub fn chi_square_gof(
    observed: &[u64],
    expected_shares: &[f64],
) -> Result<ChiSquareTest, StatsError> {
    if observed.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if observed.len() != expected_shares.len() {
        return Err(StatsError::LengthMismatch {
            observed: observed.len(),
            expected: expected_shares.len(),
        });
    }
    if observed.len() < 2 {
        return Err(StatsError::TooFewCategories);
    }
    for (index, &share) in expected_shares.iter().enumerate() {
        if !share.is_finite() || share <= 0.0 {
            return Err(StatsError::BadExpectedShare { index });
        }
    }
    let share_sum: f64 = expected_shares.iter().sum();
    if (share_sum - 1.0).abs() > 1e-6 {
        return Err(StatsError::ExpectedNotNormalized { sum: share_sum });
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(StatsError::ZeroTotal);
    }
    let n = n as f64;
    let statistic: f64 = observed
        .iter()
        .zip(expected_shares)
        .map(|(&o, &share)| {
            let expected = share * n;
            let diff = o as f64 - expected;
            diff * diff / expected
        })
        .sum();
    let df = observed.len() - 1;
    let (p_value, clamped) = clamp_p(gamma::regularized_gamma_q(df as f64 / 2.0, statistic / 2.0));
    Ok(ChiSquareTest {
        statistic,
        df,
        p_value,
        clamped,
    })
}

/// Chi-square goodness-of-fit keyed by premise type. Categories with a
/// zero expected share are dropped when unobserved and rejected when
/// observed (no sensible expectation exists for them).
pub fn chi_square_by_type(
    observed: &BTreeMap<PremiseType, u64>,
    expected_shares: &BTreeMap<PremiseType, f64>,
) -> Result<ChiSquareTest, StatsError> {
    let mut counts = Vec::new();
    let mut shares = Vec::new();
    for (index, &ptype) in PremiseType::ALL.iter().enumerate() {
        let count = observed.get(&ptype).copied().unwrap_or(0);
        let share = expected_shares.get(&ptype).copied().unwrap_or(0.0);
        if share <= 0.0 {
            if count > 0 {
                return Err(StatsError::BadExpectedShare { index });
            }
            continue;
        }
        counts.push(count);
        shares.push(share);
    }
    chi_square_gof(&counts, &shares)
}

/// One-sided upper tail of the standard normal, P(Z > z), via
/// Q(1/2, z²/2) / 2.
pub fn normal_upper_tail(z: f64) -> f64 {
    let half_tail = gamma::regularized_gamma_q(0.5, z * z / 2.0) / 2.0;
    if z >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Result of a pooled two-proportion z-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoProportionTest {
    pub z: f64,
    /// One-sided upper-tail p-value, P(Z > z).
    pub p_value: f64,
    pub pooled: f64,
    pub clamped: bool,
}

/// Pooled two-proportion z-test, one-sided in the direction
/// "proportion A exceeds proportion B". No continuity correction is
/// applied: z = (p̂ₐ − p̂ᵦ) / √(p̂(1−p̂)(1/nₐ + 1/nᵦ)) with p̂ the pooled
/// proportion.
pub fn two_prop_z(
    successes_a: u64,
    trials_a: u64,
    successes_b: u64,
    trials_b: u64,
) -> Result<TwoProportionTest, StatsError> {
    for (successes, trials) in [(successes_a, trials_a), (successes_b, trials_b)] {
        if trials == 0 || successes > trials {
            return Err(StatsError::BadCounts { successes, trials });
        }
    }
    let prop_a = successes_a as f64 / trials_a as f64;
    let prop_b = successes_b as f64 / trials_b as f64;
    let pooled = (successes_a + successes_b) as f64 / (trials_a + trials_b) as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(StatsError::DegeneratePool);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / trials_a as f64 + 1.0 / trials_b as f64)).sqrt();
    let z = (prop_a - prop_b) / se;
    let (p_value, clamped) = clamp_p(normal_upper_tail(z));
    Ok(TwoProportionTest {
        z,
        p_value,
        pooled,
        clamped,
    })
}

/// Baseline premise-type probabilities over argument pairs.
///
/// For each pair the two chains' premise counts are combined, each type's
/// share of the combined total is taken, and the shares are averaged over
/// all pairs. The returned map covers all five types and its values sum
/// to 1 (within float dust).
pub fn base_probability(
    pairs: &[(EnthymemeStats, EnthymemeStats)],
) -> Result<BTreeMap<PremiseType, f64>, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut shares: BTreeMap<PremiseType, f64> =
        PremiseType::ALL.iter().map(|&t| (t, 0.0)).collect();
    for (a, b) in pairs {
        let combined_total = (a.total + b.total) as f64;
        if combined_total == 0.0 {
            return Err(StatsError::ZeroTotal);
        }
        for &ptype in PremiseType::ALL.iter() {
            let combined = (a.count(ptype).total() + b.count(ptype).total()) as f64;
            *shares.get_mut(&ptype).expect("all types present") += combined / combined_total;
        }
    }
    let n = pairs.len() as f64;
    for share in shares.values_mut() {
        *share /= n;
    }
    Ok(shares)
}

/// Expected root-divergence counts under the base probabilities: each
/// share times the number of disagreeing pairs. The natural companion to
/// [`chi_square_by_type`] when comparing an observed root-type
/// distribution against chance.
pub fn expected_root_counts(
    base_shares: &BTreeMap<PremiseType, f64>,
    disagreeing_pairs: u64,
) -> BTreeMap<PremiseType, f64> {
    base_shares
        .iter()
        .map(|(&ptype, &share)| (ptype, share * disagreeing_pairs as f64))
        .collect()
}

/// Premise-type proportions for one chain, with the explicit/implicit
/// split. Every share is a fraction of the chain's listed premises, so
/// `type_shares` sums to 1 and, per type, `explicit_shares + implicit_shares
/// = type_shares`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainComposition {
    pub episode: String,
    pub speaker: String,
    pub total_premises: usize,
    pub implicit_premises: usize,
    pub type_shares: BTreeMap<PremiseType, f64>,
    pub explicit_shares: BTreeMap<PremiseType, f64>,
    pub implicit_shares: BTreeMap<PremiseType, f64>,
}

/// Corpus-level premise composition: one breakdown per chain (in input
/// order) plus unweighted means over chains and a histogram of
/// per-chain premise counts. The means and the histogram are order-free;
/// only the `per_chain` echo follows input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSummary {
    pub per_chain: Vec<ChainComposition>,
    pub mean_type_shares: BTreeMap<PremiseType, f64>,
    pub mean_explicit_shares: BTreeMap<PremiseType, f64>,
    pub mean_implicit_shares: BTreeMap<PremiseType, f64>,
    /// Unweighted mean of each chain's implicit fraction.
    pub mean_implicit_share: f64,
    pub premise_count_histogram: BTreeMap<usize, usize>,
}

/// Summarize premise-type composition across chains: per-chain shares
/// (split explicit/implicit), unweighted corpus means, and a premise
/// count histogram. Means weigh every chain equally regardless of its
/// size. A chain without listed premises has no composition and is
/// rejected as [`StatsError::ZeroTotal`].
pub fn composition_summary(chains: &[ReasoningChain]) -> Result<CompositionSummary, StatsError> {
    if chains.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut per_chain = Vec::with_capacity(chains.len());
    for chain in chains {
        let stats = enthymeme_stats(chain);
        if stats.total == 0 {
            return Err(StatsError::ZeroTotal);
        }
        let total = stats.total as f64;
        let mut type_shares = BTreeMap::new();
        let mut explicit_shares = BTreeMap::new();
        let mut implicit_shares = BTreeMap::new();
        for &ptype in PremiseType::ALL.iter() {
            let count = stats.count(ptype);
            type_shares.insert(ptype, count.total() as f64 / total);
            explicit_shares.insert(ptype, count.explicit as f64 / total);
            implicit_shares.insert(ptype, count.implicit as f64 / total);
        }
        per_chain.push(ChainComposition {
            episode: chain.episode.clone(),
            speaker: chain.speaker.name.clone(),
            total_premises: stats.total,
            implicit_premises: stats.implicit_total,
            type_shares,
            explicit_shares,
            implicit_shares,
        });
    }

    let n = per_chain.len() as f64;
    // Sum each mean's addends in sorted order: chain order then cannot
    // perturb the result even in the last bit.
    let ordered_mean = |mut addends: Vec<f64>| -> f64 {
        addends.sort_by(f64::total_cmp);
        addends.iter().sum::<f64>() / n
    };
    let mean_over = |pick: fn(&ChainComposition) -> &BTreeMap<PremiseType, f64>| {
        PremiseType::ALL
            .iter()
            .map(|&ptype| {
                (
                    ptype,
                    ordered_mean(per_chain.iter().map(|c| pick(c)[&ptype]).collect()),
                )
            })
            .collect::<BTreeMap<_, _>>()
    };
    let mean_type_shares = mean_over(|c| &c.type_shares);
    let mean_explicit_shares = mean_over(|c| &c.explicit_shares);
    let mean_implicit_shares = mean_over(|c| &c.implicit_shares);
    let mean_implicit_share = ordered_mean(
        per_chain
            .iter()
            .map(|c| c.implicit_premises as f64 / c.total_premises as f64)
            .collect(),
    );
    let mut premise_count_histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for composition in &per_chain {
        *premise_count_histogram
            .entry(composition.total_premises)
            .or_default() += 1;
    }
    Ok(CompositionSummary {
        per_chain,
        mean_type_shares,
        mean_explicit_shares,
        mean_implicit_shares,
        mean_implicit_share,
        premise_count_histogram,
    })
}

/// One row of the per-conclusion composition table exported for
/// downstream regression modelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub conclusion_id: String,
    pub episode: String,
    pub speaker: String,
    pub profession: String,
    pub gender: String,
    pub topic: String,
    pub attitude: String,
    pub total_premises: usize,
    pub prop_factual: f64,
    pub prop_forecast: f64,
    pub prop_causal: f64,
    pub prop_definitional: f64,
    pub prop_moral: f64,
    pub implicit_share: f64,
}

/// Build one composition row per conclusion, over the listed premises
/// that actually support that conclusion (its graph ancestors).
pub fn regression_rows(chain: &ReasoningChain) -> Result<Vec<RegressionRow>, DagError> {
    let dag = build_dag(chain)?;
    let mut rows = Vec::new();
    for conclusion in &chain.conclusions {
        let ancestors = dag.ancestors(conclusion.id).expect("conclusion is a chain node");
        let premises: Vec<&Premise> = ancestors
            .iter()
            .filter_map(|&label| chain.premise(label))
            .collect();
        let total = premises.len();
        let share = |ptype: PremiseType| -> f64 {
            if total == 0 {
                0.0
            } else {
                premises.iter().filter(|p| p.ptype == ptype).count() as f64 / total as f64
            }
        };
        let implicit = premises
            .iter()
            .filter(|p| p.explicitness == crate::chain::Explicitness::Implicit)
            .count();
        rows.push(RegressionRow {
            conclusion_id: conclusion.id.to_string(),
            episode: chain.episode.clone(),
            speaker: chain.speaker.name.clone(),
            profession: chain.speaker.profession.wire_name().to_string(),
            gender: format!("{:?}", chain.speaker.gender).to_lowercase(),
            topic: conclusion.topic.clone().unwrap_or_default(),
            attitude: conclusion
                .attitude
                .map(|a| a.to_string())
                .unwrap_or_default(),
            total_premises: total,
            prop_factual: share(PremiseType::Factual),
            prop_forecast: share(PremiseType::Forecast),
            prop_causal: share(PremiseType::Causal),
            prop_definitional: share(PremiseType::Definitional),
            prop_moral: share(PremiseType::Moral),
            implicit_share: if total == 0 {
                0.0
            } else {
                implicit as f64 / total as f64
            },
        });
    }
    Ok(rows)
}

/// Write composition rows as CSV with a fixed header:
/// `conclusion_id,episode,speaker,profession,gender,topic,attitude,total_premises,prop_factual,prop_forecast,prop_causal,prop_definitional,prop_moral,implicit_share`.
pub fn export_regression_csv<W: std::io::Write>(
    rows: &[RegressionRow],
    writer: W,
) -> Result<(), csv::Error> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    for row in rows {
        csv_writer.serialize(row)?;
    }
    csv_writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{
        Attitude, Conclusion, Explicitness, Gender, Premise, Profession, SpeakerMeta, TypeCount,
    };
    use crate::label::RefLabel;
    use crate::relation::parse_relation;

    fn assert_close(actual: f64, expected: f64, rel: f64, what: &str) {
        assert!(
            (actual - expected).abs() <= rel * expected.abs().max(f64::MIN_POSITIVE),
            "{what}: got {actual:e}, want {expected:e}"
        );
    }

    #[test]
    fn chi_square_worked_example() {
        // 30/10 split against a uniform expectation: statistic is exactly
        // (30-20)^2/20 + (10-20)^2/20 = 10
        let test = chi_square_gof(&[30, 10], &[0.5, 0.5]).unwrap();
        assert_eq!(test.statistic, 10.0);
        assert_eq!(test.df, 1);
        assert_close(test.p_value, 0.0015654022580025497, 1e-12, "p");
        assert!(!test.clamped);
    }

    #[test]
    fn chi_square_tiny_but_representable_p_is_not_clamped() {
        // statistic = (0-225)^2/225 + (300-75)^2/75 = 900 on df 1:
        // p ~ 1e-195, deep in the tail yet far above the clamp floor
        let test = chi_square_gof(&[0, 300], &[0.75, 0.25]).unwrap();
        assert_eq!(test.statistic, 900.0);
        assert!(test.p_value < 1e-150 && test.p_value > MIN_REPORTABLE_P);
        assert!(!test.clamped);
    }

    #[test]
    fn chi_square_underflow_is_clamped_to_floor() {
        let test = chi_square_gof(&[100_000, 0], &[0.001, 0.999]).unwrap();
        assert!(test.statistic > 1e6);
        assert_eq!(test.p_value, MIN_REPORTABLE_P);
        assert!(test.clamped);
    }

    #[test]
    fn chi_square_input_validation() {
        assert_eq!(chi_square_gof(&[], &[]), Err(StatsError::EmptyInput));
        assert_eq!(
            chi_square_gof(&[1, 2], &[0.5]),
            Err(StatsError::LengthMismatch {
                observed: 2,
                expected: 1
            })
        );
        assert_eq!(chi_square_gof(&[5], &[1.0]), Err(StatsError::TooFewCategories));
        assert_eq!(
            chi_square_gof(&[1, 2], &[0.0, 1.0]),
            Err(StatsError::BadExpectedShare { index: 0 })
        );
        assert_eq!(
            chi_square_gof(&[1, 2], &[0.5, 0.4]),
            Err(StatsError::ExpectedNotNormalized { sum: 0.9 })
        );
        assert_eq!(chi_square_gof(&[0, 0], &[0.5, 0.5]), Err(StatsError::ZeroTotal));
    }

    #[test]
    fn chi_square_by_type_drops_unobserved_zero_share_categories() {
        let observed: BTreeMap<PremiseType, u64> =
            [(PremiseType::Factual, 30), (PremiseType::Causal, 10)].into();
        let expected: BTreeMap<PremiseType, f64> =
            [(PremiseType::Factual, 0.5), (PremiseType::Causal, 0.5)].into();
        let test = chi_square_by_type(&observed, &expected).unwrap();
        assert_eq!(test.df, 1);
        assert_eq!(test.statistic, 10.0);

        // an observed count in a zero-share category has no expectation
        let mut observed_bad = observed.clone();
        observed_bad.insert(PremiseType::Moral, 1);
        assert!(matches!(
            chi_square_by_type(&observed_bad, &expected),
            Err(StatsError::BadExpectedShare { .. })
        ));
    }

    #[test]
    fn two_prop_z_worked_example() {
        // 90/100 vs 50/100, pooled p = 0.7:
        // z = 0.4 / sqrt(0.21 * 0.02) = 6.17213399848...
        let test = two_prop_z(90, 100, 50, 100).unwrap();
        assert_close(test.z, 6.172133998483676, 1e-13, "z");
        assert_eq!(test.pooled, 0.7);
        assert_close(test.p_value, 3.3687180094663743e-10, 1e-10, "p");
        assert!(!test.clamped);
    }

    #[test]
    fn two_prop_z_lower_tail_is_complement() {
        let upper = two_prop_z(90, 100, 50, 100).unwrap();
        let swapped = two_prop_z(50, 100, 90, 100).unwrap();
        assert_close(swapped.z, -upper.z, 1e-13, "z sign");
        assert_close(swapped.p_value, 1.0 - upper.p_value, 1e-12, "complement");
    }

    #[test]
    fn two_prop_z_degenerate_and_bad_counts() {
        assert_eq!(two_prop_z(0, 10, 0, 20), Err(StatsError::DegeneratePool));
        assert_eq!(two_prop_z(10, 10, 20, 20), Err(StatsError::DegeneratePool));
        assert_eq!(
            two_prop_z(5, 0, 1, 2),
            Err(StatsError::BadCounts {
                successes: 5,
                trials: 0
            })
        );
        assert_eq!(
            two_prop_z(3, 2, 1, 2),
            Err(StatsError::BadCounts {
                successes: 3,
                trials: 2
            })
        );
    }

    fn stats_from(counts: &[(PremiseType, usize, usize)]) -> EnthymemeStats {
        let mut stats = EnthymemeStats::default();
        for &(ptype, explicit, implicit) in counts {
            stats.counts.insert(ptype, TypeCount { explicit, implicit });
            stats.total += explicit + implicit;
            stats.implicit_total += implicit;
        }
        stats
    }

    #[test]
    fn base_probability_single_pair_is_combined_share() {
        // 12 factual premises out of 43 combined
        let a = stats_from(&[
            (PremiseType::Factual, 7, 0),
            (PremiseType::Forecast, 2, 0),
            (PremiseType::Causal, 2, 0),
            (PremiseType::Definitional, 1, 0),
        ]);
        let b = stats_from(&[
            (PremiseType::Factual, 4, 1),
            (PremiseType::Forecast, 4, 0),
            (PremiseType::Causal, 6, 0),
            (PremiseType::Definitional, 3, 0),
            (PremiseType::Moral, 0, 13),
        ]);
        assert_eq!(a.total + b.total, 43);
        let base = base_probability(&[(a, b)]).unwrap();
        assert_close(base[&PremiseType::Factual], 0.27906976744186046, 1e-15, "12/43");
        let sum: f64 = base.values().sum();
        assert!((sum - 1.0).abs() <= 1e-12, "shares sum to {sum}");
    }

    #[test]
    fn base_probability_averages_over_pairs() {
        let pure_factual = stats_from(&[(PremiseType::Factual, 4, 0)]);
        let pure_moral = stats_from(&[(PremiseType::Moral, 0, 4)]);
        let base = base_probability(&[
            (pure_factual.clone(), pure_factual.clone()),
            (pure_factual, pure_moral),
        ])
        .unwrap();
        assert_close(base[&PremiseType::Factual], 0.75, 1e-15, "factual");
        assert_close(base[&PremiseType::Moral], 0.25, 1e-15, "moral");
    }

    #[test]
    fn base_probability_errors() {
        assert_eq!(base_probability(&[]), Err(StatsError::EmptyInput));
        let empty = EnthymemeStats::default();
        assert_eq!(
            base_probability(&[(empty.clone(), empty)]),
            Err(StatsError::ZeroTotal)
        );
    }

    #[test]
    fn expected_root_counts_scale_shares_by_pair_count() {
        let base = BTreeMap::from([
            (PremiseType::Factual, 0.25),
            (PremiseType::Causal, 0.75),
        ]);
        let expected = expected_root_counts(&base, 8);
        assert_eq!(expected.len(), 2);
        assert_close(expected[&PremiseType::Factual], 2.0, 0.0, "factual");
        assert_close(expected[&PremiseType::Causal], 6.0, 0.0, "causal");
        assert!(expected_root_counts(&base, 0).values().all(|&v| v == 0.0));
    }

    fn chain_from_mix(
        episode: &str,
        speaker: &str,
        mix: &[(PremiseType, Explicitness)],
    ) -> ReasoningChain {
        let premises = mix
            .iter()
            .enumerate()
            .map(|(index, &(ptype, explicitness))| Premise {
                id: RefLabel::premise(index as u32 + 1),
                text: format!("p{}", index + 1),
                ptype,
                explicitness,
                confidence: 80,
            })
            .collect();
        ReasoningChain::from_parts(
            SpeakerMeta {
                name: speaker.into(),
                profession: Profession::Academic,
                gender: Gender::Female,
            },
            episode.into(),
            Vec::new(),
            premises,
            Vec::new(),
        )
    }

    #[test]
    fn composition_single_chain_counts_directly() {
        use Explicitness::Explicit as E;
        let chain = chain_from_mix(
            "ep001",
            "Ada Voss",
            &[
                (PremiseType::Factual, E),
                (PremiseType::Factual, E),
                (PremiseType::Causal, E),
                (PremiseType::Causal, E),
            ],
        );
        let summary = composition_summary(std::slice::from_ref(&chain)).unwrap();
        assert_eq!(summary.per_chain.len(), 1);
        let only = &summary.per_chain[0];
        assert_eq!(only.type_shares[&PremiseType::Factual], 0.5);
        assert_eq!(only.type_shares[&PremiseType::Causal], 0.5);
        assert_eq!(only.type_shares[&PremiseType::Moral], 0.0);
        assert_eq!(only.explicit_shares[&PremiseType::Factual], 0.5);
        assert_eq!(only.implicit_shares[&PremiseType::Factual], 0.0);
        // a single chain is its own corpus mean
        assert_eq!(summary.mean_type_shares, only.type_shares);
        assert_eq!(summary.mean_implicit_share, 0.0);
        assert_eq!(summary.premise_count_histogram, [(4, 1)].into());
    }

    #[test]
    fn composition_dense_chain_moral_and_implicit_shares() {
        // 31 premises where the 5 moral ones are all implicit, plus two
        // more implicit premises elsewhere — the other type counts are
        // arbitrary filler
        let mut mix = Vec::new();
        let filler = [
            (PremiseType::Factual, 5),
            (PremiseType::Forecast, 9),
            (PremiseType::Causal, 8),
            (PremiseType::Definitional, 4),
        ];
        for (ptype, count) in filler {
            for index in 0..count {
                let explicitness = if ptype == PremiseType::Forecast && index == 0
                    || ptype == PremiseType::Causal && index == 0
                {
                    Explicitness::Implicit
                } else {
                    Explicitness::Explicit
                };
                mix.push((ptype, explicitness));
            }
        }
        for _ in 0..5 {
            mix.push((PremiseType::Moral, Explicitness::Implicit));
        }
        let chain = chain_from_mix("ep431", "Rhea Volkov", &mix);
        let summary = composition_summary(std::slice::from_ref(&chain)).unwrap();
        let only = &summary.per_chain[0];
        assert_eq!(only.total_premises, 31);
        assert_eq!(only.implicit_premises, 7);
        assert_eq!(only.type_shares[&PremiseType::Moral], 5.0 / 31.0);
        assert_eq!(only.implicit_shares[&PremiseType::Moral], 5.0 / 31.0);
        assert_eq!(only.explicit_shares[&PremiseType::Moral], 0.0);
        assert_eq!(summary.mean_implicit_share, 7.0 / 31.0);
        let sum: f64 = only.type_shares.values().sum();
        assert!((sum - 1.0).abs() <= 1e-12, "shares sum to {sum}");
    }

    #[test]
    fn composition_means_weigh_chains_equally() {
        use Explicitness::{Explicit as E, Implicit as I};
        // 4-premise all-factual chain and a 2-premise half-causal chain:
        // the mean ignores the size difference
        let big = chain_from_mix("ep001", "A", &[(PremiseType::Factual, E); 4]);
        let small = chain_from_mix(
            "ep002",
            "B",
            &[(PremiseType::Factual, E), (PremiseType::Causal, I)],
        );
        let summary = composition_summary(&[big, small]).unwrap();
        assert_eq!(summary.mean_type_shares[&PremiseType::Factual], 0.75);
        assert_eq!(summary.mean_type_shares[&PremiseType::Causal], 0.25);
        assert_eq!(summary.mean_implicit_share, 0.25);
        assert_eq!(summary.premise_count_histogram, [(2, 1), (4, 1)].into());
    }

    #[test]
    fn composition_rejects_empty_input_and_premiseless_chains() {
        assert!(matches!(
            composition_summary(&[]),
            Err(StatsError::EmptyInput)
        ));
        let hollow = chain_from_mix("ep001", "A", &[]);
        assert!(matches!(
            composition_summary(&[hollow]),
            Err(StatsError::ZeroTotal)
        ));
    }

    fn toy_chain() -> ReasoningChain {
        let premise = |i: u32, ptype, explicitness| Premise {
            id: RefLabel::premise(i),
            text: format!("p{i}"),
            ptype,
            explicitness,
            confidence: 80,
        };
        ReasoningChain::from_parts(
            SpeakerMeta {
                name: "Ada Voss".into(),
                profession: Profession::Academic,
                gender: Gender::Female,
            },
            "ep001".into(),
            vec![Conclusion {
                id: RefLabel::conclusion(1),
                text: "c".into(),
                topic: Some("T001".into()),
                attitude: Some(Attitude::Pessimistic),
            }],
            vec![
                premise(1, PremiseType::Factual, Explicitness::Explicit),
                premise(2, PremiseType::Factual, Explicitness::Explicit),
                premise(3, PremiseType::Causal, Explicitness::Implicit),
                premise(4, PremiseType::Moral, Explicitness::Implicit),
            ],
            ["R1: P1 + P2", "R2: R1 => P5", "R3: P5 + P3", "R4: R3 ^ P4", "R5: R4 => C1"]
                .iter()
                .map(|line| parse_relation(line).unwrap())
                .collect(),
        )
    }

    #[test]
    fn regression_rows_cover_conclusion_support() {
        let rows = regression_rows(&toy_chain()).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.conclusion_id, "C1");
        assert_eq!(row.episode, "ep001");
        assert_eq!(row.speaker, "Ada Voss");
        assert_eq!(row.profession, "academic");
        assert_eq!(row.gender, "female");
        assert_eq!(row.topic, "T001");
        assert_eq!(row.attitude, "pessimistic");
        assert_eq!(row.total_premises, 4);
        assert_eq!(row.prop_factual, 0.5);
        assert_eq!(row.prop_causal, 0.25);
        assert_eq!(row.prop_moral, 0.25);
        assert_eq!(row.prop_forecast, 0.0);
        assert_eq!(row.implicit_share, 0.5);
    }

    #[test]
    fn regression_csv_has_documented_header() {
        let rows = regression_rows(&toy_chain()).unwrap();
        let mut out = Vec::new();
        export_regression_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "conclusion_id,episode,speaker,profession,gender,topic,attitude,\
             total_premises,prop_factual,prop_forecast,prop_causal,\
             prop_definitional,prop_moral,implicit_share"
        );
        assert_eq!(
            lines.next().unwrap(),
            "C1,ep001,Ada Voss,academic,female,T001,pessimistic,4,0.5,0.0,0.25,0.0,0.25,0.5"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn stats_strategy() -> impl Strategy<Value = EnthymemeStats> {
            proptest::collection::vec((0usize..6, 0usize..6), 5).prop_map(|counts| {
                let mut stats = EnthymemeStats::default();
                for (&ptype, &(explicit, implicit)) in PremiseType::ALL.iter().zip(&counts) {
                    stats.counts.insert(ptype, TypeCount { explicit, implicit });
                    stats.total += explicit + implicit;
                    stats.implicit_total += implicit;
                }
                stats
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn base_probability_sums_to_one(
                pairs in proptest::collection::vec(
                    (stats_strategy(), stats_strategy()), 1..8
                )
            ) {
                prop_assume!(pairs.iter().all(|(a, b)| a.total + b.total > 0));
                let base = base_probability(&pairs).unwrap();
                let sum: f64 = base.values().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12, "sum = {sum}");
                prop_assert!(base.values().all(|&v| (0.0..=1.0).contains(&v)));
            }

            #[test]
            fn normal_tail_is_monotone_and_bounded(z in -40.0f64..40.0) {
                let p = normal_upper_tail(z);
                prop_assert!((0.0..=1.0).contains(&p));
                let p_further = normal_upper_tail(z + 0.5);
                prop_assert!(p_further <= p + 1e-15);
            }

            #[test]
            fn composition_is_reorder_invariant_and_normalized(
                mixes in proptest::collection::vec(
                    proptest::collection::vec((0usize..5, any::<bool>()), 1..40),
                    1..8,
                ),
                rotation in 0usize..8,
            ) {
                let chains: Vec<ReasoningChain> = mixes
                    .iter()
                    .enumerate()
                    .map(|(index, mix)| {
                        let mix: Vec<(PremiseType, Explicitness)> = mix
                            .iter()
                            .map(|&(t, implicit)| {
                                (
                                    PremiseType::ALL[t],
                                    if implicit {
                                        Explicitness::Implicit
                                    } else {
                                        Explicitness::Explicit
                                    },
                                )
                            })
                            .collect();
                        chain_from_mix(&format!("ep{index:03}"), "S", &mix)
                    })
                    .collect();
                let summary = composition_summary(&chains).unwrap();

                for composition in &summary.per_chain {
                    let sum: f64 = composition.type_shares.values().sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-12, "chain shares sum to {sum}");
                    for &ptype in PremiseType::ALL.iter() {
                        let split = composition.explicit_shares[&ptype]
                            + composition.implicit_shares[&ptype];
                        prop_assert!(
                            (split - composition.type_shares[&ptype]).abs() <= 1e-12,
                            "explicit/implicit split must partition the type share"
                        );
                    }
                }

                let mut rotated = chains.clone();
                rotated.rotate_left(rotation % chains.len());
                let of_rotated = composition_summary(&rotated).unwrap();
                prop_assert_eq!(&summary.mean_type_shares, &of_rotated.mean_type_shares);
                prop_assert_eq!(
                    &summary.mean_explicit_shares,
                    &of_rotated.mean_explicit_shares
                );
                prop_assert_eq!(
                    &summary.mean_implicit_shares,
                    &of_rotated.mean_implicit_shares
                );
                prop_assert_eq!(
                    &summary.premise_count_histogram,
                    &of_rotated.premise_count_histogram
                );
            }
        }
    }
}
