//! Regularized incomplete gamma functions.
//!
//! Hand-rolled because the tail behaviour is load-bearing here: the
//! published tables this toolkit reproduces quote chi-square p-values
//! down to the underflow floor, so the implementation must stay accurate
//! (absolute error well under 1e-10) from p ~ 1 down to p ~ 1e-200
//! rather than degrade once generic erf-based shortcuts run out of
//! precision.

/// Natural log of the gamma function for `x > 0`, via a 9-term Lanczos
/// approximation (g = 7), accurate to ~1e-14 relative error.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma domain is x > 0");
    // Γ(x) = Γ(x+1)/x keeps the approximation in its sweet spot for
    // small arguments.
    if x < 0.5 {
        return ln_gamma(x + 1.0) - x.ln();
    }
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let z = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-308;
const MAX_ITER: usize = 10_000;

/// ln of the prefactor x^a e^{-x} / Γ(a) shared by both expansions.
fn ln_prefactor(a: f64, x: f64) -> f64 {
    a * x.ln() - x - ln_gamma(a)
}

/// Lower regularized incomplete gamma P(a, x) by series expansion.
/// Converges quickly for x < a + 1.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * ln_prefactor(a, x).exp()
}

/// Upper regularized incomplete gamma Q(a, x) by Lentz's continued
/// fraction. Converges quickly for x >= a + 1.
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    ln_prefactor(a, x).exp() * h
}

/// Lower regularized incomplete gamma P(a, x) = γ(a, x) / Γ(a).
///
/// Requires `a > 0` and `x >= 0`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "regularized gamma domain: a > 0, x >= 0");
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - upper_continued_fraction(a, x)
    }
}

/// Upper regularized incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
///
/// The series/continued-fraction split at x = a + 1 means the smaller of
/// P and Q is always computed directly, so deep tails keep full relative
/// precision instead of being squeezed into `1.0 - (almost 1.0)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "regularized gamma domain: a > 0, x >= 0");
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, rel: f64, what: &str) {
        let tol = rel * expected.abs().max(f64::MIN_POSITIVE);
        assert!(
            (actual - expected).abs() <= tol,
            "{what}: got {actual:e}, want {expected:e} (rel tol {rel:e})"
        );
    }

    // Reference values below were computed independently with 60-digit
    // arbitrary-precision arithmetic.

    #[test]
    fn ln_gamma_matches_reference() {
        let cases = [
            (0.5, 0.57236494292470009),
            (1.0, 0.0),
            (1.5, -0.12078223763524522),
            (2.0, 0.0),
            (2.5, 0.28468287047291916),
            (5.0, 3.1780538303479456),
            (10.5, 13.940625219403764),
            (171.5, 709.14316303092824),
        ];
        for (x, want) in cases {
            let got = ln_gamma(x);
            assert!(
                (got - want).abs() <= 1e-11 * want.abs().max(1.0),
                "ln_gamma({x}): got {got}, want {want}"
            );
        }
    }

    #[test]
    fn q_matches_reference_grid() {
        // Half-integer shape parameters (chi-square with df 1..=10) over a
        // spread of tail depths.
        #[rustfmt::skip]
        let grid: [(u32, f64, f64); 50] = [
            (1, 0.1, 0.75182963404584928), (1, 1.0, 0.3173105078629141),
            (1, 5.0, 0.025347318677468264), (1, 10.0, 0.0015654022580025497),
            (1, 50.0, 1.5374597944280349e-12),
            (2, 0.1, 0.95122942450071401), (2, 1.0, 0.60653065971263342),
            (2, 5.0, 0.082084998623898795), (2, 10.0, 0.0067379469990854671),
            (2, 50.0, 1.3887943864964021e-11),
            (3, 0.1, 0.99183742373187648), (3, 1.0, 0.8012519569012008),
            (3, 5.0, 0.17179714429673314), (3, 10.0, 0.018566135463043233),
            (3, 50.0, 7.9891792449514711e-11),
            (4, 0.1, 0.99879089572574971), (4, 1.0, 0.90979598956895014),
            (4, 5.0, 0.28729749518364578), (4, 10.0, 0.040427681994512803),
            (4, 50.0, 3.6108654048906454e-10),
            (5, 0.1, 0.99983768338807738), (5, 1.0, 0.96256577324729637),
            (5, 5.0, 0.41588018699550792), (5, 10.0, 0.075235246146512179),
            (5, 50.0, 1.3857973367009593e-9),
            (6, 0.1, 0.9999799325063756), (6, 1.0, 0.98561232203302931),
            (6, 5.0, 0.54381311588332952), (6, 10.0, 0.12465201948308114),
            (6, 50.0, 4.701068998290321e-9),
            (7, 0.1, 0.9999976885812014), (7, 1.0, 0.99482853651651548),
            (7, 5.0, 0.65996322969428271), (7, 10.0, 0.18857346751345007),
            (7, 50.0, 1.4444852779215405e-8),
            (8, 0.1, 0.9999997497860527), (8, 1.0, 0.99824837744370918),
            (8, 5.0, 0.75757613313306596), (8, 10.0, 0.26502591529736171),
            (8, 50.0, 4.0867589479967458e-8),
            (9, 0.1, 0.9999999743696746), (9, 1.0, 0.9994375026978325),
            (9, 5.0, 0.83430826019340755), (9, 10.0, 0.35048521232336134),
            (9, 50.0, 1.0772382022574716e-7),
            (10, 0.1, 0.99999999750204866), (10, 1.0, 0.99982788437004416),
            (10, 5.0, 0.89117801891415124), (10, 10.0, 0.44049328506521241),
            (10, 50.0, 2.6690834249044956e-7),
        ];
        for (df, stat, want) in grid {
            let a = f64::from(df) / 2.0;
            let x = stat / 2.0;
            assert_close(regularized_gamma_q(a, x), want, 1e-11, &format!("Q df={df} stat={stat}"));
            assert_close(regularized_gamma_p(a, x), 1.0 - want, 1e-9, &format!("P df={df} stat={stat}"));
        }
    }

    #[test]
    fn q_deep_tail_keeps_relative_precision() {
        // exp() of the large negative log-prefactor costs a few digits, so
        // the deep-tail tolerance is looser — still far beyond anything an
        // erf-based route could deliver.
        assert_close(
            regularized_gamma_q(2.0, 921.59 / 2.0),
            3.4972239005070915e-198,
            1e-9,
            "Q(2, 460.795)",
        );
        assert_close(
            regularized_gamma_q(0.5, 6.172133998483676_f64.powi(2) / 2.0) / 2.0,
            3.368718009466383e-10,
            1e-10,
            "normal tail via Q(1/2, z^2/2)/2",
        );
    }

    #[test]
    fn q_underflows_to_zero_far_beyond_f64_range() {
        // true value ~5.8e-717: not representable, must underflow cleanly
        let q = regularized_gamma_q(2.0, 3313.21 / 2.0);
        assert!(q >= 0.0 && q < 1e-300, "got {q:e}");
    }

    #[test]
    fn p_q_are_complementary() {
        for &(a, x) in &[(0.5, 0.3), (1.0, 1.0), (2.5, 7.0), (5.0, 2.0), (3.0, 40.0)] {
            let p = regularized_gamma_p(a, x);
            let q = regularized_gamma_q(a, x);
            assert!((p + q - 1.0).abs() < 1e-12, "P+Q at a={a} x={x}: {}", p + q);
            assert!((0.0..=1.0).contains(&p));
            assert!((0.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn q_boundaries() {
        assert_eq!(regularized_gamma_q(1.5, 0.0), 1.0);
        assert_eq!(regularized_gamma_p(1.5, 0.0), 0.0);
        assert!(regularized_gamma_q(0.5, 800.0) < 1e-300);
    }

    // Independent slow oracle: adaptive Simpson quadrature of the upper
    // incomplete gamma integrand, normalized by closed-form Γ(k/2) values
    // built from Γ(1) = 1 and Γ(1/2) = √π by the recurrence Γ(a+1) = aΓ(a).

    fn gamma_half_integer(a: f64) -> f64 {
        let mut v;
        let mut k;
        if (a - a.round()).abs() < 1e-12 {
            v = 1.0;
            k = 1.0;
        } else {
            v = std::f64::consts::PI.sqrt();
            k = 0.5;
        }
        while k + 1e-9 < a {
            v *= k;
            k += 1.0;
        }
        v
    }

    fn integrand(a: f64, t: f64) -> f64 {
        ((a - 1.0) * t.ln() - t).exp()
    }

    fn simpson(a: f64, lo: f64, hi: f64) -> f64 {
        (hi - lo) / 6.0 * (integrand(a, lo) + 4.0 * integrand(a, (lo + hi) / 2.0) + integrand(a, hi))
    }

    fn adaptive(a: f64, lo: f64, hi: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let mid = (lo + hi) / 2.0;
        let left = simpson(a, lo, mid);
        let right = simpson(a, mid, hi);
        let refined = left + right;
        if depth == 0 || (refined - whole).abs() <= 15.0 * eps {
            refined + (refined - whole) / 15.0
        } else {
            adaptive(a, lo, mid, left, eps / 2.0, depth - 1)
                + adaptive(a, mid, hi, right, eps / 2.0, depth - 1)
        }
    }

    fn oracle_q(a: f64, x: f64) -> f64 {
        // truncate the infinite upper limit once the integrand is dwarfed
        // by what has accumulated
        let mut hi = x.max(a) + 50.0;
        while integrand(a, hi) > 1e-280 {
            hi += 25.0;
        }
        let rough = simpson(a, x, hi).max(f64::MIN_POSITIVE);
        adaptive(a, x, hi, rough, 1e-13 * rough, 48) / gamma_half_integer(a)
    }

    #[test]
    fn q_matches_quadrature_oracle() {
        for df in 1..=10u32 {
            for stat in [0.1, 1.0, 5.0, 10.0, 50.0, 200.0] {
                let a = f64::from(df) / 2.0;
                let x = stat / 2.0;
                let want = oracle_q(a, x);
                assert_close(
                    regularized_gamma_q(a, x),
                    want,
                    1e-8,
                    &format!("oracle df={df} stat={stat}"),
                );
            }
        }
        assert_close(
            regularized_gamma_q(2.0, 460.795),
            oracle_q(2.0, 460.795),
            1e-8,
            "oracle deep tail",
        );
    }
}
