//! Significance tests: paired t, Wilcoxon signed-rank, exact sign test,
//! Welch t. All p-values are two-sided.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs (or total samples) used after dropping zero differences.
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided Student-t tail `P(|T| ≥ |t|)` with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Two-sided standard-normal tail.
pub fn normal_two_sided(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var)
}

/// Spread at rounding-noise level relative to the mean counts as none.
fn negligible_variance(mean: f64, var: f64) -> bool {
    var.sqrt() <= 1e-12 * mean.abs()
}

fn paired_diffs(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test sample".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Paired two-sided t test on `a − b`.
///
/// All-zero differences give `t = 0, p = 1`; constant non-zero differences
/// are degenerate.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let d = paired_diffs(a, b)?;
    let n = d.len();
    if n < 2 {
        return Err(Error::Domain("paired t test needs n >= 2".into()));
    }
    let df = (n - 1) as f64;
    let (m, var) = mean_var(&d);
    let (statistic, p_value) = if d.iter().all(|&x| x == 0.0) {
        (0.0, 1.0)
    } else if negligible_variance(m, var) {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    } else {
        let t = m / (var / n as f64).sqrt();
        (t, student_t_two_sided(t, df))
    };
    Ok(TestResult {
        test_name: "paired_t".into(),
        statistic,
        p_value,
        n,
        df: Some(df),
    })
}

/// Two-sample Welch t test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain("Welch test needs n >= 2 per sample".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test sample".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if negligible_variance(ma, va) && negligible_variance(mb, vb) {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    Ok(TestResult {
        test_name: "welch_t".into(),
        statistic: t,
        p_value: student_t_two_sided(t, df),
        n: a.len() + b.len(),
        df: Some(df),
    })
}

/// Average ranks of `|d|` (1-based), ties sharing their mean rank.
fn abs_ranks(d: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Wilcoxon signed-rank test. Zero differences are dropped. Exact null
/// distribution for `n ≤ 25` (DP over doubled ranks, so tied ranks stay
/// exact); normal approximation with tie correction above.
///
/// The statistic is `min(W⁺, W⁻)`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let d: Vec<f64> = paired_diffs(a, b)?.into_iter().filter(|&x| x != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let n = d.len();
    if n < 5 {
        return Err(Error::Domain(format!("Wilcoxon test needs >= 5 non-zero differences, got {n}")));
    }
    let ranks = abs_ranks(&d);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, &x)| x > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let p_value = if n <= WILCOXON_EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max = doubled.iter().sum::<usize>();
        let mut counts = vec![0.0f64; max + 1];
        counts[0] = 1.0;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let w2 = (2.0 * w_plus).round() as usize;
        let all = 2f64.powi(n as i32);
        let le: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let ge: f64 = counts[w2..].iter().sum::<f64>() / all;
        (2.0 * le.min(ge)).min(1.0)
    } else {
        let nf = n as f64;
        let mut tie = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
            tie += (j * j * j - j) as f64;
            i += j;
        }
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
        normal_two_sided((w_plus - mean) / var.sqrt())
    };
    Ok(TestResult {
        test_name: "wilcoxon_signed_rank".into(),
        statistic: w_plus.min(w_minus),
        p_value,
        n,
        df: None,
    })
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `P(X ≤ k)` for `X ~ Binomial(n, 1/2)`. Integer binomials up to
/// `n = 120` (one rounding), log-space terms beyond.
fn binomial_half_tail(n: usize, k: usize) -> f64 {
    if n <= 120 {
        let mut c: u128 = 1;
        let mut sum: u128 = 1;
        for i in 0..k {
            c = c * (n - i) as u128 / (i + 1) as u128;
            sum += c;
        }
        return sum as f64 * 0.5f64.powi(n as i32);
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    (0..=k).map(|i| (ln_choose(n, i) + ln_half_n).exp()).sum()
}

/// Exact two-sided binomial sign test with `p₀ = 1/2`; ties dropped.
/// The statistic is the number of positive differences.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let d = paired_diffs(a, b)?;
    let pos = d.iter().filter(|&&x| x > 0.0).count();
    let neg = d.iter().filter(|&&x| x < 0.0).count();
    let n = pos + neg;
    if n == 0 {
        return Err(Error::Degenerate("all pairs tied".into()));
    }
    let k = pos.min(neg);
    let tail = binomial_half_tail(n, k);
    Ok(TestResult {
        test_name: "sign".into(),
        statistic: pos as f64,
        p_value: (2.0 * tail).min(1.0),
        n,
        df: None,
    })
}

/// Per-comparison level `α / m`.
pub fn bonferroni_alpha(alpha: f64, m: usize) -> Result<f64> {
    if m == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("bonferroni needs alpha in (0,1) and m >= 1, got {alpha}, {m}")));
    }
    Ok(alpha / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn ln_gamma_reference_values() {
        // mpmath.loggamma at 50 digits.
        for (x, want) in [
            (0.5, 0.572_364_942_924_700_087_07),
            (3.7, 1.428_072_326_665_388_129_2),
            (10.25, 13.368_023_671_476_046_295),
            (171.3, 708.114_947_038_996_882_73),
        ] {
            assert_relative_eq!(ln_gamma(x), want, max_relative = 1e-13);
        }
        assert_relative_eq!(ln_gamma(5.0), 24f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn inc_beta_reference_values() {
        // mpmath.betainc(..., regularized=True) at 50 digits.
        assert_relative_eq!(inc_beta(2.5, 4.0, 0.3), 0.352_197_585_906_767_213_88, max_relative = 1e-10);
        assert_relative_eq!(inc_beta(0.5, 10.0, 0.9), 0.999_999_999_981_519_726_26, max_relative = 1e-10);
        assert_relative_eq!(inc_beta(30.0, 0.5, 0.01), 1.030_781_546_620_913_131e-61, max_relative = 1e-10);
        assert_relative_eq!(inc_beta(100.0, 100.0, 0.5), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn student_t_agrees_with_statrs() {
        for df in [1.0, 2.5, 9.0, 30.0, 200.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for t in [0.1, 0.7, 1.96, 3.3, 8.0] {
                let want = 2.0 * (1.0 - dist.cdf(t));
                assert_relative_eq!(student_t_two_sided(t, df), want, max_relative = 1e-8, epsilon = 1e-14);
            }
        }
    }

    const A10: [f64; 10] = [0.912, 0.887, 0.934, 0.901, 0.876, 0.945, 0.899, 0.921, 0.908, 0.893];
    const B10: [f64; 10] = [0.897, 0.880, 0.915, 0.899, 0.861, 0.930, 0.902, 0.905, 0.894, 0.889];

    #[test]
    fn paired_t_reference() {
        let r = paired_t_test(&A10, &B10).unwrap();
        // mpmath at 50 digits on the decimal inputs.
        assert_relative_eq!(r.statistic, 4.482_832_654_077_009_452_2, max_relative = 1e-10);
        assert_relative_eq!(r.p_value, 0.001_526_183_247_178_488_762_4, max_relative = 1e-8);
        assert_eq!(r.df, Some(9.0));
    }

    #[test]
    fn paired_t_trivial_and_degenerate() {
        let r = paired_t_test(&A10, &A10).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let shifted: Vec<f64> = A10.iter().map(|v| v + 0.5).collect();
        assert!(matches!(paired_t_test(&shifted, &A10), Err(Error::Degenerate(_))));
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn paired_t_p_falls_with_shift() {
        let noise = [0.01, -0.02, 0.015, 0.0, -0.01, 0.005, 0.02, -0.015];
        let mut last = 1.0;
        for shift in [0.001, 0.005, 0.01, 0.02, 0.05] {
            let a: Vec<f64> = noise.iter().map(|e| shift + e).collect();
            let p = paired_t_test(&a, &[0.0; 8]).unwrap().p_value;
            assert!(p < last, "shift {shift}: {p} !< {last}");
            last = p;
        }
    }

    #[test]
    fn welch_reference_and_limits() {
        let a = [1.2, 2.3, 1.9, 2.8, 2.1, 1.7, 2.5];
        let b = [2.9, 3.4, 2.2, 3.8, 3.1, 2.7];
        let r = welch_t_test(&a, &b).unwrap();
        assert_relative_eq!(r.statistic, -3.117_183_755_300_399_594_3, max_relative = 1e-10);
        assert_relative_eq!(r.df.unwrap(), 10.516_699_892_403_891_215, max_relative = 1e-10);
        assert_relative_eq!(r.p_value, 0.010_310_442_866_098_434_702, max_relative = 1e-8);

        assert_eq!(welch_t_test(&a, &a).unwrap().p_value, 1.0);
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());

        // Equal sizes and variances: df = n1 + n2 − 2.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v + 10.0).collect();
        assert!((welch_t_test(&x, &y).unwrap().df.unwrap() - 8.0).abs() < 1e-6);
    }

    #[test]
    fn wilcoxon_examples() {
        let a = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0];
        assert_eq!(wilcoxon_signed_rank(&a, &[0.0; 6]).unwrap().p_value, 1.0);
        let pos = [0.3, 1.1, 0.2, 0.7, 2.0, 0.05];
        assert_eq!(wilcoxon_signed_rank(&pos, &[0.0; 6]).unwrap().p_value, 0.031_25);
        assert!(matches!(wilcoxon_signed_rank(&[1.0; 6], &[1.0; 6]), Err(Error::Degenerate(_))));
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, 0.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn wilcoxon_twelve_pair_fixture() {
        // One zero difference dropped (n = 11); tied |d| get averaged ranks.
        // Brute force over all 2¹¹ sign patterns: W⁺ = 56, p = 0.0380859375.
        let d = [0.6, -0.2, 1.2, -0.1, 0.8, 0.7, 0.0, 0.9, -0.2, 0.8, 0.8, -0.4];
        let r = wilcoxon_signed_rank(&d, &[0.0; 12]).unwrap();
        assert_eq!(r.n, 11);
        assert_eq!(r.statistic, 10.0);
        assert_eq!(r.p_value, 0.038_085_937_5);
    }

    #[test]
    fn wilcoxon_large_sample_uses_normal() {
        let d: Vec<f64> = (1..=40).map(|i| if i % 4 == 0 { -(i as f64) } else { i as f64 }).collect();
        let r = wilcoxon_signed_rank(&d, &[0.0; 40]).unwrap();
        // W⁺ = 820 − 220 = 600; mean 410; var 40·41·81/24 = 5535.
        let z = (600.0 - 410.0) / 5535f64.sqrt();
        assert_relative_eq!(r.p_value, normal_two_sided(z), max_relative = 1e-14);
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn sign_test_examples() {
        let r = sign_test(&[1.0; 24], &[0.0; 24]).unwrap();
        assert_eq!(r.p_value, 0.5f64.powi(23));
        assert!(r.p_value < 1e-6);
        assert_eq!(sign_test(&[1.0, 1.0, 1.0, -1.0, -1.0, -1.0], &[0.0; 6]).unwrap().p_value, 1.0);
        assert_relative_eq!(
            sign_test(&[1.0, 1.0, 1.0, 1.0, 1.0, -1.0], &[0.0; 6]).unwrap().p_value,
            0.218_75,
            max_relative = 1e-12
        );
        assert!(sign_test(&[2.0; 3], &[2.0; 3]).is_err());
    }

    #[test]
    fn binomial_tail_both_sides_of_integer_limit() {
        // mpmath on exact integer sums.
        assert_relative_eq!(binomial_half_tail(120, 50), 0.041_203_739_663_763_277, max_relative = 1e-14);
        assert_relative_eq!(binomial_half_tail(121, 50), 0.034_296_819_060_307_191, max_relative = 1e-11);
        assert_relative_eq!(binomial_half_tail(300, 130), 0.012_090_991_236_631_381, max_relative = 1e-11);
    }

    #[test]
    fn bonferroni() {
        assert_eq!(bonferroni_alpha(0.05, 5).unwrap(), 0.01);
        assert!(bonferroni_alpha(0.05, 0).is_err());
    }

    /// Brute-force exact Wilcoxon p by enumerating sign patterns.
    fn brute_wilcoxon(d: &[f64]) -> f64 {
        let d: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
        let r = abs_ranks(&d);
        let w: f64 = r.iter().zip(&d).filter(|(_, &x)| x > 0.0).map(|(r, _)| r).sum();
        let n = d.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| r[k]).sum();
            if s <= w {
                le += 1;
            }
            if s >= w {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    proptest! {
        #[test]
        fn paired_t_antisymmetric(a in proptest::collection::vec(-5.0f64..5.0, 3..20), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
            let ab = paired_t_test(&a, &b).unwrap();
            let ba = paired_t_test(&b, &a).unwrap();
            prop_assert_eq!(ab.statistic, -ba.statistic);
            prop_assert_eq!(ab.p_value, ba.p_value);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn exact_wilcoxon_matches_enumeration(d in proptest::collection::vec(-4i32..=4, 5..=12)) {
            let d: Vec<f64> = d.into_iter().map(f64::from).collect();
            prop_assume!(d.iter().filter(|&&x| x != 0.0).count() >= 5);
            let r = wilcoxon_signed_rank(&d, &vec![0.0; d.len()]).unwrap();
            prop_assert!((r.p_value - brute_wilcoxon(&d)).abs() < 1e-12);
        }

        #[test]
        fn sign_test_matches_enumeration(pos in 0usize..=12, neg in 0usize..=12) {
            prop_assume!(pos + neg > 0);
            let mut a = vec![1.0; pos];
            a.extend(vec![-1.0; neg]);
            let n = pos + neg;
            let k = pos.min(neg);
            let count = (0u64..(1 << n)).filter(|m| (m.count_ones() as usize) <= k).count() as f64;
            let want = (2.0 * count / (1u64 << n) as f64).min(1.0);
            let got = sign_test(&a, &vec![0.0; n]).unwrap().p_value;
            prop_assert!((got - want).abs() < 1e-12);
        }
    }
}
