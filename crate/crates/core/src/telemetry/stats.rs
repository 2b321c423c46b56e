//! Two-sample statistics: Wilcoxon rank-sum and signed-rank tests, Welch's
//! t-test and Cohen's d.
//!
//! Rank tests use midranks for ties. Exact p-values enumerate the
//! permutation distribution when the total sample size is at most
//! [`EXACT_MAX_N`]; larger samples use the normal approximation with tie
//! correction and a 0.5 continuity correction. All p-values are two-sided.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Largest total sample size for which the exact distribution is used by default.
pub const EXACT_MAX_N: usize = 12;

/// Largest sample size the exact enumeration accepts at all.
const EXACT_LIMIT: usize = 100;

const CONTINUITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("need at least {need} observations per sample, got {got}")]
    TooSmall { need: usize, got: usize },
    #[error("both samples have zero variance")]
    DegenerateVariance,
    #[error("pooled standard deviation is zero")]
    ZeroPooledSd,
    #[error("samples contain a non-finite value")]
    NonFinite,
    #[error("paired samples differ in length ({0} vs {1})")]
    Unpaired(usize, usize),
    #[error("exact enumeration supports at most {EXACT_LIMIT} observations, got {0}")]
    TooLargeForExact(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Sum of the midranks of the first sample.
    pub w: f64,
    pub p: f64,
    pub method: PMethod,
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedRankTest {
    /// Sum of the midranks of positive differences.
    pub w_plus: f64,
    pub p: f64,
    pub method: PMethod,
    /// Number of non-zero differences.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Midranks (1-based) of `values`, averaging ranks over ties.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end share ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Σ(t³ − t) over tie groups.
fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum()
}

fn normal_two_sided(deviation: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let z = ((deviation.abs() - CONTINUITY).max(0.0)) / sd;
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - std.cdf(z))).min(1.0)
}

struct Pooled {
    w: f64,
    n_a: usize,
    n_b: usize,
    ranks: Vec<f64>,
    values: Vec<f64>,
}

fn pool(a: &[f64], b: &[f64]) -> Result<Pooled, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a)?;
    check_finite(b)?;
    let values: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&values);
    let w = ranks[..a.len()].iter().sum();
    Ok(Pooled {
        w,
        n_a: a.len(),
        n_b: b.len(),
        ranks,
        values,
    })
}

/// Wilcoxon rank-sum test, choosing the exact path for small samples.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumTest, StatsError> {
    if a.len() + b.len() <= EXACT_MAX_N {
        rank_sum_exact(a, b)
    } else {
        rank_sum_normal(a, b)
    }
}

/// Rank-sum test with the p-value from the full permutation distribution.
pub fn rank_sum_exact(a: &[f64], b: &[f64]) -> Result<RankSumTest, StatsError> {
    let pooled = pool(a, b)?;
    let n = pooled.n_a + pooled.n_b;
    if n > EXACT_LIMIT {
        return Err(StatsError::TooLargeForExact(n));
    }
    // Doubled midranks are integers, so the distribution is over integers.
    let doubled: Vec<usize> = pooled
        .ranks
        .iter()
        .map(|r| (2.0 * r).round() as usize)
        .collect();
    let max_sum: usize = doubled.iter().sum();
    let k = pooled.n_a;
    // ways[j][s]: subsets of size j with doubled rank sum s.
    let mut ways = vec![vec![0u128; max_sum + 1]; k + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for j in (1..=k).rev() {
            for s in (r..=max_sum).rev() {
                let add = ways[j - 1][s - r];
                if add != 0 {
                    ways[j][s] += add;
                }
            }
        }
    }
    let center = k * (n + 1); // twice the expected rank sum
    let observed = (2.0 * pooled.w).round() as usize;
    let dev = observed.abs_diff(center);
    let (mut extreme, mut total) = (0u128, 0u128);
    for (s, &count) in ways[k].iter().enumerate() {
        total += count;
        if s.abs_diff(center) >= dev {
            extreme += count;
        }
    }
    Ok(RankSumTest {
        w: pooled.w,
        p: (extreme as f64 / total as f64).min(1.0),
        method: PMethod::Exact,
        n_a: pooled.n_a,
        n_b: pooled.n_b,
    })
}

/// Rank-sum test with the tie-corrected normal approximation.
pub fn rank_sum_normal(a: &[f64], b: &[f64]) -> Result<RankSumTest, StatsError> {
    let pooled = pool(a, b)?;
    let (na, nb) = (pooled.n_a as f64, pooled.n_b as f64);
    let n = na + nb;
    let mean = na * (n + 1.0) / 2.0;
    let ties = if n > 1.0 {
        tie_term(&pooled.values) / (n * (n - 1.0))
    } else {
        0.0
    };
    let var = na * nb / 12.0 * ((n + 1.0) - ties);
    Ok(RankSumTest {
        w: pooled.w,
        p: normal_two_sided(pooled.w - mean, var.max(0.0).sqrt()),
        method: PMethod::Normal,
        n_a: pooled.n_a,
        n_b: pooled.n_b,
    })
}

/// Paired Wilcoxon signed-rank test on `x - y`. Zero differences are dropped.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<SignedRankTest, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Unpaired(x.len(), y.len()));
    }
    check_finite(x)?;
    check_finite(y)?;
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let n = diffs.len();
    if n <= EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut ways = vec![0u128; max_sum + 1];
        ways[0] = 1;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                ways[s] += ways[s - r];
            }
        }
        let dev = ((2.0 * w_plus).round() as usize * 2).abs_diff(max_sum);
        let total: u128 = ways.iter().sum();
        let extreme: u128 = ways
            .iter()
            .enumerate()
            .filter(|(s, _)| (s * 2).abs_diff(max_sum) >= dev)
            .map(|(_, &c)| c)
            .sum();
        Ok(SignedRankTest {
            w_plus,
            p: (extreme as f64 / total as f64).min(1.0),
            method: PMethod::Exact,
            n,
        })
    } else {
        let mean = ranks.iter().sum::<f64>() / 2.0;
        let var = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
        Ok(SignedRankTest {
            w_plus,
            p: normal_two_sided(w_plus - mean, var.sqrt()),
            method: PMethod::Normal,
            n,
        })
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test of `mean(a) - mean(b)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooSmall {
                need: 2,
                got: s.len(),
            });
        }
    }
    check_finite(a)?;
    check_finite(b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (qa, qb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = qa + qb;
    if se2 <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (a.len() as f64 - 1.0) + qb * qb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0);
    Ok(WelchTest { t, df, p })
}

/// `(mean(b) - mean(a)) / pooled SD`, pooling variances with `n - 1` weights.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooSmall {
                need: 2,
                got: s.len(),
            });
        }
    }
    check_finite(a)?;
    check_finite(b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    if pooled <= 0.0 {
        return Err(StatsError::ZeroPooledSd);
    }
    Ok((mb - ma) / pooled)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Enumerates every labelling of the pooled sample by bitmask.
    fn rank_sum_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let ranks: Vec<f64> = pooled
            .iter()
            .map(|&v| {
                let below = pooled.iter().filter(|&&x| x < v).count() as f64;
                let equal = pooled.iter().filter(|&&x| x == v).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect();
        let w: f64 = ranks[..a.len()].iter().sum();
        let expected = a.len() as f64 * (n as f64 + 1.0) / 2.0;
        let (mut extreme, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            total += 1;
            let s: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if (s - expected).abs() >= (w - expected).abs() - 1e-9 {
                extreme += 1;
            }
        }
        (w, extreme as f64 / total as f64)
    }

    fn signed_rank_oracle(d: &[f64]) -> f64 {
        let n = d.len();
        let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
        let ranks = midranks(&abs);
        let total_rank: f64 = ranks.iter().sum();
        let w: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
        let mut extreme = 0u64;
        for mask in 0u32..(1 << n) {
            let s: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            if (s - total_rank / 2.0).abs() >= (w - total_rank / 2.0).abs() - 1e-9 {
                extreme += 1;
            }
        }
        extreme as f64 / (1u64 << n) as f64
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[1., 2., 2., 4., 5.]), vec![1., 2.5, 2.5, 4., 5.]);
        assert_eq!(midranks(&[3., 3., 3.]), vec![2., 2., 2.]);
    }

    #[test]
    fn fully_separated_triples() {
        let r = wilcoxon_rank_sum(&[1., 2., 3.], &[4., 5., 6.]).unwrap();
        assert_eq!(r.w, 6.0);
        assert_eq!(r.method, PMethod::Exact);
        assert!((r.p - 0.1).abs() < 1e-12);
        assert_eq!(rank_sum_oracle(&[1., 2., 3.], &[4., 5., 6.]), (6.0, 0.1));
    }

    #[test]
    fn singletons_cannot_separate() {
        let r = wilcoxon_rank_sum(&[1.], &[2.]).unwrap();
        assert_eq!(r.w, 1.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn identical_multisets() {
        let a = [3., 1., 4., 1., 5.];
        assert!(wilcoxon_rank_sum(&a, &a).unwrap().p >= 0.99);
        let big: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        assert!(wilcoxon_rank_sum(&big, &big).unwrap().p >= 0.99);
    }

    #[test]
    fn empty_sample_errors() {
        assert_eq!(wilcoxon_rank_sum(&[], &[1.]), Err(StatsError::EmptySample));
        assert_eq!(rank_sum_normal(&[1.], &[]), Err(StatsError::EmptySample));
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let na = rng.random_range(1..=6);
            let nb = rng.random_range(1..=6);
            let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..5) as f64).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..5) as f64).collect();
            let r = rank_sum_exact(&a, &b).unwrap();
            let (w, p) = rank_sum_oracle(&a, &b);
            assert!((r.w - w).abs() < 1e-12);
            assert!((r.p - p).abs() < 1e-12, "{a:?} {b:?}: {} vs {p}", r.p);
        }
    }

    #[test]
    fn exact_and_normal_agree_at_six_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let a: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 0.3).collect();
            let exact = rank_sum_exact(&a, &b).unwrap();
            let approx = rank_sum_normal(&a, &b).unwrap();
            assert_eq!(exact.w, approx.w);
            worst = worst.max((exact.p - approx.p).abs());
        }
        assert!(worst <= 0.02, "worst disagreement {worst}");
    }

    #[test]
    fn large_samples_use_normal_path() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (10..30).map(f64::from).collect();
        let r = wilcoxon_rank_sum(&a, &b).unwrap();
        assert_eq!(r.method, PMethod::Normal);
        assert!(r.p < 0.01);
        // Exact is still available past the default split.
        let e = rank_sum_exact(&a, &b).unwrap();
        assert!((e.p - r.p).abs() < 0.01);
    }

    #[test]
    fn signed_rank_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..=10);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let d: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(a, b)| a - b)
                .filter(|d| *d != 0.0)
                .collect();
            match wilcoxon_signed_rank(&x, &y) {
                Ok(r) => assert!((r.p - signed_rank_oracle(&d)).abs() < 1e-12),
                Err(e) => {
                    assert!(d.is_empty());
                    assert_eq!(e, StatsError::EmptySample);
                }
            }
        }
        assert!(matches!(
            wilcoxon_signed_rank(&[1.], &[1., 2.]),
            Err(StatsError::Unpaired(1, 2))
        ));
    }

    #[test]
    fn signed_rank_normal_path() {
        let x: Vec<f64> = (0..30).map(|i| f64::from(i) + 1.5).collect();
        let y: Vec<f64> = (0..30).map(f64::from).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.method, PMethod::Normal);
        assert!(r.p < 1e-4);
    }

    #[test]
    fn welch_identical_samples() {
        let r = welch_t(&[1., 2., 3.], &[1., 2., 3.]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_shifted_samples() {
        // Means 2.5 and 12.5, variances 5/3 each: se = sqrt(5/6), df = 6.
        let r = welch_t(&[1., 2., 3., 4.], &[11., 12., 13., 14.]).unwrap();
        assert!((r.t - (-10.0 / (5.0f64 / 6.0).sqrt())).abs() < 1e-12);
        assert!((r.df - 6.0).abs() < 1e-12);
        assert!(r.p < 0.01);
    }

    #[test]
    fn welch_degenerate() {
        assert_eq!(
            welch_t(&[1., 1., 1.], &[1., 1., 1.]),
            Err(StatsError::DegenerateVariance)
        );
        assert!(matches!(
            welch_t(&[1.], &[1., 2.]),
            Err(StatsError::TooSmall { .. })
        ));
    }

    #[test]
    fn cohens_d_values() {
        assert_eq!(cohens_d(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 0.0);
        assert!((cohens_d(&[2., 4., 6.], &[3., 5., 7.]).unwrap() - 0.5).abs() < 1e-12);
        // Means one pooled SD (= 2) apart.
        assert!((cohens_d(&[2., 4., 6.], &[4., 6., 8.]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            cohens_d(&[1., 1.], &[1., 1.]),
            Err(StatsError::ZeroPooledSd)
        );
    }
}
