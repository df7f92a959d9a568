//! Pearson and Spearman correlation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Correlation value with a flag for constant inputs, which yield 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

impl Correlation {
    const DEGENERATE: Correlation = Correlation {
        value: 0.0,
        degenerate: true,
    };
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::dim(format!("need at least 3 samples, got {}", a.len())));
    }
    Ok(pearson_unchecked(a, b))
}

/// Two-pass Pearson correlation on equal-length slices.
pub(crate) fn pearson_unchecked(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    if !(denom > 0.0) || !denom.is_finite() {
        return Correlation::DEGENERATE;
    }
    Correlation {
        value: (sab / denom).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Fractional ranks starting at 1; tied values share their mean rank.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]).then(i.cmp(&j)));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    /// One-sided permutation p-value in the direction of the observed sign.
    pub p_perm: f64,
    /// Two-sided Student-t approximation.
    pub p_t: f64,
    pub n: usize,
    pub n_perm: usize,
    pub degenerate: bool,
}

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

pub fn spearman(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<SpearmanResult> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 4 {
        return Err(Error::dim(format!("Spearman needs at least 4 pairs, got {n}")));
    }
    let ra = fractional_ranks(a);
    let mut rb = fractional_ranks(b);
    let obs = pearson_unchecked(&ra, &rb);
    if obs.degenerate {
        return Ok(SpearmanResult {
            rho: 0.0,
            p_perm: 1.0,
            p_t: 1.0,
            n,
            n_perm,
            degenerate: true,
        });
    }
    let rho = obs.value;
    let direction = if rho < 0.0 { -1.0 } else { 1.0 };

    // Shuffles are drawn sequentially from one stream so the p-value does
    // not depend on the thread count.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let eps = 1e-12;
    for _ in 0..n_perm {
        rb.shuffle(&mut rng);
        let r = pearson_unchecked(&ra, &rb).value;
        if direction * r >= direction * rho - eps {
            hits += 1;
        }
    }
    let p_perm = (hits + 1) as f64 / (n_perm + 1) as f64;

    Ok(SpearmanResult {
        rho,
        p_perm,
        p_t: t_test_p(rho, n),
        n,
        n_perm,
        degenerate: false,
    })
}

fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r * (df / denom).sqrt();
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0),
        Err(_) => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn pearson_identity_and_reversal() {
        let a = [1.0, 2.0, 3.0];
        assert!((pearson(&a, &a).unwrap().value - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[3.0, 2.0, 1.0]).unwrap().value + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_matches_textbook_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let a: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        // Raw-sum formula: (nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²))
        let n = 50.0;
        let sx: f64 = a.iter().sum();
        let sy: f64 = b.iter().sum();
        let sxy: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let sxx: f64 = a.iter().map(|x| x * x).sum();
        let syy: f64 = b.iter().map(|y| y * y).sum();
        let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
        assert!((pearson(&a, &b).unwrap().value - oracle).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_is_flagged() {
        let c = pearson(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(fractional_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_hand_ranked() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 1.0, 4.0, 3.0, 5.0];
        // 1 − 6Σd²/(n(n²−1)) with d = (−1, 1, −1, 1, 0) gives 0.8
        let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        let oracle = 1.0 - 6.0 * d2 / (5.0 * 24.0);
        assert!((oracle - 0.8).abs() < 1e-15);
        let r = spearman(&a, &b, 200, 1).unwrap();
        assert!((r.rho - oracle).abs() < 1e-12);
    }

    #[test]
    fn spearman_monotone() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|x| x.exp()).collect();
        let r = spearman(&a, &b, 999, 7).unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(r.p_perm <= 1.0 / 1000.0 + 1e-15);
        assert_eq!(r.p_t, 0.0);

        let rev: Vec<f64> = a.iter().rev().cloned().collect();
        let r = spearman(&a, &rev, 99, 7).unwrap();
        assert_eq!(r.rho, -1.0);
        assert!(r.p_perm <= 0.01 + 1e-15);
    }

    #[test]
    fn spearman_all_tied_is_flagged() {
        let r = spearman(&[1.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 10, 0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.rho, 0.0);
    }

    #[test]
    fn spearman_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..15).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..15).map(|_| rng.sample(StandardNormal)).collect();
        let r1 = spearman(&a, &b, 500, 9).unwrap();
        let r2 = spearman(&a, &b, 500, 9).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn t_approximation_reference_value() {
        // r = 0.5, n = 12: t = 0.5·sqrt(10/0.75) = 1.8257; two-sided p ≈ 0.0979.
        let p = t_test_p(0.5, 12);
        assert!((p - 0.0979).abs() < 5e-4, "{p}");
    }
}
