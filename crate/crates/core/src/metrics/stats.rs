use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::MetricError;

/// Largest per-side size for which the exact null distribution is
/// enumerated.
pub const EXACT_LIMIT: usize = 8;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values`.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Visits every `k`-subset of `0..n`.
fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// U = min(U1, U2) with midranks for ties; exact two-sided p when both
/// samples have at most `EXACT_LIMIT` values, otherwise the normal
/// approximation with tie and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let u = u1.min(u2);
    let mean = (n1 * n2) as f64 / 2.0;

    if n1 <= EXACT_LIMIT && n2 <= EXACT_LIMIT {
        let observed = (u1 - mean).abs();
        let base = (n1 * (n1 + 1)) as f64 / 2.0;
        let (mut extreme, mut total) = (0u64, 0u64);
        for_each_subset(n1 + n2, n1, &mut |idx| {
            let r: f64 = idx.iter().map(|&i| ranks[i]).sum();
            if (r - base - mean).abs() >= observed - EPS {
                extreme += 1;
            }
            total += 1;
        });
        return Ok(MannWhitney {
            u,
            p_two_sided: (extreme as f64 / total as f64).min(1.0),
            exact: true,
        });
    }

    let n = (n1 + n2) as f64;
    let mut ties: HashMap<u64, usize> = HashMap::new();
    for v in &pooled {
        *ties.entry(v.to_bits()).or_insert(0) += 1;
    }
    let tie_term: f64 = ties.values().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let variance = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term);
    let p = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u1 - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p_two_sided: p,
        exact: false,
    })
}

/// Cohen's kappa of two label sequences. Returns 1 when chance agreement
/// is already total.
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::EmptySample);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let p_o = agree / n;
    let mut ma: HashMap<&T, usize> = HashMap::new();
    let mut mb: HashMap<&T, usize> = HashMap::new();
    for x in a {
        *ma.entry(x).or_insert(0) += 1;
    }
    for y in b {
        *mb.entry(y).or_insert(0) += 1;
    }
    let chance: usize = ma.iter().map(|(k, &ca)| ca * mb.get(k).copied().unwrap_or(0)).sum();
    let p_e = chance as f64 / (n * n);
    if (1.0 - p_e).abs() < EPS {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn subsets_are_enumerated_once() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, &mut |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut count = 0;
        for_each_subset(3, 3, &mut |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn spec_values() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p_two_sided - 2.0 / 6.0).abs() < 1e-12);
        let r = mann_whitney_u(&[1.0], &[2.0]).unwrap();
        assert_eq!((r.u, r.p_two_sided), (0.0, 1.0));
        let same = [1.0, 2.0, 3.0];
        assert_eq!(mann_whitney_u(&same, &same).unwrap().u, 4.5);
    }

    #[test]
    fn normal_approximation_for_large_samples() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (10..30).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(!r.exact);
        // scipy.stats.mannwhitneyu(a, b, method="asymptotic").pvalue
        assert_eq!(r.u, 50.0);
        assert!((r.p_two_sided / 5.2125496206037515e-05 - 1.0).abs() < 1e-9, "{}", r.p_two_sided);
    }

    #[test]
    fn kappa_values() {
        assert_eq!(cohens_kappa(&["x", "y", "x"], &["x", "y", "x"]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&["x", "x", "y", "y"], &["x", "y", "x", "y"]).unwrap(), 0.0);
        assert_eq!(cohens_kappa(&["x", "y"], &["y", "x"]).unwrap(), -1.0);
        assert_eq!(cohens_kappa(&["x", "x"], &["x", "x"]).unwrap(), 1.0);
        assert!(cohens_kappa(&["x"], &["x", "y"]).is_err());
        assert!(cohens_kappa::<&str>(&[], &[]).is_err());
    }
}
