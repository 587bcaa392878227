//! pass@k, CodeBLEU, adaptation-size analysis, error distributions and the
//! two statistical tests.

mod codebleu;
mod report;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::ErrorCategory;

pub use codebleu::{codebleu, dataflow_match, ngram_match, syntax_match, weighted_ngram_match, CodeBleuComponents, CodeBleuScore, CodeBleuWeights};
pub use report::{build_report, Aggregates, Buckets, CaseEvaluation, CaseMetrics, MetricReport, SampleEvaluation, SizeComparison};
pub use stats::{cohens_kappa, mann_whitney_u, MannWhitney, EXACT_LIMIT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("k = {k} exceeds n = {n}")]
    KTooLarge { n: u32, k: u32 },
    #[error("invalid sample summary: n = {n}, c = {c}")]
    InvalidSummary { n: u32, c: u32 },
    #[error("k must be positive")]
    ZeroK,
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSetSummary {
    pub n: u32,
    pub c: u32,
}

/// C(n, k) exactly; zero when k > n.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// 1 - C(n-c, k) / C(n, k), from exact integer counts.
pub fn pass_at_k(summary: SampleSetSummary, k: u32) -> Result<f64, MetricError> {
    let SampleSetSummary { n, c } = summary;
    if n == 0 || c > n {
        return Err(MetricError::InvalidSummary { n, c });
    }
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if k > n {
        return Err(MetricError::KTooLarge { n, k });
    }
    let total = binomial(n, k);
    let failing = binomial(n - c, k);
    Ok((total - failing) as f64 / total as f64)
}

/// Counts per category; every recorded error instance counts once.
pub fn error_distribution<I>(categories: I) -> BTreeMap<ErrorCategory, usize>
where
    I: IntoIterator<Item = ErrorCategory>,
{
    let mut out = BTreeMap::new();
    for c in categories {
        *out.entry(c).or_insert(0) += 1;
    }
    out
}

pub const BIN_WIDTH: usize = 10;
pub const BIN_COUNT: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBin {
    pub lower: usize,
    /// Exclusive; `None` for the open last bin.
    pub upper: Option<usize>,
    pub count: usize,
    pub mean_pass_at_1: Option<f64>,
}

/// Seven bins of width ten, the last one open: [0,10), ..., [60, inf).
pub fn size_binned_pass1(per_case: &[(usize, f64)]) -> Vec<SizeBin> {
    let mut sums = [0.0f64; BIN_COUNT];
    let mut counts = [0usize; BIN_COUNT];
    for &(size, p) in per_case {
        let b = (size / BIN_WIDTH).min(BIN_COUNT - 1);
        sums[b] += p;
        counts[b] += 1;
    }
    (0..BIN_COUNT)
        .map(|b| SizeBin {
            lower: b * BIN_WIDTH,
            upper: (b + 1 < BIN_COUNT).then_some((b + 1) * BIN_WIDTH),
            count: counts[b],
            mean_pass_at_1: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32, c: u32, k: u32) -> f64 {
        pass_at_k(SampleSetSummary { n, c }, k).unwrap()
    }

    #[test]
    fn pass_at_k_spec_values() {
        assert_eq!(p(5, 5, 1), 1.0);
        assert_eq!(p(5, 2, 1), 0.4);
        assert_eq!(p(5, 2, 5), 1.0);
        assert_eq!(p(5, 0, 5), 0.0);
    }

    #[test]
    fn pass_at_k_errors() {
        let s = SampleSetSummary { n: 3, c: 1 };
        assert_eq!(pass_at_k(s, 4), Err(MetricError::KTooLarge { n: 3, k: 4 }));
        assert_eq!(pass_at_k(s, 0), Err(MetricError::ZeroK));
        assert!(pass_at_k(SampleSetSummary { n: 2, c: 3 }, 1).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }

    #[test]
    fn bins() {
        let bins = size_binned_pass1(&[(5, 1.0), (15, 0.0), (60, 0.5), (250, 1.0)]);
        assert_eq!(bins.len(), 7);
        assert_eq!(bins[0].mean_pass_at_1, Some(1.0));
        assert_eq!(bins[1].mean_pass_at_1, Some(0.0));
        assert_eq!((bins[6].count, bins[6].mean_pass_at_1, bins[6].upper), (2, Some(0.75), None));
        assert_eq!((bins[3].count, bins[3].mean_pass_at_1), (0, None));
        assert_eq!(bins[5].upper, Some(60));
    }

    #[test]
    fn histogram_counts() {
        use ErrorCategory::*;
        let h = error_distribution([AssertionError, NameError, AssertionError, AssertionError]);
        assert_eq!(h, BTreeMap::from([(AssertionError, 3), (NameError, 1)]));
        assert!(error_distribution([]).is_empty());
    }
}
