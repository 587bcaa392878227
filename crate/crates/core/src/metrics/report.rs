use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{error_distribution, mann_whitney_u, pass_at_k, size_binned_pass1, CodeBleuScore, CodeBleuWeights, MannWhitney, SampleSetSummary, SizeBin};
use crate::harness::{ErrorCategory, TestOutcome};
use crate::prompt::StrategyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub index: usize,
    pub code: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TestOutcome>,
    /// Set when the adaptation could not be assembled into the class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembly_error: Option<(ErrorCategory, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebleu: Option<CodeBleuScore>,
    /// Edits from the retrieved snippet to this adaptation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_size: Option<usize>,
}

impl SampleEvaluation {
    pub fn error_categories(&self) -> Vec<ErrorCategory> {
        match (&self.assembly_error, &self.outcome) {
            (Some((c, _)), _) => vec![*c],
            (None, Some(o)) => o.error_categories(),
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case_id: String,
    pub strategy: StrategyKind,
    pub samples: Vec<SampleEvaluation>,
    /// Edits from the retrieved snippet to the canonical solution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    AllPass,
    SomePass,
    AllFail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub n: u32,
    pub c: u32,
    pub pass_at_1: f64,
    pub pass_at_5: Option<f64>,
    pub codebleu: f64,
    pub adaptation_size_required: Option<usize>,
    /// Mean over samples whose adaptation parsed.
    pub adaptation_size_actual: Option<f64>,
    pub bucket: Bucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub cases: usize,
    pub mean_pass_at_1: f64,
    pub mean_pass_at_5: Option<f64>,
    pub mean_codebleu: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buckets {
    pub all_pass: usize,
    pub some_pass: usize,
    pub all_fail: usize,
}

/// Required vs mean actual adaptation size over cases having both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeComparison {
    pub pairs: usize,
    pub mean_required: f64,
    pub mean_actual: f64,
    pub test: MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub strategy: Option<StrategyKind>,
    pub weights: CodeBleuWeights,
    pub aggregates: Aggregates,
    pub buckets: Buckets,
    pub error_histogram: BTreeMap<ErrorCategory, usize>,
    pub error_total: usize,
    pub size_bins: Vec<SizeBin>,
    pub size_comparison: Option<SizeComparison>,
    pub cases: Vec<CaseMetrics>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn case_metrics(case: &CaseEvaluation) -> CaseMetrics {
    let n = case.samples.len() as u32;
    let c = case.samples.iter().filter(|s| s.passed).count() as u32;
    let summary = SampleSetSummary { n, c };
    let pass_at_1 = pass_at_k(summary, 1).unwrap_or(0.0);
    let pass_at_5 = (n >= 5).then(|| pass_at_k(summary, 5).expect("k <= n"));
    let bucket = match c {
        0 => Bucket::AllFail,
        c if c == n => Bucket::AllPass,
        _ => Bucket::SomePass,
    };
    CaseMetrics {
        case_id: case.case_id.clone(),
        n,
        c,
        pass_at_1,
        pass_at_5,
        codebleu: mean(case.samples.iter().map(|s| s.codebleu.map_or(0.0, |b| b.score))).unwrap_or(0.0),
        adaptation_size_required: case.required_size,
        adaptation_size_actual: mean(case.samples.iter().filter_map(|s| s.actual_size.map(|x| x as f64))),
        bucket,
    }
}

/// Aggregates evaluated cases. Output depends only on the input, so equal
/// inputs serialize to identical bytes.
pub fn build_report(cases: &[CaseEvaluation], weights: CodeBleuWeights) -> MetricReport {
    let rows: Vec<CaseMetrics> = cases.iter().map(case_metrics).collect();
    let mut buckets = Buckets::default();
    for r in &rows {
        match r.bucket {
            Bucket::AllPass => buckets.all_pass += 1,
            Bucket::SomePass => buckets.some_pass += 1,
            Bucket::AllFail => buckets.all_fail += 1,
        }
    }
    let mean_pass_at_5 = if rows.iter().all(|r| r.pass_at_5.is_some()) {
        mean(rows.iter().filter_map(|r| r.pass_at_5))
    } else {
        None
    };
    let error_histogram = error_distribution(cases.iter().flat_map(|c| c.samples.iter().flat_map(|s| s.error_categories())));
    let sized: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.adaptation_size_required.map(|s| (s, r.pass_at_1))).collect();
    let paired: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.adaptation_size_required? as f64, r.adaptation_size_actual?)))
        .collect();
    let size_comparison = (!paired.is_empty()).then(|| {
        let req: Vec<f64> = paired.iter().map(|p| p.0).collect();
        let act: Vec<f64> = paired.iter().map(|p| p.1).collect();
        SizeComparison {
            pairs: paired.len(),
            mean_required: mean(req.iter().copied()).expect("non-empty"),
            mean_actual: mean(act.iter().copied()).expect("non-empty"),
            test: mann_whitney_u(&req, &act).expect("non-empty finite samples"),
        }
    });
    MetricReport {
        strategy: cases.first().map(|c| c.strategy),
        weights,
        aggregates: Aggregates {
            cases: rows.len(),
            mean_pass_at_1: mean(rows.iter().map(|r| r.pass_at_1)).unwrap_or(0.0),
            mean_pass_at_5,
            mean_codebleu: mean(rows.iter().map(|r| r.codebleu)).unwrap_or(0.0),
        },
        buckets,
        error_total: error_histogram.values().sum(),
        error_histogram,
        size_bins: size_binned_pass1(&sized),
        size_comparison,
        cases: rows,
    }
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per case.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "case_id",
            "n",
            "c",
            "pass_at_1",
            "pass_at_5",
            "codebleu",
            "adaptation_size_required",
            "adaptation_size_actual",
            "bucket",
        ])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.cases {
            let bucket = serde_json::to_value(r.bucket).expect("bucket serializes");
            w.write_record([
                r.case_id.clone(),
                r.n.to_string(),
                r.c.to_string(),
                r.pass_at_1.to_string(),
                opt(r.pass_at_5.map(|v| v.to_string())),
                r.codebleu.to_string(),
                opt(r.adaptation_size_required.map(|v| v.to_string())),
                opt(r.adaptation_size_actual.map(|v| v.to_string())),
                bucket.as_str().unwrap_or_default().to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
