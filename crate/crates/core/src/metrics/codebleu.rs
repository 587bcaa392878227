//! CodeBLEU: n-gram, keyword-weighted n-gram, syntax-subtree and
//! data-flow matching, combined by weights.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::analysis::{dedent, extract_dataflow, parse_recovering, NodeId, SyntaxTree};

const MAX_ORDER: usize = 4;
const NON_KEYWORD_WEIGHT: f64 = 0.2;

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif",
    "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or",
    "pass", "raise", "return", "try", "while", "with", "yield",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuWeights {
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub ast: f64,
    pub dataflow: f64,
}

impl Default for CodeBleuWeights {
    fn default() -> Self {
        CodeBleuWeights {
            ngram: 0.25,
            weighted_ngram: 0.25,
            ast: 0.25,
            dataflow: 0.25,
        }
    }
}

impl CodeBleuWeights {
    pub fn validate(&self) -> Result<(), String> {
        let ws = [self.ngram, self.weighted_ngram, self.ast, self.dataflow];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("weights must be nonnegative".into());
        }
        if (ws.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err("weights must sum to 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuComponents {
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub ast: f64,
    pub dataflow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuScore {
    pub score: f64,
    pub components: CodeBleuComponents,
}

struct Parsed {
    tree: SyntaxTree,
    tokens: Vec<String>,
    valid: bool,
}

fn prepare(code: &str) -> Parsed {
    let tree = parse_recovering(&dedent(code));
    let tokens = tree.leaves().map(|n| n.label.clone()).filter(|l| !l.is_empty()).collect();
    let valid = !tree.has_error();
    Parsed { tree, tokens, valid }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

fn brevity_penalty(cand: usize, reference: usize) -> f64 {
    if cand == 0 {
        0.0
    } else if cand > reference {
        1.0
    } else {
        (1.0 - reference as f64 / cand as f64).exp()
    }
}

/// Geometric mean of the given precisions times the brevity penalty; zero
/// when any precision is zero.
fn combine(precisions: &[f64], cand: usize, reference: usize) -> f64 {
    if precisions.is_empty() || precisions.iter().any(|p| *p <= 0.0) {
        return 0.0;
    }
    let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
    (brevity_penalty(cand, reference) * log_mean.exp()).clamp(0.0, 1.0)
}

fn clipped_precision(cand: &[String], reference: &[String], n: usize) -> f64 {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let total: usize = c.values().sum();
    if total == 0 {
        return 0.0;
    }
    let matched: usize = c.iter().map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0))).sum();
    matched as f64 / total as f64
}

/// Orders run up to the candidate length so that short identical
/// fragments still score 1.
fn orders(cand: &[String]) -> usize {
    cand.len().min(MAX_ORDER)
}

pub fn ngram_match(cand: &[String], reference: &[String]) -> f64 {
    let ps: Vec<f64> = (1..=orders(cand)).map(|n| clipped_precision(cand, reference, n)).collect();
    combine(&ps, cand.len(), reference.len())
}

fn token_weight(t: &str) -> f64 {
    if PYTHON_KEYWORDS.contains(&t) {
        1.0
    } else {
        NON_KEYWORD_WEIGHT
    }
}

fn weighted_unigram_precision(cand: &[String], reference: &[String]) -> f64 {
    let c = ngram_counts(cand, 1);
    let r = ngram_counts(reference, 1);
    let total: f64 = c.iter().map(|(g, k)| token_weight(&g[0]) * *k as f64).sum();
    if total == 0.0 {
        return 0.0;
    }
    let matched: f64 = c
        .iter()
        .map(|(g, k)| token_weight(&g[0]) * (*k).min(r.get(g).copied().unwrap_or(0)) as f64)
        .sum();
    matched / total
}

/// As `ngram_match`, with unigrams weighted by keyword status.
pub fn weighted_ngram_match(cand: &[String], reference: &[String]) -> f64 {
    let n = orders(cand);
    if n == 0 {
        return 0.0;
    }
    let mut ps = vec![weighted_unigram_precision(cand, reference)];
    ps.extend((2..=n).map(|k| clipped_precision(cand, reference, k)));
    combine(&ps, cand.len(), reference.len())
}

fn kind_sexp(tree: &SyntaxTree, id: NodeId, out: &mut String) {
    out.push('(');
    out.push_str(tree.kind(id));
    for &c in tree.children(id) {
        out.push(' ');
        kind_sexp(tree, c, out);
    }
    out.push(')');
}

fn subtrees(tree: &SyntaxTree) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for id in tree.preorder(tree.root()) {
        if tree.children(id).is_empty() {
            continue;
        }
        let mut s = String::new();
        kind_sexp(tree, id, &mut s);
        *out.entry(s).or_insert(0) += 1;
    }
    out
}

/// Share of the reference's internal-node subtrees (by kind shape) found in
/// the candidate, with multiplicity.
pub fn syntax_match(cand: &SyntaxTree, reference: &SyntaxTree) -> f64 {
    let r = subtrees(reference);
    let total: usize = r.values().sum();
    if total == 0 {
        return if subtrees(cand).is_empty() { 1.0 } else { 0.0 };
    }
    let c = subtrees(cand);
    let matched: usize = r.iter().map(|(s, k)| (*k).min(c.get(s).copied().unwrap_or(0))).sum();
    matched as f64 / total as f64
}

/// Edges as (variable, def occurrence, use occurrence) with variables
/// renamed by order of first appearance.
fn normalized_edges(tree: &SyntaxTree) -> BTreeMap<(usize, usize, usize), usize> {
    let graph = extract_dataflow(tree);
    let mut var_ids: HashMap<&str, usize> = HashMap::new();
    let mut occurrence: HashMap<NodeId, (usize, usize)> = HashMap::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for id in tree.preorder(tree.root()) {
        if tree.kind(id) != "identifier" {
            continue;
        }
        let name = tree.node(id).label.as_str();
        let next = var_ids.len();
        let v = *var_ids.entry(name).or_insert(next);
        let k = seen.entry(name).or_insert(0);
        occurrence.insert(id, (v, *k));
        *k += 1;
    }
    let mut out = BTreeMap::new();
    for (d, u) in &graph.edges {
        if let (Some(&(v, kd)), Some(&(_, ku))) = (occurrence.get(d), occurrence.get(u)) {
            *out.entry((v, kd, ku)).or_insert(0) += 1;
        }
    }
    out
}

/// Share of the reference's normalized def-use edges present in the
/// candidate. A reference without edges scores 1 only against a candidate
/// without edges.
pub fn dataflow_match(cand: &SyntaxTree, reference: &SyntaxTree) -> f64 {
    let r = normalized_edges(reference);
    let c = normalized_edges(cand);
    let total: usize = r.values().sum();
    if total == 0 {
        return if c.is_empty() { 1.0 } else { 0.0 };
    }
    let matched: usize = r.iter().map(|(e, k)| (*k).min(c.get(e).copied().unwrap_or(0))).sum();
    matched as f64 / total as f64
}

/// Scores `candidate` against `reference`. An unparseable side zeroes the
/// syntax and data-flow components; an empty candidate scores 0.
pub fn codebleu(candidate: &str, reference: &str, weights: &CodeBleuWeights) -> CodeBleuScore {
    let cand = prepare(candidate);
    let reference = prepare(reference);
    let structural = cand.valid && reference.valid;
    let components = CodeBleuComponents {
        ngram: ngram_match(&cand.tokens, &reference.tokens),
        weighted_ngram: weighted_ngram_match(&cand.tokens, &reference.tokens),
        ast: if structural && !cand.tokens.is_empty() {
            syntax_match(&cand.tree, &reference.tree)
        } else {
            0.0
        },
        dataflow: if structural && !cand.tokens.is_empty() {
            dataflow_match(&cand.tree, &reference.tree)
        } else {
            0.0
        },
    };
    let score = weights.ngram * components.ngram
        + weights.weighted_ngram * components.weighted_ngram
        + weights.ast * components.ast
        + weights.dataflow * components.dataflow;
    CodeBleuScore {
        score: score.clamp(0.0, 1.0),
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        prepare(s).tokens
    }

    #[test]
    fn identity_scores_one() {
        for code in ["x = 1", "def f(a):\n    return a + 1\n", "pass"] {
            let s = codebleu(code, code, &CodeBleuWeights::default());
            assert!((s.score - 1.0).abs() < 1e-9, "{code}: {s:?}");
        }
    }

    #[test]
    fn hand_counted_ngrams() {
        // [x, =, 1] vs [y, =, 2]: unigram 1/3, bigram 0/2.
        assert_eq!(toks("x = 1"), ["x", "=", "1"]);
        assert!((clipped_precision(&toks("x = 1"), &toks("y = 2"), 1) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(clipped_precision(&toks("x = 1"), &toks("y = 2"), 2), 0.0);
        assert_eq!(ngram_match(&toks("x = 1"), &toks("y = 2")), 0.0);
        // [x, =, 1] vs [x, =, 2]: 2/3, 1/2, 0/1.
        assert_eq!(ngram_match(&toks("x = 1"), &toks("x = 2")), 0.0);
        let p = ngram_match(&toks("a = b + c"), &toks("a = b + d"));
        let expected = ((4.0f64 / 5.0).ln() + (3.0f64 / 4.0).ln() + (2.0f64 / 3.0).ln() + (1.0f64 / 2.0).ln()) / 4.0;
        assert!((p - expected.exp()).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalises_short_candidates() {
        let short = ngram_match(&toks("a = b"), &toks("a = b + c"));
        assert!((short - (1.0f64 - 5.0 / 3.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn keywords_outweigh_identifiers() {
        let (c, r) = (toks("return y"), toks("return x"));
        assert!((weighted_unigram_precision(&c, &r) - 1.0 / 1.2).abs() < 1e-12);
        assert!((clipped_precision(&c, &r, 1) - 0.5).abs() < 1e-12);
        let (c, r) = (toks("y"), toks("x"));
        assert_eq!(weighted_unigram_precision(&c, &r), 0.0);
    }

    #[test]
    fn renaming_keeps_structure_components() {
        let a = "def f(items):\n    total = 0\n    for i in items:\n        total += i\n    return total\n";
        let b = "def g(xs):\n    acc = 0\n    for v in xs:\n        acc += v\n    return acc\n";
        let s = codebleu(b, a, &CodeBleuWeights::default());
        assert!((s.components.ast - 1.0).abs() < 1e-12);
        assert!((s.components.dataflow - 1.0).abs() < 1e-12);
        assert!(s.components.ngram < 1.0);
    }

    #[test]
    fn unparseable_candidate_degrades() {
        let s = codebleu("def f(:\n    return x", "def f(x):\n    return x\n", &CodeBleuWeights::default());
        assert_eq!(s.components.ast, 0.0);
        assert_eq!(s.components.dataflow, 0.0);
        assert!(s.components.ngram > 0.0);
        assert_eq!(codebleu("", "x = 1", &CodeBleuWeights::default()).score, 0.0);
    }

    #[test]
    fn weights_validate() {
        assert!(CodeBleuWeights::default().validate().is_ok());
        let w = CodeBleuWeights {
            ngram: 0.5,
            ..CodeBleuWeights::default()
        };
        assert!(w.validate().is_err());
    }
}
