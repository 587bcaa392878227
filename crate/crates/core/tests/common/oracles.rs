//! Independent oracles and random program generators.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use snipadapt_core::analysis::{parse_source, NodeId, SyntaxTree};

/// Fraction of k-subsets of n samples (the first c correct) containing a
/// correct one, by enumeration.
pub fn pass_at_k_by_enumeration(n: u32, c: u32, k: u32) -> f64 {
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() != k {
            continue;
        }
        total += 1;
        if mask & ((1 << c) - 1) != 0 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

/// Structural equality on kind, label and ordered children.
pub fn same_tree(a: &SyntaxTree, x: NodeId, b: &SyntaxTree, y: NodeId) -> bool {
    let (p, q) = (a.node(x), b.node(y));
    p.kind == q.kind
        && p.label == q.label
        && p.children.len() == q.children.len()
        && p.children.iter().zip(&q.children).all(|(&c, &d)| same_tree(a, c, b, d))
}

fn random_statement(rng: &mut StdRng) -> String {
    const VARS: [&str; 5] = ["a", "b", "c", "x", "y"];
    const OPS: [&str; 3] = ["+", "-", "*"];
    let v = |rng: &mut StdRng| VARS[rng.random_range(0..VARS.len())];
    let n = |rng: &mut StdRng| rng.random_range(0..10).to_string();
    match rng.random_range(0..6) {
        0 => format!("{} = {}", v(rng), n(rng)),
        1 => format!("{} = {} {} {}", v(rng), v(rng), OPS[rng.random_range(0..3)], n(rng)),
        2 => format!("return {}", v(rng)),
        3 => format!("if {}:\n    {} = {}", v(rng), v(rng), n(rng)),
        4 => format!("f({}, {})", v(rng), n(rng)),
        _ => format!("for {} in {}:\n    pass", v(rng), v(rng)),
    }
}

/// A parseable program of at most 30 nodes.
pub fn random_program(rng: &mut StdRng) -> (String, SyntaxTree) {
    loop {
        let k = rng.random_range(1..=3);
        let text = (0..k).map(|_| random_statement(rng)).collect::<Vec<_>>().join("\n") + "\n";
        if let Ok(tree) = parse_source(&text) {
            if tree.len() <= 30 {
                return (text, tree);
            }
        }
    }
}

/// Fifty snippets: the fixture solutions, snippets and faulty adaptations,
/// padded with random functions.
pub fn corpus() -> Vec<String> {
    let mut out = Vec::new();
    for case in super::load_cases() {
        out.push(case.canonical_solution.clone());
        out.push(super::snippet_for(&case.method_name).to_string());
        out.push(super::bad_code(&case.method_name).to_string());
    }
    let mut rng = StdRng::seed_from_u64(11);
    while out.len() < 50 {
        let (body, _) = random_program(&mut rng);
        let indented: String = body.lines().map(|l| format!("    {l}\n")).collect();
        out.push(format!("def f{}(a, b):\n{indented}", out.len()));
    }
    out
}
