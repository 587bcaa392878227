mod common;

use proptest::prelude::*;
use common::oracles::{corpus, pass_at_k_by_enumeration, random_program, same_tree};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use snipadapt_core::analysis::{apply_script, tree_edit_distance};
use snipadapt_core::metrics::{codebleu, cohens_kappa, mann_whitney_u, pass_at_k, CodeBleuWeights, SampleSetSummary};

#[test]
fn pass_at_k_matches_enumeration_exactly() {
    let started = std::time::Instant::now();
    for n in 1..=5 {
        for c in 0..=n {
            for k in 1..=n {
                let got = pass_at_k(SampleSetSummary { n, c }, k).unwrap();
                assert_eq!(got, pass_at_k_by_enumeration(n, c, k), "n={n} c={c} k={k}");
            }
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn edit_scripts_reproduce_their_targets() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..100 {
        let (sa, a) = random_program(&mut rng);
        let (sb, b) = random_program(&mut rng);
        let script = tree_edit_distance(&a, &b);
        let out = apply_script(&a, &script).unwrap_or_else(|e| panic!("{sa:?} -> {sb:?}: {e}"));
        assert!(same_tree(&out, out.root(), &b, b.root()), "{sa:?} -> {sb:?}");
        assert_eq!(tree_edit_distance(&a, &a).size(), 0);
        assert_eq!(tree_edit_distance(&b, &b).size(), 0);
    }
}

#[test]
fn codebleu_of_identical_code_is_one() {
    let w = CodeBleuWeights::default();
    let corpus = corpus();
    assert_eq!(corpus.len(), 50);
    for code in &corpus {
        let s = codebleu(code, code, &w);
        assert!((s.score - 1.0).abs() <= 1e-9, "{code:?}: {s:?}");
    }
}

#[test]
fn codebleu_components_stay_in_unit_interval() {
    let w = CodeBleuWeights::default();
    let corpus = corpus();
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..200 {
        let a = &corpus[rng.random_range(0..corpus.len())];
        let b = &corpus[rng.random_range(0..corpus.len())];
        let s = codebleu(a, b, &w);
        let c = s.components;
        for v in [s.score, c.ngram, c.weighted_ngram, c.ast, c.dataflow] {
            assert!((0.0..=1.0).contains(&v), "{a:?} vs {b:?}: {s:?}");
        }
    }
}

#[test]
fn unparseable_candidate_loses_structural_components() {
    let reference = common::load_cases()[0].canonical_solution.clone();
    let broken = reference.replacen("):", ":", 1);
    let s = codebleu(&broken, &reference, &CodeBleuWeights::default());
    assert_eq!(s.components.ast, 0.0);
    assert_eq!(s.components.dataflow, 0.0);
    assert!(s.components.ngram > 0.5);
    assert!((s.score - 0.25 * (s.components.ngram + s.components.weighted_ngram)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mann_whitney_is_symmetric(
        a in prop::collection::vec(0i32..20, 1..12),
        b in prop::collection::vec(0i32..20, 1..12),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert_eq!(ab.u, ba.u);
        prop_assert_eq!(ab.exact, ba.exact);
        prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
        prop_assert!(ab.p_two_sided > 0.0 && ab.p_two_sided <= 1.0);
        prop_assert!(ab.u >= 0.0 && ab.u <= (a.len() * b.len()) as f64 / 2.0);
    }

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((0u8..3, 0u8..3), 1..30)) {
        let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let ab = cohens_kappa(&a, &b).unwrap();
        prop_assert_eq!(ab, cohens_kappa(&b, &a).unwrap());
        prop_assert!(ab <= 1.0);
        prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }
}
