mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use snipadapt_core::config::LayeredSettings;
use snipadapt_core::conversation::Turn;
use snipadapt_core::gateway::{ChatProvider, Gateway, GatewayMode, SamplingConfig, ScriptedProvider};
use snipadapt_core::harness::{Executor, Limits};
use snipadapt_core::metrics::{Buckets, CodeBleuWeights};
use snipadapt_core::pipeline::{canonical_records, Pipeline, PipelineError};
use snipadapt_core::prompt::{PromptEngine, StrategyKind};
use snipadapt_core::run::{RunDir, RunStore};

fn pipeline(gateway: Gateway) -> Pipeline {
    Pipeline::new(
        Arc::new(gateway),
        Arc::new(PromptEngine::default()),
        Executor::new("python3", Limits::default(), 4),
        CodeBleuWeights::default(),
        3,
    )
}

async fn live() -> Gateway {
    Gateway::builder(common::FIXTURE_MODEL, GatewayMode::Live)
        .provider(Arc::new(common::fixture_model(common::load_cases())))
        .build()
        .await
        .unwrap()
}

fn new_run(p: &Pipeline, root: &std::path::Path, id: &str, strategy: StrategyKind) -> RunDir {
    let cases = common::cases_with_snippets();
    let m = p.manifest(id, strategy, &SamplingConfig::default(), &LayeredSettings::default(), &cases, "d".into(), None);
    RunStore::new(root).create(&m).unwrap()
}

#[tokio::test]
async fn retrieval_yields_one_snippet_per_case() {
    let p = pipeline(live().await);
    let out = p.retrieve(&common::load_cases()).await.unwrap();
    assert!(out.complete);
    assert_eq!(out.entries.len(), 5);
    for e in &out.entries {
        let method = e.case_id.split('.').nth(1).unwrap();
        assert_eq!(e.snippet, common::snippet_for(method));
        assert_eq!(e.provenance, "model:fixture-model");
    }
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("s.jsonl");
    out.write(&cache).unwrap();
    assert_eq!(snipadapt_core::dataset::read_snippet_cache(&cache).unwrap(), out.entries);
}

#[tokio::test]
async fn retrieval_records_failures_and_aborts_on_strict_miss() {
    let provider = ScriptedProvider::new(|m: &[Turn], _s: &SamplingConfig| {
        if m[1].content.contains("def get_total") {
            Ok(vec!["I cannot help with that.".into()])
        } else {
            Ok(vec!["```python\ndef f(x):\n    return x\n```".into()])
        }
    });
    let g = Gateway::builder("m", GatewayMode::Live).provider(Arc::new(provider)).build().await.unwrap();
    let out = pipeline(g).retrieve(&common::load_cases()).await.unwrap();
    assert!(!out.complete);
    assert_eq!(out.entries.len(), 4);
    assert_eq!(out.failed.len(), 1);
    assert_eq!(out.failed[0].case_id, "Fixture_0.get_total");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let g = Gateway::builder("m", GatewayMode::Replay).transcripts(&path).build().await.unwrap();
    match pipeline(g).retrieve(&common::load_cases()).await {
        Err(PipelineError::ReplayMiss { case_id, .. }) => assert_eq!(case_id, "Fixture_0.add_item"),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn initial_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(live().await);
    let run = new_run(&p, dir.path(), "initial", StrategyKind::Initial);
    let cases = common::cases_with_snippets();
    let records = p.adapt(&run, &cases, None).await.unwrap();
    assert_eq!(records.len(), 5);
    assert!(run.manifest().unwrap().completed_at.is_some());
    let report = p.evaluate(&run, &cases, false).await.unwrap();
    // Passing samples per case follow the scripted model: 3, 2, 5, 0, 1.
    let c: Vec<u32> = report.cases.iter().map(|r| r.c).collect();
    assert_eq!(c, [3, 2, 5, 0, 1]);
    assert_eq!(
        report.buckets,
        Buckets {
            all_pass: 1,
            some_pass: 3,
            all_fail: 1
        }
    );
    assert!((report.aggregates.mean_pass_at_1 - 0.44).abs() < 1e-12);
    assert_eq!(report.aggregates.mean_pass_at_5, Some(0.8));
    assert!(report.cases.iter().all(|r| r.adaptation_size_required.unwrap() > 0));
    assert!(report.error_total > 0);
    let on_disk = std::fs::read_to_string(run.path().join("report.json")).unwrap();
    assert_eq!(on_disk, report.to_json());
    let again = p.evaluate(&run, &cases, false).await.unwrap();
    assert_eq!(again.to_json(), on_disk);
}

#[tokio::test]
async fn canonical_solutions_all_pass() {
    let p = pipeline(live().await);
    let cases = common::cases_with_snippets();
    let evals = p.evaluate_records(&canonical_records(&cases, 5), &cases).await.unwrap();
    let report = snipadapt_core::metrics::build_report(&evals, CodeBleuWeights::default());
    assert_eq!(report.buckets.all_pass, 5);
    assert_eq!(report.aggregates.mean_pass_at_1, 1.0);
    assert!(report.cases.iter().all(|r| (r.codebleu - 1.0).abs() < 1e-9));
}

#[tokio::test]
async fn interrupted_runs_resume_after_the_last_completed_case() {
    let dir = tempfile::tempdir().unwrap();
    let transcripts = dir.path().join("t.jsonl");
    let cases = common::cases_with_snippets();
    let calls = Arc::new(AtomicUsize::new(0));
    let counting = {
        let inner = common::fixture_model(common::load_cases());
        let calls = calls.clone();
        ScriptedProvider::new(move |m: &[Turn], s: &SamplingConfig| {
            calls.fetch_add(1, Ordering::SeqCst);
            futures::executor::block_on(inner.chat(common::FIXTURE_MODEL, m, s)).map(|cs| cs.into_iter().map(|c| c.content).collect())
        })
    };
    let recorder = Gateway::builder(common::FIXTURE_MODEL, GatewayMode::Record)
        .provider(Arc::new(counting))
        .transcripts(&transcripts)
        .build()
        .await
        .unwrap();
    // Record only the first two cases.
    let p = pipeline(recorder);
    let partial = new_run(&p, dir.path(), "partial", StrategyKind::Initial);
    let mut m = partial.manifest().unwrap();
    m.case_ids.truncate(2);
    partial.write_manifest(&m).unwrap();
    p.adapt(&partial, &cases, None).await.unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 2);

    // Strict replay over all five stops at the third case.
    let replay = pipeline(Gateway::builder(common::FIXTURE_MODEL, GatewayMode::Replay).transcripts(&transcripts).build().await.unwrap());
    let run = new_run(&replay, dir.path(), "full", StrategyKind::Initial);
    match replay.adapt(&run, &cases, None).await {
        Err(PipelineError::ReplayMiss { case_id, .. }) => assert_eq!(case_id, "Fixture_0.checkout"),
        other => panic!("{other:?}"),
    }
    assert_eq!(run.records().unwrap().len(), 2);
    assert!(matches!(replay.evaluate(&run, &cases, false).await, Err(PipelineError::Incomplete { done: 2, total: 5, .. })));

    // Resuming with the recorder only runs the missing cases.
    p.adapt(&run, &cases, None).await.unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 5);
    let ids: Vec<String> = run.records().unwrap().into_iter().map(|r| r.record.case_id).collect();
    assert_eq!(ids, m_ids(&cases));
}

fn m_ids(cases: &[snipadapt_core::dataset::AdaptationCase]) -> Vec<String> {
    cases.iter().map(|c| c.case_id.clone()).collect()
}

#[tokio::test]
async fn human_strategy_needs_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(live().await);
    let run = new_run(&p, dir.path(), "human", StrategyKind::HumanLlm);
    let err = p.adapt(&run, &common::cases_with_snippets(), None).await.unwrap_err();
    assert!(matches!(err, PipelineError::HumanNeedsService));
    assert!(err.to_string().contains("serve"));
}

#[tokio::test]
async fn mac_and_mae_runs_complete() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(live().await);
    let cases = common::cases_with_snippets();
    for (id, strategy) in [("mac", StrategyKind::Mac), ("mae", StrategyKind::Mae)] {
        let run = new_run(&p, dir.path(), id, strategy);
        assert!(run.manifest().unwrap().agent_sampling.is_some());
        let records = p.adapt(&run, &cases, None).await.unwrap();
        assert!(records.iter().all(|r| r.samples.len() == 5));
        assert!(records.iter().flat_map(|r| &r.samples).all(|s| s.agent_conversation.is_some() || s.questions.is_empty()));
        let report = p.evaluate(&run, &cases, false).await.unwrap();
        assert_eq!(report.strategy, Some(strategy));
    }
}
