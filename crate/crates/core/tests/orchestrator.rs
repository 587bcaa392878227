mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::flipped::*;
use snipadapt_core::conversation::{Role, Turn};
use snipadapt_core::gateway::{ChatProvider, Gateway, GatewayMode, ProviderError, SamplingConfig, ScriptedProvider};
use snipadapt_core::orchestrator::{CounselorAgent, Orchestrator, Phase, SampleStatus, ScriptedAnswers};
use snipadapt_core::prompt::{PromptEngine, StrategyKind};

#[tokio::test]
async fn three_questions_then_code() {
    let (record, seen) = flipped(3, CODE, 2).await;
    assert_eq!(record.samples.len(), 2);
    assert_eq!(seen.len(), 2);
    for s in &record.samples {
        assert_eq!(s.qa_iterations(), 1);
        assert_eq!(s.questions.len(), 3);
        assert_eq!(s.answers, ["answer to 1", "answer to 2", "answer to 3"]);
        assert!(s.code.starts_with("def add_item(self, name, price, quantity=1):"));
        assert_eq!(s.status, SampleStatus::Done);
        // system, turn 1, reply, turn 2, questions, answers, final reply
        assert_eq!(s.conversation.len(), 7);
        assert!(s.conversation[5].content.contains("1. Q: Is detail number 1 required?"));
        assert_eq!(
            s.transitions,
            [
                Phase::Seeded,
                Phase::AwaitingModel,
                Phase::AwaitingModel,
                Phase::QuestionsPending,
                Phase::AwaitingAnswers,
                Phase::FinalTurn,
                Phase::AwaitingModel,
                Phase::Done
            ]
        );
    }
}

#[tokio::test]
async fn zero_questions_skip_the_answer_round() {
    let (record, seen) = flipped(0, "unused", 1).await;
    assert!(seen.is_empty());
    let s = &record.samples[0];
    assert_eq!(s.qa_iterations(), 0);
    assert!(s.questions.is_empty());
    assert!(s.code.starts_with("def add_item"));
    assert_eq!(s.conversation.len(), 5);
}

#[tokio::test]
async fn five_questions_are_truncated_to_three() {
    let (record, seen) = flipped(5, CODE, 1).await;
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].len(), 3);
    assert_eq!(seen[0].iter().map(|q| q.index).collect::<Vec<_>>(), [1, 2, 3]);
    let s = &record.samples[0];
    assert_eq!(s.qa_iterations(), 1);
    assert_eq!(s.questions.len(), 3);
    assert!(!s.conversation[5].content.contains("number 4"));
}

#[tokio::test]
async fn only_one_iteration_even_if_the_model_keeps_asking() {
    let (record, seen) = flipped(3, "1. One more thing, is it async?", 1).await;
    assert_eq!(seen.len(), 1);
    let s = &record.samples[0];
    assert_eq!(s.qa_iterations(), 1);
    assert_eq!(s.code, "");
    assert_eq!(s.status, SampleStatus::Done);
}

#[tokio::test]
async fn flipped_strategies_require_a_provider() {
    let orch = orchestrator(live(asking(0, CODE)).await);
    let s = SamplingConfig::default();
    assert!(orch.run_case(&case(), StrategyKind::Mac, None, None, &s).await.is_err());
    let answers = ScriptedAnswers::constant("x");
    assert!(orch.run_case(&case(), StrategyKind::Initial, None, Some(&answers), &s).await.is_err());
}

#[tokio::test]
async fn mac_routes_questions_to_the_counselor() {
    let gateway = live(common::fixture_model(common::load_cases())).await;
    let engine = Arc::new(PromptEngine::default());
    let orch = Orchestrator::new(gateway.clone(), engine.clone());
    let sampling = SamplingConfig::default();
    let counselor = CounselorAgent::new(gateway, engine, sampling.with_n(1));
    let record = orch.run_case(&case(), StrategyKind::Mac, None, Some(&counselor), &sampling).await.unwrap();
    assert_eq!(record.samples.len(), 5);
    for s in &record.samples {
        assert_eq!(s.qa_iterations(), 1);
        assert_eq!(s.questions.len(), 2);
        assert_eq!(s.answers[0], "Yes, keep the behavior described in the docstring.");
        let agent = s.agent_conversation.as_ref().expect("counselor transcript");
        assert!(agent[0].content.starts_with("You are a senior developer"));
        assert_eq!(agent.last().unwrap().role, Role::Assistant);
        assert!(!s.code.is_empty());
    }
}

#[tokio::test]
async fn mae_reviews_then_regenerates() {
    let gateway = live(common::fixture_model(common::load_cases())).await;
    let orch = orchestrator(gateway);
    // calculate_sector_area: first adaptation of samples 3 and 4 is wrong.
    let case = common::cases_with_snippets().remove(4);
    let record = orch.run_case(&case, StrategyKind::Mae, None, None, &SamplingConfig::default()).await.unwrap();
    for s in &record.samples {
        assert_eq!(s.evaluation_rounds(), 1);
        assert!(s.first_code.is_some());
        assert!(!s.evaluation_skipped);
        let review = s.agent_conversation.as_ref().unwrap();
        assert!(review[0].content.starts_with("You are a meticulous code reviewer"));
        assert!(s.conversation.iter().any(|t| t.content.starts_with("### Review")));
    }
    let s3 = &record.samples[3];
    assert_ne!(s3.first_code.as_deref(), Some(s3.code.as_str()));
    assert!(s3.conversation[5].content.contains("does not use the class fields"));
    assert!(record.samples[0].conversation[5].content.contains("No issues were reported."));
}

#[tokio::test]
async fn mae_keeps_the_first_adaptation_when_the_evaluator_fails() {
    let provider = ScriptedProvider::new(|msgs: &[Turn], _s: &SamplingConfig| {
        if msgs[0].content.starts_with("You are a meticulous code reviewer") {
            return Err(ProviderError::Status {
                status: 400,
                body: "bad request".into(),
            });
        }
        let last = &msgs.last().unwrap().content;
        Ok(vec![if last.contains("Understood.") { "Understood.".into() } else { CODE.to_string() }])
    });
    let orch = orchestrator(live(provider).await);
    let record = orch.run_case(&case(), StrategyKind::Mae, None, None, &SamplingConfig::default().with_n(1)).await.unwrap();
    let s = &record.samples[0];
    assert!(s.evaluation_skipped);
    assert_eq!(s.status, SampleStatus::Done);
    assert_eq!(s.first_code.as_deref(), Some(s.code.as_str()));
    assert!(s.code.starts_with("def add_item"));
    assert!(s.failure.as_deref().unwrap().contains("400"));
    assert_eq!(s.evaluation_rounds(), 0);
}

#[tokio::test]
async fn replay_reproduces_records_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let inner = asking(5, CODE);
    let counted = ScriptedProvider::new(move |m: &[Turn], s: &SamplingConfig| {
        c.fetch_add(1, Ordering::SeqCst);
        futures::executor::block_on(inner.chat("scripted", m, s)).map(|cs| cs.into_iter().map(|c| c.content).collect())
    });
    let recorder = Arc::new(
        Gateway::builder("scripted", GatewayMode::Record)
            .provider(Arc::new(counted))
            .transcripts(&path)
            .build()
            .await
            .unwrap(),
    );
    let answers = ScriptedAnswers::constant("yes");
    let sampling = SamplingConfig::default().with_n(3);
    let recorded = orchestrator(recorder).run_case(&case(), StrategyKind::HumanLlm, None, Some(&answers), &sampling).await.unwrap();
    let live_calls = calls.load(Ordering::SeqCst);
    assert_eq!(live_calls, 3 * 3);

    let mut replays = Vec::new();
    for _ in 0..2 {
        let g = Arc::new(Gateway::builder("scripted", GatewayMode::Replay).transcripts(&path).build().await.unwrap());
        replays.push(orchestrator(g).run_case(&case(), StrategyKind::HumanLlm, None, Some(&answers), &sampling).await.unwrap());
    }
    assert_eq!(calls.load(Ordering::SeqCst), live_calls);
    assert_eq!(serde_json::to_string(&replays[0]).unwrap(), serde_json::to_string(&replays[1]).unwrap());
    for (a, b) in recorded.samples.iter().zip(&replays[0].samples) {
        assert_eq!(a.conversation, b.conversation);
        assert_eq!(a.code, b.code);
        assert_eq!(a.transitions, b.transitions);
        assert_eq!(b.timings.model_ms, 0);
    }
}
