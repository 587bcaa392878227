//! Strategy execution as a per-sample conversation state machine.
//!
//! Single-turn strategies send one request for all samples. The others run
//! one session per sample: the two seed turns, then at most one Q&A round
//! (flipped strategies) or one evaluate-regenerate round (MAE).

mod answers;
mod extract;

use std::sync::Arc;
use std::time::Instant;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::DependencySet;
use crate::conversation::{Conversation, Turn};
use crate::dataset::AdaptationCase;
use crate::gateway::{Completion, Gateway, GatewayError, SamplingConfig};
use crate::prompt::{PromptBundle, PromptEngine, PromptError, StrategyKind};

pub use answers::{split_answers, AnswerError, AnswerProvider, AnswerSet, CounselorAgent, ScriptedAnswers};
pub use extract::{classify_question, extract_code_block, numbered_items, parse_issues, parse_questions, Question, QuestionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seeded,
    AwaitingModel,
    QuestionsPending,
    AwaitingAnswers,
    FinalTurn,
    Evaluated,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    /// Sum of provider latencies; zero under replay.
    pub model_ms: u64,
    /// Time spent waiting on an interactive answer provider.
    pub answer_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub conversation: Conversation,
    pub questions: Vec<Question>,
    pub answers: Vec<String>,
    /// Extracted adaptation; empty when nothing was extracted or the
    /// sample failed.
    pub code: String,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Counselor or evaluator side conversation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_conversation: Option<Conversation>,
    /// MAE: the adaptation before regeneration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_code: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub evaluation_skipped: bool,
    /// Request hash when the sample failed on a strict replay miss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_miss: Option<String>,
    pub transitions: Vec<Phase>,
    pub timings: Timings,
}

impl SampleRecord {
    pub fn qa_iterations(&self) -> usize {
        self.transitions.iter().filter(|p| **p == Phase::AwaitingAnswers).count()
    }

    pub fn evaluation_rounds(&self) -> usize {
        self.transitions.iter().filter(|p| **p == Phase::Evaluated).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub strategy: StrategyKind,
    pub sampling: SamplingConfig,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("strategy {0} needs an answer provider")]
    MissingProvider(StrategyKind),
    #[error("strategy {0} does not take an answer provider")]
    UnexpectedProvider(StrategyKind),
}

struct Session {
    index: usize,
    conversation: Conversation,
    transitions: Vec<Phase>,
    timings: Timings,
}

impl Session {
    fn new(index: usize, bundle: &PromptBundle) -> Self {
        Session {
            index,
            conversation: vec![Turn::system(bundle.system.clone())],
            transitions: vec![Phase::Seeded],
            timings: Timings::default(),
        }
    }

    fn enter(&mut self, phase: Phase) {
        self.transitions.push(phase);
    }

    fn finish(self, status: SampleStatus, code: String) -> SampleRecord {
        let mut transitions = self.transitions;
        transitions.push(match status {
            SampleStatus::Done => Phase::Done,
            SampleStatus::Failed => Phase::Failed,
        });
        SampleRecord {
            index: self.index,
            conversation: self.conversation,
            questions: Vec::new(),
            answers: Vec::new(),
            code,
            status,
            failure: None,
            agent_conversation: None,
            first_code: None,
            evaluation_skipped: false,
            replay_miss: None,
            transitions,
            timings: self.timings,
        }
    }
}

pub struct Orchestrator {
    gateway: Arc<Gateway>,
    engine: Arc<PromptEngine>,
}

impl Orchestrator {
    pub fn new(gateway: Arc<Gateway>, engine: Arc<PromptEngine>) -> Self {
        Orchestrator { gateway, engine }
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn engine(&self) -> &Arc<PromptEngine> {
        &self.engine
    }

    /// Runs `sampling.n_samples` sessions of `strategy` on `case`.
    pub async fn run_case(
        &self,
        case: &AdaptationCase,
        strategy: StrategyKind,
        deps: Option<&DependencySet>,
        provider: Option<&dyn AnswerProvider>,
        sampling: &SamplingConfig,
    ) -> Result<CaseRecord, OrchestratorError> {
        match (strategy.is_flipped(), provider.is_some()) {
            (true, false) => return Err(OrchestratorError::MissingProvider(strategy)),
            (false, true) => return Err(OrchestratorError::UnexpectedProvider(strategy)),
            _ => {}
        }
        let bundle = self.engine.render_prompt(strategy, case, deps)?;
        let n = sampling.n_samples as usize;
        let samples = if bundle.turns.len() == 1 {
            self.single_turn(&bundle, sampling).await
        } else if provider.is_some_and(|p| p.is_interactive()) {
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                out.push(self.session(case, &bundle, provider, sampling, i).await);
            }
            out
        } else {
            join_all((0..n).map(|i| self.session(case, &bundle, provider, sampling, i))).await
        };
        Ok(CaseRecord {
            case_id: case.case_id.clone(),
            strategy,
            sampling: sampling.clone(),
            samples,
        })
    }

    async fn single_turn(&self, bundle: &PromptBundle, sampling: &SamplingConfig) -> Vec<SampleRecord> {
        let n = sampling.n_samples as usize;
        let mut base = Session::new(0, bundle);
        base.conversation.push(bundle.turns[0].clone());
        base.enter(Phase::AwaitingModel);
        match self.gateway.complete(&base.conversation, sampling).await {
            Ok(completions) => completions
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut s = Session {
                        index: i,
                        conversation: base.conversation.clone(),
                        transitions: base.transitions.clone(),
                        timings: Timings {
                            model_ms: c.latency_ms,
                            answer_ms: 0,
                        },
                    };
                    let code = extract_code_block(&c.content);
                    s.conversation.push(Turn::assistant(c.content));
                    s.finish(SampleStatus::Done, code)
                })
                .collect(),
            Err(e) => (0..n)
                .map(|i| {
                    let s = Session {
                        index: i,
                        conversation: base.conversation.clone(),
                        transitions: base.transitions.clone(),
                        timings: Timings::default(),
                    };
                    failed(s, &e)
                })
                .collect(),
        }
    }

    async fn ask(&self, s: &mut Session, sampling: &SamplingConfig) -> Result<Completion, GatewayError> {
        s.enter(Phase::AwaitingModel);
        let reply = self.gateway.complete(&s.conversation, sampling).await?.remove(0);
        s.timings.model_ms += reply.latency_ms;
        s.conversation.push(Turn::assistant(reply.content.clone()));
        Ok(reply)
    }

    async fn session(
        &self,
        case: &AdaptationCase,
        bundle: &PromptBundle,
        provider: Option<&dyn AnswerProvider>,
        sampling: &SamplingConfig,
        index: usize,
    ) -> SampleRecord {
        let sampling = sampling.with_n(1).with_seed_tag(format!("s{index}"));
        let mut s = Session::new(index, bundle);
        let mut last = None;
        for turn in &bundle.turns {
            s.conversation.push(turn.clone());
            match self.ask(&mut s, &sampling).await {
                Ok(c) => last = Some(c),
                Err(e) => return failed(s, &e),
            }
        }
        let reply = last.expect("bundle has turns").content;
        match bundle.strategy {
            StrategyKind::HumanLlm | StrategyKind::Mac => {
                let provider = provider.expect("checked by run_case");
                self.answer_round(s, case, provider, &sampling, &reply).await
            }
            StrategyKind::Mae => self.mae_round(s, case, bundle, &sampling, &reply).await,
            _ => {
                let code = extract_code_block(&reply);
                s.finish(SampleStatus::Done, code)
            }
        }
    }

    /// At most one Q&A iteration, then the final reply is extracted.
    async fn answer_round(
        &self,
        mut s: Session,
        case: &AdaptationCase,
        provider: &dyn AnswerProvider,
        sampling: &SamplingConfig,
        reply: &str,
    ) -> SampleRecord {
        let questions = parse_questions(reply);
        if questions.is_empty() {
            let code = extract_code_block(reply);
            return s.finish(SampleStatus::Done, code);
        }
        s.enter(Phase::QuestionsPending);
        s.enter(Phase::AwaitingAnswers);
        let started = Instant::now();
        let result = provider.answer(case, s.index, &questions).await;
        if provider.is_interactive() {
            s.timings.answer_ms = started.elapsed().as_millis() as u64;
        }
        let set = match result {
            Ok(set) => set,
            Err(e) => {
                let mut rec = s.finish(SampleStatus::Failed, String::new());
                rec.failure = Some(e.to_string());
                rec.questions = questions;
                return rec;
            }
        };
        let pairs: Vec<(String, String)> = questions.iter().map(|q| q.text.clone()).zip(set.answers.iter().cloned()).collect();
        let turn = match self.engine.render_answers(&pairs) {
            Ok(t) => t,
            Err(e) => {
                let mut rec = s.finish(SampleStatus::Failed, String::new());
                rec.failure = Some(e.to_string());
                return rec;
            }
        };
        s.conversation.push(Turn::user(turn));
        s.enter(Phase::FinalTurn);
        let mut rec = match self.ask(&mut s, sampling).await {
            Ok(c) => {
                let code = extract_code_block(&c.content);
                s.finish(SampleStatus::Done, code)
            }
            Err(e) => failed(s, &e),
        };
        rec.questions = questions;
        rec.answers = set.answers;
        rec.agent_conversation = set.transcript;
        rec
    }

    /// One evaluator review followed by exactly one regeneration.
    async fn mae_round(
        &self,
        mut s: Session,
        case: &AdaptationCase,
        bundle: &PromptBundle,
        sampling: &SamplingConfig,
        reply: &str,
    ) -> SampleRecord {
        let first = extract_code_block(reply);
        let system = bundle.agent_system.clone().unwrap_or_default();
        let review = async {
            let request = self.engine.render_evaluator_request(&first).map_err(|e| e.to_string())?;
            let mut convo = vec![Turn::system(system), Turn::user(request)];
            let eval_sampling = sampling.with_seed_tag(format!("s{}-evaluator", s.index));
            let c = self
                .gateway
                .complete(&convo, &eval_sampling)
                .await
                .map_err(|e| e.to_string())?
                .remove(0);
            convo.push(Turn::assistant(c.content.clone()));
            Ok::<_, String>((c, convo))
        }
        .await;
        let (c, convo) = match review {
            Ok(r) => r,
            Err(cause) => {
                tracing::warn!(case = %case.case_id, sample = s.index, %cause, "evaluation skipped");
                let mut rec = s.finish(SampleStatus::Done, first.clone());
                rec.first_code = Some(first);
                rec.evaluation_skipped = true;
                rec.failure = Some(cause);
                return rec;
            }
        };
        s.timings.model_ms += c.latency_ms;
        s.enter(Phase::Evaluated);
        let issues = parse_issues(&c.content);
        let mut rec = match self.engine.render_regeneration(&issues) {
            Ok(turn) => {
                s.conversation.push(Turn::user(turn));
                s.enter(Phase::FinalTurn);
                match self.ask(&mut s, sampling).await {
                    Ok(r) => {
                        let code = extract_code_block(&r.content);
                        s.finish(SampleStatus::Done, code)
                    }
                    Err(e) => failed(s, &e),
                }
            }
            Err(e) => {
                let mut rec = s.finish(SampleStatus::Failed, String::new());
                rec.failure = Some(e.to_string());
                rec
            }
        };
        rec.first_code = Some(first);
        rec.agent_conversation = Some(convo);
        rec
    }
}

fn failed(s: Session, e: &GatewayError) -> SampleRecord {
    let mut rec = s.finish(SampleStatus::Failed, String::new());
    rec.failure = Some(e.to_string());
    if let GatewayError::ReplayMiss(hash) = e {
        rec.replay_miss = Some(hash.clone());
    }
    rec
}
