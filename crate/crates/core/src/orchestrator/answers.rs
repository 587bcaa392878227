use std::sync::Arc;

use async_trait::async_trait;
use thiserror::Error;

use super::extract::{numbered_items, Question};
use crate::conversation::{Conversation, Turn};
use crate::dataset::AdaptationCase;
use crate::gateway::{Gateway, SamplingConfig};
use crate::prompt::{AgentRole, PromptEngine};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnswerError {
    #[error("no answer within the deadline")]
    Timeout,
    #[error("answer provider failed: {0}")]
    Failed(String),
    #[error("expected {want} answers, got {got}")]
    Count { want: usize, got: usize },
}

/// What the provider produced, plus any side conversation it held.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerSet {
    pub answers: Vec<String>,
    pub transcript: Option<Conversation>,
}

#[async_trait]
pub trait AnswerProvider: Send + Sync {
    /// One plain-text answer per question, in question order.
    async fn answer(&self, case: &AdaptationCase, sample: usize, questions: &[Question]) -> Result<AnswerSet, AnswerError>;

    /// Interactive providers block on a person; their samples run one at a
    /// time.
    fn is_interactive(&self) -> bool {
        false
    }
}

type AnswerFn = dyn Fn(&AdaptationCase, &[Question]) -> Vec<String> + Send + Sync;

/// Deterministic answers from a closure.
pub struct ScriptedAnswers {
    f: Box<AnswerFn>,
}

impl ScriptedAnswers {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&AdaptationCase, &[Question]) -> Vec<String> + Send + Sync + 'static,
    {
        ScriptedAnswers { f: Box::new(f) }
    }

    /// Answers every question with the same text.
    pub fn constant(text: &str) -> Self {
        let text = text.to_string();
        ScriptedAnswers::new(move |_, qs| vec![text.clone(); qs.len()])
    }
}

#[async_trait]
impl AnswerProvider for ScriptedAnswers {
    async fn answer(&self, case: &AdaptationCase, _sample: usize, questions: &[Question]) -> Result<AnswerSet, AnswerError> {
        let answers = (self.f)(case, questions);
        if answers.len() != questions.len() {
            return Err(AnswerError::Count {
                want: questions.len(),
                got: answers.len(),
            });
        }
        Ok(AnswerSet {
            answers,
            transcript: None,
        })
    }
}

/// A second model seeded with the class context and snippet answers the
/// executor's questions.
pub struct CounselorAgent {
    gateway: Arc<Gateway>,
    engine: Arc<PromptEngine>,
    sampling: SamplingConfig,
}

impl CounselorAgent {
    pub fn new(gateway: Arc<Gateway>, engine: Arc<PromptEngine>, sampling: SamplingConfig) -> Self {
        CounselorAgent {
            gateway,
            engine,
            sampling,
        }
    }
}

#[async_trait]
impl AnswerProvider for CounselorAgent {
    async fn answer(&self, case: &AdaptationCase, sample: usize, questions: &[Question]) -> Result<AnswerSet, AnswerError> {
        let fail = |e: &dyn std::fmt::Display| AnswerError::Failed(e.to_string());
        let system = self.engine.render_agent_system(AgentRole::Counselor, case).map_err(|e| fail(&e))?;
        let texts: Vec<String> = questions.iter().map(|q| q.text.clone()).collect();
        let user = self.engine.render_counselor_questions(&texts).map_err(|e| fail(&e))?;
        let mut convo = vec![Turn::system(system), Turn::user(user)];
        let sampling = self.sampling.with_n(1).with_seed_tag(format!("s{sample}-counselor"));
        let reply = self
            .gateway
            .complete(&convo, &sampling)
            .await
            .map_err(|e| fail(&e))?
            .remove(0);
        convo.push(Turn::assistant(reply.content.clone()));
        Ok(AnswerSet {
            answers: split_answers(&reply.content, questions.len()),
            transcript: Some(convo),
        })
    }
}

/// Maps a numbered reply onto `n` answers; a reply that does not number
/// its answers one-to-one is given whole to every question.
pub fn split_answers(reply: &str, n: usize) -> Vec<String> {
    let items = numbered_items(reply);
    if items.len() == n {
        items
    } else {
        vec![reply.trim().to_string(); n]
    }
}
