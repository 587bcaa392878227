//! Prompt rendering for every strategy.
//!
//! Each strategy produces a [`PromptBundle`]: the system prompt plus the
//! ordered user turns the orchestrator sends one at a time. Sections inside
//! a turn are introduced by `###` headings.

pub mod template;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::DependencySet;
use crate::conversation::Turn;
use crate::dataset::AdaptationCase;

pub use template::{Template, TemplateError, TemplateSet, TEMPLATE_NAMES};

/// Retained questions per flipped-interaction response.
pub const MAX_QUESTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Retrieval,
    Generation,
    Initial,
    Enhanced,
    #[serde(rename = "human")]
    HumanLlm,
    Mac,
    Mae,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Retrieval,
        StrategyKind::Generation,
        StrategyKind::Initial,
        StrategyKind::Enhanced,
        StrategyKind::HumanLlm,
        StrategyKind::Mac,
        StrategyKind::Mae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Retrieval => "retrieval",
            StrategyKind::Generation => "generation",
            StrategyKind::Initial => "initial",
            StrategyKind::Enhanced => "enhanced",
            StrategyKind::HumanLlm => "human",
            StrategyKind::Mac => "mac",
            StrategyKind::Mae => "mae",
        }
    }

    pub fn needs_snippet(self) -> bool {
        !matches!(self, StrategyKind::Retrieval | StrategyKind::Generation)
    }

    /// Strategies built on the two-turn enhanced conversation.
    pub fn is_enhanced_family(self) -> bool {
        matches!(
            self,
            StrategyKind::Enhanced | StrategyKind::HumanLlm | StrategyKind::Mac | StrategyKind::Mae
        )
    }

    pub fn is_flipped(self) -> bool {
        matches!(self, StrategyKind::HumanLlm | StrategyKind::Mac)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("strategy {0} needs a retrieved snippet")]
    MissingSnippet(StrategyKind),
    #[error("strategy {0} needs an enriched class context")]
    MissingEnrichedContext(StrategyKind),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub strategy: StrategyKind,
    pub system: String,
    /// User seeds, sent in order with a model reply after each.
    pub turns: Vec<Turn>,
    /// System prompt of the counselor (MAC) or evaluator (MAE).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_system: Option<String>,
    pub placeholders_resolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Counselor,
    Evaluator,
}

/// Closing sentence of the enhanced adaptation instruction. Empty slots
/// are omitted; all-empty uses the fixed alternative sentence.
pub fn dependency_sentence(deps: &DependencySet) -> String {
    if deps.is_empty() {
        return "It should be implemented without using any external libraries, member variables, or methods.".into();
    }
    let join = |s: &std::collections::BTreeSet<String>| s.iter().map(String::as_str).collect::<Vec<_>>().join(", ");
    let parts: Vec<String> = [("libraries", &deps.packages), ("fields", &deps.fields), ("methods", &deps.methods)]
        .into_iter()
        .filter(|(_, set)| !set.is_empty())
        .map(|(label, set)| format!("{label}: {}", join(set)))
        .collect();
    format!("It should be implemented using {}.", parts.join(", "))
}

pub struct PromptEngine {
    templates: TemplateSet,
}

impl Default for PromptEngine {
    fn default() -> Self {
        PromptEngine::new(TemplateSet::builtin())
    }
}

impl PromptEngine {
    pub fn new(templates: TemplateSet) -> Self {
        PromptEngine { templates }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn render_prompt(
        &self,
        strategy: StrategyKind,
        case: &AdaptationCase,
        deps: Option<&DependencySet>,
    ) -> Result<PromptBundle, PromptError> {
        if strategy.needs_snippet() && case.retrieved_snippet.trim().is_empty() {
            return Err(PromptError::MissingSnippet(strategy));
        }
        if strategy.is_enhanced_family() && case.context.enriched.trim().is_empty() {
            return Err(PromptError::MissingEnrichedContext(strategy));
        }
        let t = &self.templates;
        let system = t.render("system", &[])?;
        let requirement = case.requirement.as_str();
        let skeleton = case.context.skeleton.as_str();
        let snippet = case.retrieved_snippet.trim_end();
        let mut agent_system = None;
        let turns = match strategy {
            StrategyKind::Retrieval => vec![Turn::user(t.render("retrieval.user", &[("requirement", requirement)])?)],
            StrategyKind::Generation => vec![Turn::user(t.render(
                "generation.user",
                &[("context", skeleton), ("requirement", requirement)],
            )?)],
            StrategyKind::Initial => vec![Turn::user(t.render(
                "initial.user",
                &[("context", skeleton), ("requirement", requirement), ("snippet", snippet)],
            )?)],
            StrategyKind::Enhanced | StrategyKind::HumanLlm | StrategyKind::Mac | StrategyKind::Mae => {
                let empty = DependencySet::default();
                let sentence = dependency_sentence(deps.unwrap_or(&empty));
                let turn1 = t.render("enhanced.turn1", &[("context", case.context.enriched.trim_end())])?;
                let mut turn2 = t.render(
                    "enhanced.turn2",
                    &[("requirement", requirement), ("snippet", snippet), ("deps_sentence", &sentence)],
                )?;
                if strategy.is_flipped() {
                    turn2.push_str("\n\n");
                    turn2.push_str(&self.render_flipped_instruction()?);
                }
                match strategy {
                    StrategyKind::Mac => agent_system = Some(self.render_agent_system(AgentRole::Counselor, case)?),
                    StrategyKind::Mae => agent_system = Some(self.render_agent_system(AgentRole::Evaluator, case)?),
                    _ => {}
                }
                vec![Turn::user(turn1), Turn::user(turn2)]
            }
        };
        Ok(PromptBundle {
            strategy,
            system,
            turns,
            agent_system,
            placeholders_resolved: true,
        })
    }

    pub fn render_flipped_instruction(&self) -> Result<String, PromptError> {
        let limit = MAX_QUESTIONS.to_string();
        Ok(self.templates.render("flipped", &[("max_questions", &limit)])?)
    }

    pub fn render_agent_system(&self, role: AgentRole, case: &AdaptationCase) -> Result<String, PromptError> {
        let context = case.context.enriched.trim_end();
        let requirement = case.requirement.as_str();
        Ok(match role {
            AgentRole::Counselor => self.templates.render(
                "counselor.system",
                &[
                    ("context", context),
                    ("requirement", requirement),
                    ("snippet", case.retrieved_snippet.trim_end()),
                ],
            )?,
            AgentRole::Evaluator => self
                .templates
                .render("evaluator.system", &[("context", context), ("requirement", requirement)])?,
        })
    }

    /// User turn carrying every question with its answer.
    pub fn render_answers(&self, pairs: &[(String, String)]) -> Result<String, PromptError> {
        let qa = pairs
            .iter()
            .enumerate()
            .map(|(i, (q, a))| format!("{}. Q: {q}\n   A: {a}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(self.templates.render("answers.user", &[("qa_pairs", &qa)])?)
    }

    pub fn render_counselor_questions(&self, questions: &[String]) -> Result<String, PromptError> {
        let qs = numbered(questions);
        Ok(self.templates.render("counselor.user", &[("questions", &qs)])?)
    }

    pub fn render_evaluator_request(&self, code: &str) -> Result<String, PromptError> {
        Ok(self.templates.render("evaluator.user", &[("code", code.trim_end())])?)
    }

    /// Regeneration request; an empty issue list still asks once.
    pub fn render_regeneration(&self, issues: &[String]) -> Result<String, PromptError> {
        let text = if issues.is_empty() {
            "No issues were reported.".to_string()
        } else {
            numbered(issues)
        };
        Ok(self.templates.render("regenerate.user", &[("issues", &text)])?)
    }
}

fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits a turn into `(heading, body)` pairs at `###` headings.
pub fn sections(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("### ") {
            out.push((h.trim().to_string(), String::new()));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    for (_, body) in &mut out {
        *body = body.trim().to_string();
    }
    out
}
