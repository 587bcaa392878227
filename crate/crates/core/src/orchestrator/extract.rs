use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::prompt::MAX_QUESTIONS;

static DEF_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:async[ \t]+)?def[ \t]+\w+[ \t]*\(").unwrap());
static TOP_DEF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:async[ \t]+)?def[ \t]+\w+[ \t]*\(").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+)[.)]\s+(.*)$").unwrap());
static OR_QUESTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bor\b[^?]*\?").unwrap());

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "should", "do", "does", "did", "can", "could", "will", "would", "must", "has", "have",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Selective,
    CloseEnded,
    OpenEnded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    /// 1-based position among the retained questions.
    pub index: usize,
    pub text: String,
    pub kind: QuestionKind,
}

/// Lines outside fenced code blocks, and the fenced blocks themselves.
fn split_fences(text: &str) -> (Vec<&str>, Vec<String>) {
    let mut prose = Vec::new();
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (None, false) => prose.push(line),
            (Some(body), false) => body.push(line),
            (Some(_), true) => blocks.push(current.take().expect("open fence").join("\n")),
        }
    }
    // An unterminated fence (e.g. a truncated reply) runs to the end.
    if let Some(body) = current {
        blocks.push(body.join("\n"));
    }
    (prose, blocks)
}

fn with_newline(mut s: String) -> String {
    if !s.is_empty() && !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Code of the first fenced block holding a method definition, else the
/// first top-level `def` region, else the empty string.
pub fn extract_code_block(response: &str) -> String {
    let (_, blocks) = split_fences(response);
    if let Some(block) = blocks.into_iter().find(|b| DEF_LINE.is_match(b)) {
        return with_newline(block.trim_matches('\n').to_string());
    }
    let lines: Vec<&str> = response.lines().collect();
    let Some(start) = lines.iter().position(|l| TOP_DEF.is_match(l)) else {
        return String::new();
    };
    let mut first = start;
    while first > 0 && lines[first - 1].starts_with('@') {
        first -= 1;
    }
    let mut end = start + 1;
    while end < lines.len() {
        let l = lines[end];
        if !l.trim().is_empty() && !l.starts_with([' ', '\t']) && !l.starts_with(')') {
            break;
        }
        end += 1;
    }
    with_newline(lines[first..end].join("\n").trim_end().to_string())
}

pub fn classify_question(text: &str) -> QuestionKind {
    let lower = text.to_lowercase();
    if text.contains("A)") || lower.contains("option") || OR_QUESTION.is_match(text) {
        return QuestionKind::Selective;
    }
    let first = lower.split(|c: char| !c.is_alphanumeric()).find(|w| !w.is_empty()).unwrap_or("");
    if AUXILIARIES.contains(&first) {
        QuestionKind::CloseEnded
    } else {
        QuestionKind::OpenEnded
    }
}

/// Numbered items outside code fences, with indented continuation lines.
pub fn numbered_items(text: &str) -> Vec<String> {
    let (prose, _) = split_fences(text);
    let mut items: Vec<String> = Vec::new();
    let mut open = false;
    for line in prose {
        if let Some(c) = NUMBERED.captures(line) {
            items.push(c[2].trim().to_string());
            open = true;
        } else if open && !line.trim().is_empty() && line.starts_with([' ', '\t']) {
            let last = items.last_mut().expect("open item");
            last.push(' ');
            last.push_str(line.trim());
        } else {
            open = false;
        }
    }
    items
}

/// Numbered questions in order, capped at three.
pub fn parse_questions(response: &str) -> Vec<Question> {
    numbered_items(response)
        .into_iter()
        .filter(|t| t.contains('?'))
        .take(MAX_QUESTIONS)
        .enumerate()
        .map(|(i, text)| Question {
            index: i + 1,
            kind: classify_question(&text),
            text,
        })
        .collect()
}

/// Issue list of an evaluator reply; "No issues" yields none.
pub fn parse_issues(response: &str) -> Vec<String> {
    let trimmed = response.trim();
    if trimmed.is_empty() || trimmed.to_lowercase().starts_with("no issues") {
        return Vec::new();
    }
    let items = numbered_items(response);
    if items.is_empty() {
        vec![trimmed.to_string()]
    } else {
        items
    }
}
