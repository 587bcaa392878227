//! Minimal placeholder templates.
//!
//! `{{name}}` is a placeholder (`name` matches `[a-z_][a-z0-9_]*`). Any
//! other `{{` renders a literal `{` and `}}` a literal `}`. Single braces
//! pass through unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{template}` has no value for placeholder `{name}`")]
    Missing { template: String, name: String },
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("cannot read template directory: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone)]
pub struct Template {
    pub name: String,
    pub hash: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn new(name: &str, text: &str) -> Self {
        Template {
            name: name.to_string(),
            hash: hex::encode(Sha256::digest(text.as_bytes())),
            pieces: tokenize(text),
        }
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(s.as_str()),
            Piece::Text(_) => None,
        })
    }

    /// Renders with `vars`; values are inserted verbatim and never re-scanned.
    pub fn render(&self, vars: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => out.push_str(vars.get(name.as_str()).ok_or_else(|| TemplateError::Missing {
                    template: self.name.clone(),
                    name: name.clone(),
                })?),
            }
        }
        Ok(out)
    }
}

fn placeholder_at(text: &str) -> Option<(String, usize)> {
    let rest = text.strip_prefix("{{")?;
    let end = rest.find("}}")?;
    let name = &rest[..end];
    let mut chars = name.chars();
    let valid = chars.next().is_some_and(|c| c == '_' || c.is_ascii_lowercase())
        && chars.all(|c| c == '_' || c.is_ascii_lowercase() || c.is_ascii_digit());
    valid.then(|| (name.to_string(), end + 4))
}

fn tokenize(text: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut buf = String::new();
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if let Some((name, len)) = placeholder_at(rest) {
            if !buf.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut buf)));
            }
            pieces.push(Piece::Slot(name));
            i += len;
        } else if rest.starts_with("{{") {
            buf.push('{');
            i += 2;
        } else if rest.starts_with("}}") {
            buf.push('}');
            i += 2;
        } else {
            let c = rest.chars().next().expect("non-empty");
            buf.push(c);
            i += c.len_utf8();
        }
    }
    if !buf.is_empty() {
        pieces.push(Piece::Text(buf));
    }
    pieces
}

/// Every template file the harness renders, by file stem.
pub const TEMPLATE_NAMES: &[&str] = &[
    "system",
    "retrieval.user",
    "generation.user",
    "initial.user",
    "enhanced.turn1",
    "enhanced.turn2",
    "flipped",
    "answers.user",
    "counselor.system",
    "counselor.user",
    "evaluator.system",
    "evaluator.user",
    "regenerate.user",
];

const BUILTIN: &[(&str, &str)] = &[
    ("system", include_str!("../../templates/system.txt")),
    ("retrieval.user", include_str!("../../templates/retrieval.user.txt")),
    ("generation.user", include_str!("../../templates/generation.user.txt")),
    ("initial.user", include_str!("../../templates/initial.user.txt")),
    ("enhanced.turn1", include_str!("../../templates/enhanced.turn1.txt")),
    ("enhanced.turn2", include_str!("../../templates/enhanced.turn2.txt")),
    ("flipped", include_str!("../../templates/flipped.txt")),
    ("answers.user", include_str!("../../templates/answers.user.txt")),
    ("counselor.system", include_str!("../../templates/counselor.system.txt")),
    ("counselor.user", include_str!("../../templates/counselor.user.txt")),
    ("evaluator.system", include_str!("../../templates/evaluator.system.txt")),
    ("evaluator.user", include_str!("../../templates/evaluator.user.txt")),
    ("regenerate.user", include_str!("../../templates/regenerate.user.txt")),
];

/// Immutable set of loaded templates.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            templates: BUILTIN
                .iter()
                .map(|(name, text)| (name.to_string(), Template::new(name, text)))
                .collect(),
        }
    }

    /// Loads `<name>.txt` files from `dir`, falling back to the built-in
    /// text for any that are absent.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
                set.templates.insert(name.to_string(), Template::new(name, &text));
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&Template, TemplateError> {
        self.templates.get(name).ok_or_else(|| TemplateError::Unknown(name.into()))
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let vars: BTreeMap<&str, &str> = vars.iter().copied().collect();
        Ok(self.get(name)?.render(&vars)?.trim_end().to_string())
    }

    /// File name to SHA-256 of its text, for run manifests.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(k, t)| (format!("{k}.txt"), t.hash.clone()))
            .collect()
    }
}
