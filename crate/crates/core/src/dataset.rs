//! Benchmark ingestion and derivation of method-level adaptation cases.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{dedent, extract_dependencies, parse_source, ClassError, ClassModel, DependencyReport, ParseError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed benchmark JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("class {class_id}: {message}")]
    InvalidClass { class_id: String, message: String },
    #[error("duplicate class_id {0}")]
    DuplicateClass(String),
    #[error("snippet is empty")]
    EmptySnippet,
    #[error("snippet is not a method definition: {0}")]
    SnippetNotMethod(String),
    #[error("snippet cache line {line}: {message}")]
    Cache { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub signature: String,
    pub docstring: String,
    /// Full method definition.
    pub canonical_solution: String,
    /// Method-level test suite; falls back to the class suite when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassUnit {
    pub class_id: String,
    pub source: String,
    #[serde(rename = "methods")]
    pub method_specs: Vec<MethodSpec>,
    pub test_source: String,
    #[serde(default)]
    pub import_block: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassContext {
    /// Class with signatures and docstrings only (constructor kept whole).
    pub skeleton: String,
    /// Class with the full bodies of every retained method.
    pub enriched: String,
    /// Class-level statements and the constructor.
    pub fields_decl: String,
    /// Target plus its transitive callers.
    pub excluded_methods: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationCase {
    pub case_id: String,
    pub class_id: String,
    pub method_name: String,
    pub requirement: String,
    /// Empty until a snippet is attached.
    pub retrieved_snippet: String,
    pub context: ClassContext,
    pub canonical_solution: String,
    pub test_source: String,
    pub import_block: String,
    /// Full canonical class; adapted code replaces the target here for
    /// execution.
    pub class_source: String,
}

#[derive(Debug, Default)]
pub struct LoadedBenchmark {
    pub units: Vec<ClassUnit>,
    /// Classes skipped in lenient mode.
    pub rejected: Vec<(String, String)>,
}

/// Reads a benchmark file. Strict mode fails on the first invalid class;
/// lenient mode skips it and records why.
pub fn load_benchmark(path: &Path, mode: LoadMode) -> Result<LoadedBenchmark, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_benchmark(&bytes, mode)
}

pub fn parse_benchmark(bytes: &[u8], mode: LoadMode) -> Result<LoadedBenchmark, DatasetError> {
    let units: Vec<ClassUnit> = serde_json::from_slice(bytes)?;
    let mut out = LoadedBenchmark::default();
    let mut seen = HashSet::new();
    for unit in units {
        if !seen.insert(unit.class_id.clone()) {
            return Err(DatasetError::DuplicateClass(unit.class_id));
        }
        match validate_unit(&unit) {
            Ok(()) => out.units.push(unit),
            Err(e) if mode == LoadMode::Lenient => {
                tracing::warn!(class_id = %unit.class_id, "skipping class: {e}");
                out.rejected.push((unit.class_id.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn invalid(unit: &ClassUnit, message: impl Into<String>) -> DatasetError {
    DatasetError::InvalidClass {
        class_id: unit.class_id.clone(),
        message: message.into(),
    }
}

fn validate_unit(unit: &ClassUnit) -> Result<(), DatasetError> {
    let first = unit.method_specs.first().map(|m| m.name.as_str());
    let model = ClassModel::parse(&unit.source, first).map_err(|e| invalid(unit, e.to_string()))?;
    for spec in &unit.method_specs {
        if !is_identifier(&spec.name) {
            return Err(invalid(unit, format!("`{}` is not a valid identifier", spec.name)));
        }
        let count = model.method_names().filter(|n| *n == spec.name).count();
        if count != 1 {
            return Err(invalid(unit, format!("method `{}` defined {count} times", spec.name)));
        }
        parse_source(&dedent(&spec.canonical_solution))
            .map_err(|e| invalid(unit, format!("canonical solution of `{}`: {e}", spec.name)))?;
    }
    Ok(())
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c == '_' || c.is_alphabetic()) && chars.all(|c| c == '_' || c.is_alphanumeric())
}

impl ClassUnit {
    pub fn model(&self) -> Result<ClassModel, ClassError> {
        ClassModel::parse(&self.source, self.method_specs.first().map(|m| m.name.as_str()))
    }
}

/// Transitive intra-class callers of `target`.
pub fn compute_callers(unit: &ClassUnit, target: &str) -> Result<BTreeSet<String>, ClassError> {
    unit.model()?.callers(target)
}

/// Dependencies of `method_body` on the unit's imports, fields and methods.
pub fn unit_dependencies(method_body: &str, unit: &ClassUnit) -> Result<DependencyReport, DatasetError> {
    let model = unit.model().map_err(|e| invalid(unit, e.to_string()))?;
    extract_dependencies(method_body, &model, &unit.import_block).map_err(|e: ParseError| invalid(unit, e.to_string()))
}

/// Dependencies of the case's canonical solution on imports, retained
/// fields and methods of its class.
pub fn case_dependencies(case: &AdaptationCase) -> Result<DependencyReport, DatasetError> {
    let bad = |message: String| DatasetError::InvalidClass {
        class_id: case.class_id.clone(),
        message,
    };
    let model = ClassModel::parse(&case.class_source, Some(&case.method_name)).map_err(|e| bad(e.to_string()))?;
    extract_dependencies(&case.canonical_solution, &model, &case.import_block).map_err(|e| bad(e.to_string()))
}

/// One case per method spec, each with the target and its callers removed
/// from the context.
pub fn derive_cases(unit: &ClassUnit) -> Result<Vec<AdaptationCase>, DatasetError> {
    let model = unit.model().map_err(|e| invalid(unit, e.to_string()))?;
    unit.method_specs
        .iter()
        .map(|spec| {
            let callers = model.callers(&spec.name).map_err(|e| invalid(unit, e.to_string()))?;
            let mut excluded: BTreeSet<String> = callers;
            excluded.insert(spec.name.clone());
            // The constructor carries the field declarations and always stays.
            excluded.retain(|m| m != "__init__" || m == &spec.name);
            Ok(AdaptationCase {
                case_id: format!("{}.{}", unit.class_id, spec.name),
                class_id: unit.class_id.clone(),
                method_name: spec.name.clone(),
                requirement: requirement_text(spec),
                retrieved_snippet: String::new(),
                context: build_context(&model, &excluded),
                canonical_solution: spec.canonical_solution.clone(),
                test_source: spec.test_source.clone().unwrap_or_else(|| unit.test_source.clone()),
                import_block: unit.import_block.clone(),
                class_source: unit.source.clone(),
            })
        })
        .collect()
}

pub fn derive_all(units: &[ClassUnit]) -> Result<Vec<AdaptationCase>, DatasetError> {
    let mut out = Vec::new();
    for u in units {
        out.extend(derive_cases(u)?);
    }
    Ok(out)
}

/// Signature line followed by the docstring, as a method description.
pub fn requirement_text(spec: &MethodSpec) -> String {
    let sig = spec.signature.trim_end();
    let doc = spec.docstring.trim_matches('\n');
    if doc.is_empty() {
        return sig.to_string();
    }
    let body: Vec<String> = doc
        .lines()
        .map(|l| if l.trim().is_empty() { String::new() } else { format!("    {}", l.trim_end()) })
        .collect();
    format!("{sig}\n    \"\"\"\n{}\n    \"\"\"", body.join("\n"))
}

fn build_context(model: &ClassModel, excluded: &BTreeSet<String>) -> ClassContext {
    let indent = &model.member_indent;
    let mut skeleton = vec![model.class_header().to_string()];
    let mut fields_decl = Vec::new();
    for stmt in &model.class_statements {
        let text = &model.source[stmt.clone()];
        skeleton.push(format!("{indent}{text}"));
        fields_decl.push(format!("{indent}{text}"));
    }
    for m in &model.methods {
        if excluded.contains(&m.name) {
            continue;
        }
        let text = if m.is_constructor {
            let full = format!("{indent}{}", &model.source[m.span.clone()]);
            fields_decl.push(full.clone());
            full
        } else {
            format!("{indent}{}", model.method_stub(m))
        };
        skeleton.push(text);
    }
    if skeleton.len() == 1 {
        skeleton.push(format!("{indent}pass"));
    }
    ClassContext {
        skeleton: skeleton.join("\n\n"),
        enriched: model.class_without(excluded),
        fields_decl: fields_decl.join("\n\n"),
        excluded_methods: excluded.iter().cloned().collect(),
    }
}

/// Returns a copy of `case` carrying `snippet`. The snippet must parse as a
/// method definition once dedented.
pub fn attach_snippet(case: &AdaptationCase, snippet: &str) -> Result<AdaptationCase, DatasetError> {
    if snippet.trim().is_empty() {
        return Err(DatasetError::EmptySnippet);
    }
    let text = dedent(snippet);
    let tree = parse_source(&text).map_err(|e| DatasetError::SnippetNotMethod(e.to_string()))?;
    let has_def = tree.children(tree.root()).iter().any(|&c| {
        let inner = if tree.kind(c) == "decorated_definition" {
            tree.child_by_field(c, "definition").unwrap_or(c)
        } else {
            c
        };
        tree.kind(inner) == "function_definition"
    });
    if !has_def {
        return Err(DatasetError::SnippetNotMethod("no function definition".into()));
    }
    let mut out = case.clone();
    out.retrieved_snippet = text;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetEntry {
    pub case_id: String,
    pub snippet: String,
    pub provenance: String,
}

pub fn read_snippet_cache(path: &Path) -> Result<Vec<SnippetEntry>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Cache {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_snippet_cache(path: &Path, entries: &[SnippetEntry]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for e in entries {
        serde_json::to_writer(&mut file, e)?;
        file.write_all(b"\n").map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_method_unit() -> ClassUnit {
        let source = r#"class Ledger:
    def __init__(self):
        self.entries = []

    def add(self, amount):
        """Record an amount."""
        self.entries.append(amount)

    def m(self):
        """Sum of entries."""
        return sum(self.entries)

    def p(self):
        """Mean of entries."""
        return self.m() / len(self.entries)

    def q(self):
        """Number of entries."""
        return len(self.entries)

    def r(self):
        """Largest entry."""
        return max(self.entries)
"#;
        let model = ClassModel::parse(source, None).unwrap();
        let method_specs = ["add", "m", "p", "q", "r"]
            .iter()
            .map(|n| MethodSpec {
                name: n.to_string(),
                signature: format!("def {n}(self):"),
                docstring: String::new(),
                canonical_solution: dedent(model.method_text(n).unwrap()),
                test_source: None,
            })
            .collect();
        ClassUnit {
            class_id: "Ledger_0".into(),
            source: source.into(),
            method_specs,
            test_source: "import unittest\n".into(),
            import_block: String::new(),
        }
    }

    #[test]
    fn exclusion_is_target_plus_callers() {
        // Call graph by inspection: p -> m, nothing else calls anything.
        let cases = derive_cases(&five_method_unit()).unwrap();
        let m = cases.iter().find(|c| c.method_name == "m").unwrap();
        assert_eq!(m.context.excluded_methods, vec!["m", "p"]);
        assert!(!m.context.enriched.contains("def p("));
        assert!(!m.context.enriched.contains("def m("));
        assert!(m.context.enriched.contains("def q("));
    }

    #[test]
    fn method_without_callers_keeps_all_others() {
        let cases = derive_cases(&five_method_unit()).unwrap();
        let q = cases.iter().find(|c| c.method_name == "q").unwrap();
        assert_eq!(q.context.excluded_methods, vec!["q"]);
        for other in ["add", "m", "p", "r", "__init__"] {
            assert!(q.context.enriched.contains(&format!("def {other}(")), "{other}");
            assert!(q.context.skeleton.contains(&format!("def {other}(")), "{other}");
        }
    }

    #[test]
    fn skeleton_drops_bodies_but_keeps_constructor() {
        let cases = derive_cases(&five_method_unit()).unwrap();
        let q = &cases[3];
        assert!(q.context.skeleton.contains("\"\"\"Sum of entries.\"\"\""));
        assert!(!q.context.skeleton.contains("return sum"));
        assert!(q.context.skeleton.contains("self.entries = []"));
        assert!(q.context.fields_decl.contains("self.entries = []"));
        parse_source(&q.context.skeleton).unwrap();
        parse_source(&q.context.enriched).unwrap();
    }

    #[test]
    fn derivation_is_deterministic() {
        let unit = five_method_unit();
        assert_eq!(derive_cases(&unit).unwrap(), derive_cases(&unit).unwrap());
    }

    #[test]
    fn empty_array_loads_nothing() {
        let b = parse_benchmark(b"[]", LoadMode::Strict).unwrap();
        assert!(b.units.is_empty());
    }

    #[test]
    fn truncated_class_names_its_id() {
        let mut unit = five_method_unit();
        unit.source = "class Ledger:\n    def add(self, amount:\n".into();
        let json = serde_json::to_vec(&vec![unit]).unwrap();
        let err = parse_benchmark(&json, LoadMode::Strict).unwrap_err();
        assert!(err.to_string().contains("Ledger_0"), "{err}");
        let lenient = parse_benchmark(&json, LoadMode::Lenient).unwrap();
        assert!(lenient.units.is_empty());
        assert_eq!(lenient.rejected[0].0, "Ledger_0");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let unit = five_method_unit();
        let json = serde_json::to_vec(&vec![unit.clone(), unit]).unwrap();
        assert!(matches!(parse_benchmark(&json, LoadMode::Lenient), Err(DatasetError::DuplicateClass(_))));
    }

    #[test]
    fn attach_snippet_rules() {
        let case = derive_cases(&five_method_unit()).unwrap().remove(0);
        let with = attach_snippet(&case, "def add(self, x):\n    return x\n").unwrap();
        assert_eq!(with.retrieved_snippet, "def add(self, x):\n    return x\n");
        assert!(case.retrieved_snippet.is_empty());
        assert!(matches!(attach_snippet(&case, ""), Err(DatasetError::EmptySnippet)));
        let fenced = "Here is the code:\n```python\ndef add(self, x):\n    return x\n```\nHope it helps.";
        assert!(attach_snippet(&case, fenced).is_err());
        let stripped = crate::orchestrator::extract_code_block(fenced);
        assert!(attach_snippet(&case, &stripped).is_ok());
    }

    #[test]
    fn requirement_has_signature_and_docstring() {
        let spec = MethodSpec {
            name: "f".into(),
            signature: "def f(self, x):".into(),
            docstring: "Do it.\n:param x: int".into(),
            canonical_solution: String::new(),
            test_source: None,
        };
        assert_eq!(
            requirement_text(&spec),
            "def f(self, x):\n    \"\"\"\n    Do it.\n    :param x: int\n    \"\"\""
        );
    }
}
