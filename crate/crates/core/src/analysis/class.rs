//! Structure of a single Python class: its methods, fields and the
//! intra-class call graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tree::{parse_source, NodeId, ParseError, SyntaxTree, TOKEN_KIND};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("no class definition found")]
    NoClass,
    #[error("method `{0}` is not defined in class `{1}`")]
    UnknownMethod(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub name: String,
    /// Byte range of the whole definition including decorators.
    pub span: Range<usize>,
    /// Byte range from the first decorator/`def` up to the body.
    pub header: Range<usize>,
    /// Byte range of the docstring statement, when present.
    pub docstring: Option<Range<usize>>,
    pub body: Range<usize>,
    pub is_constructor: bool,
}

/// A diagnostic raised while analysing calls or dependencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub method: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ClassModel {
    pub source: String,
    pub tree: SyntaxTree,
    pub name: String,
    pub class_span: Range<usize>,
    /// Indentation of members, e.g. four spaces.
    pub member_indent: String,
    pub methods: Vec<MethodInfo>,
    /// Names assigned through `self.<name> = ...` anywhere, plus class-level
    /// assignments.
    pub fields: BTreeSet<String>,
    /// Byte ranges of class-level statements that are not methods.
    pub class_statements: Vec<Range<usize>>,
    /// caller -> callees, over method names.
    pub calls: BTreeMap<String, BTreeSet<String>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ClassModel {
    /// Analyses the first class in `source`, or the first one defining
    /// `containing` when given.
    pub fn parse(source: &str, containing: Option<&str>) -> Result<Self, ClassError> {
        let tree = parse_source(source)?;
        let classes = tree.find_kind("class_definition");
        let class = classes
            .iter()
            .copied()
            .find(|&c| match containing {
                Some(m) => method_nodes(&tree, c)
                    .iter()
                    .any(|&(_, f)| name_of(&tree, f, source) == m),
                None => true,
            })
            .or_else(|| classes.first().copied())
            .ok_or(ClassError::NoClass)?;
        let name = tree
            .child_by_field(class, "name")
            .map(|n| tree.text(n, source).to_string())
            .unwrap_or_default();
        let body = tree.child_by_field(class, "body").ok_or(ClassError::NoClass)?;
        let member_indent = indent_at(source, tree.node(body).span.start);

        let mut methods = Vec::new();
        let mut class_statements = Vec::new();
        let mut fields = BTreeSet::new();
        for &stmt in tree.children(body) {
            let inner = unwrap_decorated(&tree, stmt);
            if tree.kind(inner) == "function_definition" {
                methods.push(method_info(&tree, stmt, inner, source));
            } else {
                class_statements.push(tree.node(stmt).span.clone());
                if tree.kind(stmt) == "expression_statement" {
                    for &c in tree.children(stmt) {
                        if tree.kind(c) == "assignment" {
                            collect_names(&tree, tree.child_by_field(c, "left"), source, &mut fields);
                        }
                    }
                }
            }
        }
        let method_names: BTreeSet<String> = methods.iter().map(|m| m.name.clone()).collect();

        let mut calls = BTreeMap::new();
        let mut diagnostics = Vec::new();
        for &(_, func) in &method_nodes(&tree, class) {
            let mname = name_of(&tree, func, source).to_string();
            let mut callees = BTreeSet::new();
            for id in tree.preorder(func) {
                match tree.kind(id) {
                    "attribute" => {
                        let (Some(obj), Some(attr)) =
                            (tree.child_by_field(id, "object"), tree.child_by_field(id, "attribute"))
                        else {
                            continue;
                        };
                        let base = tree.text(obj, source);
                        let attr = tree.text(attr, source);
                        let qualified = base == "self" || base == "cls" || base == name;
                        if !qualified {
                            continue;
                        }
                        if method_names.contains(attr) {
                            callees.insert(attr.to_string());
                        } else if base == "self" && is_store(&tree, id) {
                            fields.insert(attr.to_string());
                        }
                    }
                    "call" => {
                        let Some(f) = tree.child_by_field(id, "function") else { continue };
                        let fname = tree.text(f, source);
                        if matches!(fname, "getattr" | "setattr" | "hasattr" | "eval" | "exec") {
                            diagnostics.push(Diagnostic {
                                method: mname.clone(),
                                message: format!("dynamic dispatch via `{fname}` is not traced"),
                            });
                        }
                    }
                    _ => {}
                }
            }
            calls.insert(mname, callees);
        }

        Ok(ClassModel {
            source: source.to_string(),
            tree,
            name,
            class_span: 0..0,
            member_indent,
            methods,
            fields,
            class_statements,
            calls,
            diagnostics,
        }
        .with_class_span(class))
    }

    fn with_class_span(mut self, class: NodeId) -> Self {
        self.class_span = self.tree.node(class).span.clone();
        self
    }

    pub fn method(&self, name: &str) -> Option<&MethodInfo> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn method_names(&self) -> impl Iterator<Item = &str> {
        self.methods.iter().map(|m| m.name.as_str())
    }

    pub fn method_text(&self, name: &str) -> Option<&str> {
        self.method(name).map(|m| &self.source[m.span.clone()])
    }

    /// Transitive intra-class callers of `target`, excluding `target`.
    pub fn callers(&self, target: &str) -> Result<BTreeSet<String>, ClassError> {
        if self.method(target).is_none() {
            return Err(ClassError::UnknownMethod(target.into(), self.name.clone()));
        }
        let mut reverse: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (caller, callees) in &self.calls {
            for callee in callees {
                reverse.entry(callee.as_str()).or_default().push(caller.as_str());
            }
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([target]);
        while let Some(m) = queue.pop_front() {
            for &caller in reverse.get(m).into_iter().flatten() {
                if caller != target && seen.insert(caller.to_string()) {
                    queue.push_back(caller);
                }
            }
        }
        Ok(seen)
    }

    /// Signature and docstring of a method, with the body dropped.
    pub fn method_stub(&self, m: &MethodInfo) -> String {
        let header = self.source[m.header.clone()].trim_end();
        let indent = indent_at(&self.source, m.body.start);
        match &m.docstring {
            Some(doc) => format!("{header}\n{indent}{}", &self.source[doc.clone()]),
            None => format!("{header}\n{indent}pass"),
        }
    }

    /// Class header line(s) up to the body.
    pub fn class_header(&self) -> &str {
        let class = self.tree.find_kind("class_definition").into_iter().find(|&c| self.tree.node(c).span == self.class_span);
        let body_start = class
            .and_then(|c| self.tree.child_by_field(c, "body"))
            .map(|b| self.tree.node(b).span.start)
            .unwrap_or(self.class_span.end);
        self.source[self.class_span.start..body_start].trim_end()
    }

    /// The class with the listed methods removed.
    pub fn class_without(&self, excluded: &BTreeSet<String>) -> String {
        let mut out = self.source[self.class_span.clone()].to_string();
        let offset = self.class_span.start;
        let mut cuts: Vec<Range<usize>> = self
            .methods
            .iter()
            .filter(|m| excluded.contains(&m.name))
            .map(|m| self.line_range(&m.span))
            .collect();
        cuts.sort_by_key(|r| std::cmp::Reverse(r.start));
        for cut in cuts {
            let start = cut.start.max(offset) - offset;
            let end = (cut.end - offset).min(out.len());
            out.replace_range(start..end, "");
        }
        let trimmed = out.trim_end().to_string();
        if self.methods.iter().all(|m| excluded.contains(&m.name)) && self.class_statements.is_empty() {
            format!("{trimmed}\n{}pass", self.member_indent)
        } else {
            trimmed
        }
    }

    /// Full lines covered by `span`, including the trailing newline and any
    /// blank lines that follow.
    pub fn line_range(&self, span: &Range<usize>) -> Range<usize> {
        let start = line_start(&self.source, span.start);
        let mut end = match self.source[span.end..].find('\n') {
            Some(i) => span.end + i + 1,
            None => self.source.len(),
        };
        while end < self.source.len() {
            let rest = &self.source[end..];
            let line_end = rest.find('\n').map_or(rest.len(), |i| i + 1);
            if rest[..line_end].trim().is_empty() {
                end += line_end;
            } else {
                break;
            }
        }
        start..end
    }
}

fn unwrap_decorated(tree: &SyntaxTree, id: NodeId) -> NodeId {
    if tree.kind(id) == "decorated_definition" {
        tree.child_by_field(id, "definition").unwrap_or(id)
    } else {
        id
    }
}

fn method_nodes(tree: &SyntaxTree, class: NodeId) -> Vec<(NodeId, NodeId)> {
    let Some(body) = tree.child_by_field(class, "body") else {
        return Vec::new();
    };
    tree.children(body)
        .iter()
        .map(|&s| (s, unwrap_decorated(tree, s)))
        .filter(|&(_, f)| tree.kind(f) == "function_definition")
        .collect()
}

fn name_of<'s>(tree: &SyntaxTree, func: NodeId, source: &'s str) -> &'s str {
    tree.child_by_field(func, "name").map_or("", |n| tree.text(n, source))
}

fn method_info(tree: &SyntaxTree, outer: NodeId, func: NodeId, source: &str) -> MethodInfo {
    let name = name_of(tree, func, source).to_string();
    let body = tree.child_by_field(func, "body").expect("function has a body");
    let body_span = tree.node(body).span.clone();
    let docstring = tree.children(body).first().copied().and_then(|first| {
        let is_doc = tree.kind(first) == "expression_statement"
            && tree.children(first).len() == 1
            && tree.kind(tree.children(first)[0]) == "string";
        is_doc.then(|| tree.node(first).span.clone())
    });
    let span = tree.node(outer).span.clone();
    MethodInfo {
        is_constructor: name == "__init__",
        name,
        header: span.start..body_span.start,
        span,
        docstring,
        body: body_span,
    }
}

fn is_store(tree: &SyntaxTree, attr: NodeId) -> bool {
    let mut node = attr;
    while let Some(p) = tree.node(node).parent {
        match tree.kind(p) {
            "assignment" | "augmented_assignment" => {
                return tree.child_by_field(p, "left") == Some(node);
            }
            "pattern_list" | "tuple_pattern" | "list_pattern" => node = p,
            _ => return false,
        }
    }
    false
}

fn collect_names(tree: &SyntaxTree, target: Option<NodeId>, source: &str, out: &mut BTreeSet<String>) {
    let Some(t) = target else { return };
    match tree.kind(t) {
        "identifier" => {
            out.insert(tree.text(t, source).to_string());
        }
        _ => {
            for &c in tree.children(t) {
                if tree.kind(c) != TOKEN_KIND {
                    collect_names(tree, Some(c), source, out);
                }
            }
        }
    }
}

pub(crate) fn line_start(source: &str, at: usize) -> usize {
    source[..at].rfind('\n').map_or(0, |i| i + 1)
}

pub(crate) fn indent_at(source: &str, at: usize) -> String {
    let start = line_start(source, at);
    source[start..]
        .chars()
        .take_while(|c| *c == ' ' || *c == '\t')
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIVE: &str = r#"class Shop:
    def __init__(self):
        self.cart = []
        self.rate = 0.1

    def total(self):
        """Sum of prices."""
        return sum(i['price'] for i in self.cart)

    def discounted(self):
        return self.total() * (1 - self.rate)

    def checkout(self):
        amount = self.discounted()
        self.cart = []
        return amount

    @staticmethod
    def fmt(x):
        return f"{x:.2f}"

    def receipt(self):
        return Shop.fmt(self.total())
"#;

    #[test]
    fn methods_and_fields() {
        let c = ClassModel::parse(FIVE, None).unwrap();
        assert_eq!(c.name, "Shop");
        let names: Vec<&str> = c.method_names().collect();
        assert_eq!(names, ["__init__", "total", "discounted", "checkout", "fmt", "receipt"]);
        assert_eq!(c.fields, BTreeSet::from(["cart".to_string(), "rate".to_string()]));
        assert_eq!(c.member_indent, "    ");
    }

    #[test]
    fn transitive_callers() {
        let c = ClassModel::parse(FIVE, None).unwrap();
        let callers = c.callers("total").unwrap();
        assert_eq!(
            callers,
            BTreeSet::from(["checkout".into(), "discounted".into(), "receipt".into()])
        );
        assert_eq!(c.callers("fmt").unwrap(), BTreeSet::from(["receipt".into()]));
        assert!(c.callers("checkout").unwrap().is_empty());
        assert!(matches!(c.callers("nope"), Err(ClassError::UnknownMethod(..))));
    }

    #[test]
    fn stub_keeps_docstring() {
        let c = ClassModel::parse(FIVE, None).unwrap();
        let stub = c.method_stub(c.method("total").unwrap());
        assert_eq!(stub, "def total(self):\n        \"\"\"Sum of prices.\"\"\"");
        let stub = c.method_stub(c.method("fmt").unwrap());
        assert!(stub.starts_with("@staticmethod\n    def fmt(x):"));
        assert!(stub.ends_with("pass"));
    }

    #[test]
    fn class_without_drops_whole_methods() {
        let c = ClassModel::parse(FIVE, None).unwrap();
        let out = c.class_without(&BTreeSet::from(["total".into(), "fmt".into()]));
        assert!(!out.contains("def total"));
        assert!(!out.contains("staticmethod"));
        assert!(out.contains("def discounted"));
        parse_source(&out).unwrap();
    }

    #[test]
    fn dynamic_calls_are_reported() {
        let src = "class A:\n    def f(self):\n        return getattr(self, 'g')()\n    def g(self):\n        return 1\n";
        let c = ClassModel::parse(src, None).unwrap();
        assert!(c.callers("g").unwrap().is_empty());
        assert_eq!(c.diagnostics.len(), 1);
    }
}
