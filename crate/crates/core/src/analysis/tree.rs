//! Grammar-backed syntax trees for the subject language (Python).
//!
//! Trees are built from the tree-sitter concrete syntax tree with comments
//! dropped. Anonymous tokens (keywords, operators, punctuation) become leaves
//! of kind [`TOKEN_KIND`] labelled with their text, so an operator swap is a
//! label update rather than a kind change.

use std::cell::RefCell;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kind assigned to anonymous grammar tokens.
pub const TOKEN_KIND: &str = "token";

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxNode {
    pub kind: String,
    /// Token text for leaves, empty for interior nodes.
    pub label: String,
    pub span: Range<usize>,
    /// Grammar field through which the parent reaches this node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub children: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<NodeId>,
    /// Set on `ERROR` nodes and on tokens the parser had to invent.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub error: bool,
}

/// Rooted ordered labelled tree. Node 0 is the root; ids follow pre-order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxTree {
    pub nodes: Vec<SyntaxNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}")]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, in bytes.
    pub column: usize,
    pub byte: usize,
}

thread_local! {
    static PARSER: RefCell<tree_sitter::Parser> = RefCell::new({
        let mut parser = tree_sitter::Parser::new();
        parser
            .set_language(&tree_sitter_python::LANGUAGE.into())
            .expect("python grammar is ABI compatible");
        parser
    });
}

/// Parses `text`, failing on the first syntax error.
pub fn parse_source(text: &str) -> Result<SyntaxTree, ParseError> {
    let tree = parse_recovering(text);
    match tree.first_error() {
        Some(id) => Err(ParseError::at(text, tree.nodes[id].span.start)),
        None => Ok(tree),
    }
}

/// Parses `text`, keeping error nodes in the tree instead of failing.
pub fn parse_recovering(text: &str) -> SyntaxTree {
    let ts_tree = PARSER.with(|p| p.borrow_mut().parse(text, None));
    let Some(ts_tree) = ts_tree else {
        return SyntaxTree::empty_module(text.len());
    };
    let mut nodes = Vec::new();
    build(ts_tree.root_node(), None, None, text, &mut nodes);
    SyntaxTree { nodes }
}

fn build(
    node: tree_sitter::Node<'_>,
    field: Option<&str>,
    parent: Option<NodeId>,
    text: &str,
    out: &mut Vec<SyntaxNode>,
) -> Option<NodeId> {
    if node.kind() == "comment" {
        return None;
    }
    let id = out.len();
    // String bodies with escapes have children; their text is kept whole.
    let is_leaf = node.child_count() == 0 || node.kind() == "string_content";
    let kind = if node.is_error() {
        "ERROR".to_string()
    } else if node.is_named() {
        node.kind().to_string()
    } else {
        TOKEN_KIND.to_string()
    };
    let label = if is_leaf {
        if node.is_missing() {
            node.kind().to_string()
        } else {
            text[node.byte_range()].to_string()
        }
    } else {
        String::new()
    };
    out.push(SyntaxNode {
        kind,
        label,
        span: node.byte_range(),
        field: field.map(str::to_string),
        children: Vec::new(),
        parent,
        error: node.is_error() || node.is_missing(),
    });
    let mut cursor = node.walk();
    let mut children = Vec::new();
    if !is_leaf && cursor.goto_first_child() {
        loop {
            let child = cursor.node();
            if let Some(cid) = build(child, cursor.field_name(), Some(id), text, out) {
                children.push(cid);
            }
            if !cursor.goto_next_sibling() {
                break;
            }
        }
    }
    out[id].children = children;
    Some(id)
}

impl ParseError {
    fn at(text: &str, byte: usize) -> Self {
        let byte = byte.min(text.len());
        let before = &text[..byte];
        let line = before.matches('\n').count() + 1;
        let column = byte - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        ParseError { line, column, byte }
    }
}

impl SyntaxTree {
    fn empty_module(len: usize) -> Self {
        SyntaxTree {
            nodes: vec![SyntaxNode {
                kind: "module".into(),
                label: String::new(),
                span: 0..len,
                field: None,
                children: Vec::new(),
                parent: None,
                error: false,
            }],
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &SyntaxNode {
        &self.nodes[id]
    }

    pub fn kind(&self, id: NodeId) -> &str {
        &self.nodes[id].kind
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    /// First child reached through grammar field `name`.
    pub fn child_by_field(&self, id: NodeId, name: &str) -> Option<NodeId> {
        self.nodes[id]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].field.as_deref() == Some(name))
    }

    pub fn children_by_field<'a>(
        &'a self,
        id: NodeId,
        name: &'a str,
    ) -> impl Iterator<Item = NodeId> + 'a {
        self.nodes[id]
            .children
            .iter()
            .copied()
            .filter(move |&c| self.nodes[c].field.as_deref() == Some(name))
    }

    pub fn text<'s>(&self, id: NodeId, source: &'s str) -> &'s str {
        &source[self.nodes[id].span.clone()]
    }

    /// Pre-order traversal of the subtree rooted at `id`.
    pub fn preorder(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    pub fn postorder(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![(id, false)];
        while let Some((n, expanded)) = stack.pop() {
            if expanded {
                out.push(n);
            } else {
                stack.push((n, true));
                stack.extend(self.nodes[n].children.iter().rev().map(|&c| (c, false)));
            }
        }
        out
    }

    pub fn leaves(&self) -> impl Iterator<Item = &SyntaxNode> {
        self.preorder(self.root())
            .into_iter()
            .map(|id| &self.nodes[id])
            .filter(|n| n.children.is_empty())
            .collect::<Vec<_>>()
            .into_iter()
    }

    pub fn first_error(&self) -> Option<NodeId> {
        self.preorder(self.root())
            .into_iter()
            .find(|&id| self.nodes[id].error)
    }

    pub fn has_error(&self) -> bool {
        self.nodes.iter().any(|n| n.error)
    }

    /// Every node whose kind is `kind`, in pre-order.
    pub fn find_kind(&self, kind: &str) -> Vec<NodeId> {
        self.preorder(self.root())
            .into_iter()
            .filter(|&id| self.nodes[id].kind == kind)
            .collect()
    }

    /// Ordered structural equality of the subtrees at `a` and `b`.
    pub fn isomorphic(&self, a: NodeId, other: &SyntaxTree, b: NodeId) -> bool {
        let (x, y) = (&self.nodes[a], &other.nodes[b]);
        x.kind == y.kind
            && x.label == y.label
            && x.children.len() == y.children.len()
            && x
                .children
                .iter()
                .zip(&y.children)
                .all(|(&c, &d)| self.isomorphic(c, other, d))
    }

    /// S-expression over kinds and labels, for debugging and snapshots.
    pub fn to_sexp(&self) -> String {
        let mut out = String::new();
        self.write_sexp(self.root(), &mut out);
        out
    }

    fn write_sexp(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        out.push('(');
        out.push_str(&n.kind);
        if !n.label.is_empty() {
            out.push(' ');
            out.push_str(&format!("{:?}", n.label));
        }
        for &c in &n.children {
            out.push(' ');
            self.write_sexp(c, out);
        }
        out.push(')');
    }
}

impl fmt::Display for SyntaxTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sexp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_function() {
        let tree = parse_source("def f():\n    return 1").unwrap();
        assert_eq!(tree.kind(tree.root()), "module");
        assert_eq!(tree.find_kind("function_definition").len(), 1);
    }

    #[test]
    fn empty_input_is_empty_module() {
        let tree = parse_source("").unwrap();
        assert_eq!(tree.kind(0), "module");
        assert!(tree.children(0).is_empty());
    }

    #[test]
    fn malformed_parameter_list_fails_on_line_one() {
        let err = parse_source("def f(:").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.column >= 6, "column {}", err.column);
    }

    #[test]
    fn recovering_parse_keeps_error_nodes() {
        let tree = parse_recovering("def f(:");
        assert!(tree.has_error());
    }

    #[test]
    fn comments_are_dropped() {
        let a = parse_source("x = 1  # one\n").unwrap();
        let b = parse_source("x = 1\n").unwrap();
        assert!(a.isomorphic(0, &b, 0));
    }

    #[test]
    fn spans_nest_and_leaves_cover_source_tokens() {
        let src = "class A:\n    def f(self, x):\n        return self.g(x) + 1\n";
        let tree = parse_source(src).unwrap();
        for (id, n) in tree.nodes.iter().enumerate() {
            for &c in &n.children {
                let cs = &tree.nodes[c].span;
                assert!(n.span.start <= cs.start && cs.end <= n.span.end, "node {id}");
            }
        }
        let joined: String = tree.leaves().map(|l| l.label.as_str()).collect();
        let stripped: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(joined, stripped);
    }

    #[test]
    fn operator_tokens_share_a_kind() {
        let tree = parse_source("a - b").unwrap();
        let minus = tree.leaves().find(|l| l.label == "-").unwrap();
        assert_eq!(minus.kind, TOKEN_KIND);
    }
}
