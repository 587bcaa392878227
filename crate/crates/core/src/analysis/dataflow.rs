//! Intraprocedural def-use extraction.
//!
//! Flow is approximate: straight-line code uses last-definition-wins, the
//! definitions reaching the end of each branch of a conditional are merged,
//! and loop bodies are visited once. There is no alias analysis; attribute
//! and subscript targets are reads of their base object, not definitions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tree::{NodeId, SyntaxTree};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFlowGraph {
    /// `(def_site, use_site)` pairs over identifier nodes.
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

impl DataFlowGraph {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

type Env = BTreeMap<String, BTreeSet<NodeId>>;

pub fn extract_dataflow(tree: &SyntaxTree) -> DataFlowGraph {
    let mut walker = Walker {
        tree,
        edges: BTreeSet::new(),
    };
    let mut env = Env::new();
    walker.block(tree.root(), &mut env);
    DataFlowGraph { edges: walker.edges }
}

fn merge(into: &mut Env, other: &Env) {
    for (name, defs) in other {
        into.entry(name.clone()).or_default().extend(defs);
    }
}

struct Walker<'t> {
    tree: &'t SyntaxTree,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl Walker<'_> {
    fn kind(&self, id: NodeId) -> &str {
        self.tree.kind(id)
    }

    fn label(&self, id: NodeId) -> &str {
        &self.tree.node(id).label
    }

    fn named_children(&self, id: NodeId) -> Vec<NodeId> {
        self.tree
            .children(id)
            .iter()
            .copied()
            .filter(|&c| self.kind(c) != super::tree::TOKEN_KIND)
            .collect()
    }

    fn block(&mut self, id: NodeId, env: &mut Env) {
        for c in self.named_children(id) {
            self.statement(c, env);
        }
    }

    fn define(&self, id: NodeId, env: &mut Env) {
        env.insert(self.label(id).to_string(), BTreeSet::from([id]));
    }

    fn use_site(&mut self, id: NodeId, env: &Env) {
        if let Some(defs) = env.get(self.label(id)) {
            for &d in defs {
                self.edges.insert((d, id));
            }
        }
    }

    fn statement(&mut self, id: NodeId, env: &mut Env) {
        let t = self.tree;
        match self.kind(id) {
            "function_definition" => self.function(id, env),
            "decorated_definition" => {
                for c in self.named_children(id) {
                    if self.kind(c) == "decorator" {
                        self.expr(c, env);
                    } else {
                        self.statement(c, env);
                    }
                }
            }
            "class_definition" => {
                if let Some(sc) = t.child_by_field(id, "superclasses") {
                    self.expr(sc, env);
                }
                if let Some(body) = t.child_by_field(id, "body") {
                    // Class bodies are their own scope.
                    let mut inner = env.clone();
                    self.block(body, &mut inner);
                }
            }
            "if_statement" => {
                if let Some(cond) = t.child_by_field(id, "condition") {
                    self.expr(cond, env);
                }
                let before = env.clone();
                let mut after = Env::new();
                let mut has_else = false;
                if let Some(body) = t.child_by_field(id, "consequence") {
                    let mut branch = before.clone();
                    self.block(body, &mut branch);
                    merge(&mut after, &branch);
                }
                for alt in t.children_by_field(id, "alternative").collect::<Vec<_>>() {
                    let mut branch = before.clone();
                    if self.kind(alt) == "elif_clause" {
                        if let Some(cond) = t.child_by_field(alt, "condition") {
                            self.expr(cond, &mut branch);
                        }
                        if let Some(body) = t.child_by_field(alt, "consequence") {
                            self.block(body, &mut branch);
                        }
                    } else {
                        has_else = true;
                        if let Some(body) = t.child_by_field(alt, "body") {
                            self.block(body, &mut branch);
                        }
                    }
                    merge(&mut after, &branch);
                }
                if !has_else {
                    merge(&mut after, &before);
                }
                *env = after;
            }
            "for_statement" => {
                if let Some(right) = t.child_by_field(id, "right") {
                    self.expr(right, env);
                }
                let before = env.clone();
                let mut body_env = env.clone();
                if let Some(left) = t.child_by_field(id, "left") {
                    self.target(left, &mut body_env);
                }
                if let Some(body) = t.child_by_field(id, "body") {
                    self.block(body, &mut body_env);
                }
                let mut after = before;
                merge(&mut after, &body_env);
                if let Some(alt) = t.child_by_field(id, "alternative") {
                    self.block_of(alt, &mut after);
                }
                *env = after;
            }
            "while_statement" => {
                if let Some(cond) = t.child_by_field(id, "condition") {
                    self.expr(cond, env);
                }
                let mut body_env = env.clone();
                if let Some(body) = t.child_by_field(id, "body") {
                    self.block(body, &mut body_env);
                }
                merge(env, &body_env);
                if let Some(alt) = t.child_by_field(id, "alternative") {
                    self.block_of(alt, env);
                }
            }
            "try_statement" => {
                let before = env.clone();
                let mut after = before.clone();
                if let Some(body) = t.child_by_field(id, "body") {
                    self.block(body, &mut after);
                }
                let body_end = after.clone();
                for c in self.named_children(id) {
                    match self.kind(c) {
                        "except_clause" | "except_group_clause" => {
                            let mut branch = before.clone();
                            merge(&mut branch, &body_end);
                            for part in self.named_children(c) {
                                match self.kind(part) {
                                    "block" => self.block(part, &mut branch),
                                    "as_pattern" => self.as_pattern(part, &mut branch),
                                    _ => self.expr(part, &mut branch),
                                }
                            }
                            merge(&mut after, &branch);
                        }
                        "else_clause" => {
                            let mut branch = body_end.clone();
                            self.block_of(c, &mut branch);
                            merge(&mut after, &branch);
                        }
                        "finally_clause" => self.block_of(c, &mut after),
                        _ => {}
                    }
                }
                *env = after;
            }
            "with_statement" => {
                for c in self.named_children(id) {
                    match self.kind(c) {
                        "with_clause" => {
                            for item in self.named_children(c) {
                                for part in self.named_children(item) {
                                    if self.kind(part) == "as_pattern" {
                                        self.as_pattern(part, env);
                                    } else {
                                        self.expr(part, env);
                                    }
                                }
                            }
                        }
                        "block" => self.block(c, env),
                        _ => {}
                    }
                }
            }
            "expression_statement" => {
                for c in self.named_children(id) {
                    self.statement_expr(c, env);
                }
            }
            "global_statement" | "nonlocal_statement" | "import_statement" | "import_from_statement"
            | "future_import_statement" | "pass_statement" | "break_statement" | "continue_statement" => {}
            "block" | "module" => self.block(id, env),
            _ => self.expr(id, env),
        }
    }

    /// Visits the `block` inside an else/finally-style clause.
    fn block_of(&mut self, clause: NodeId, env: &mut Env) {
        for c in self.named_children(clause) {
            if self.kind(c) == "block" {
                self.block(c, env);
            }
        }
    }

    fn statement_expr(&mut self, id: NodeId, env: &mut Env) {
        let t = self.tree;
        match self.kind(id) {
            "assignment" => {
                if let Some(right) = t.child_by_field(id, "right") {
                    if self.kind(right) == "assignment" {
                        self.statement_expr(right, env);
                    } else {
                        self.expr(right, env);
                    }
                }
                if let Some(ty) = t.child_by_field(id, "type") {
                    self.expr(ty, env);
                }
                if let Some(left) = t.child_by_field(id, "left") {
                    self.target(left, env);
                }
            }
            "augmented_assignment" => {
                if let Some(right) = t.child_by_field(id, "right") {
                    self.expr(right, env);
                }
                if let Some(left) = t.child_by_field(id, "left") {
                    if self.kind(left) == "identifier" {
                        self.use_site(left, env);
                        self.define(left, env);
                    } else {
                        self.expr(left, env);
                    }
                }
            }
            _ => self.expr(id, env),
        }
    }

    fn function(&mut self, id: NodeId, env: &mut Env) {
        let t = self.tree;
        if let Some(params) = t.child_by_field(id, "parameters") {
            // Defaults evaluate in the enclosing scope.
            for p in self.named_children(params) {
                if let Some(v) = t.child_by_field(p, "value") {
                    self.expr(v, env);
                }
            }
        }
        if let Some(rt) = t.child_by_field(id, "return_type") {
            self.expr(rt, env);
        }
        let mut inner = env.clone();
        if let Some(params) = t.child_by_field(id, "parameters") {
            self.parameters(params, &mut inner);
        }
        if let Some(body) = t.child_by_field(id, "body") {
            self.block(body, &mut inner);
        }
        if let Some(name) = t.child_by_field(id, "name") {
            self.define(name, env);
        }
    }

    fn parameters(&mut self, params: NodeId, env: &mut Env) {
        let t = self.tree;
        for p in self.named_children(params) {
            match self.kind(p) {
                "identifier" => self.define(p, env),
                "default_parameter" | "typed_default_parameter" => {
                    if let Some(n) = t.child_by_field(p, "name") {
                        self.define(n, env);
                    }
                }
                "typed_parameter" | "list_splat_pattern" | "dictionary_splat_pattern" => {
                    if let Some(n) = self.named_children(p).into_iter().find(|&c| self.kind(c) == "identifier") {
                        self.define(n, env);
                    } else if let Some(inner) = self.named_children(p).first().copied() {
                        self.parameters_one(inner, env);
                    }
                }
                _ => {}
            }
        }
    }

    fn parameters_one(&mut self, p: NodeId, env: &mut Env) {
        if let Some(n) = self.named_children(p).into_iter().find(|&c| self.kind(c) == "identifier") {
            self.define(n, env);
        }
    }

    fn as_pattern(&mut self, id: NodeId, env: &mut Env) {
        let kids = self.named_children(id);
        if let Some((&alias, rest)) = kids.split_last() {
            for &r in rest {
                self.expr(r, env);
            }
            let target = if self.kind(alias) == "as_pattern_target" {
                self.named_children(alias).first().copied().unwrap_or(alias)
            } else {
                alias
            };
            self.target(target, env);
        }
    }

    /// Binding positions: names are defined, anything else is read.
    fn target(&mut self, id: NodeId, env: &mut Env) {
        match self.kind(id) {
            "identifier" => self.define(id, env),
            "pattern_list" | "tuple_pattern" | "list_pattern" | "expression_list" | "tuple" | "list" => {
                for c in self.named_children(id) {
                    self.target(c, env);
                }
            }
            "list_splat_pattern" | "parenthesized_expression" | "list_splat" => {
                for c in self.named_children(id) {
                    self.target(c, env);
                }
            }
            _ => self.expr(id, env),
        }
    }

    fn expr(&mut self, id: NodeId, env: &mut Env) {
        let t = self.tree;
        match self.kind(id) {
            "identifier" => self.use_site(id, env),
            "attribute" => {
                if let Some(obj) = t.child_by_field(id, "object") {
                    self.expr(obj, env);
                }
            }
            "keyword_argument" => {
                if let Some(v) = t.child_by_field(id, "value") {
                    self.expr(v, env);
                }
            }
            "named_expression" => {
                if let Some(v) = t.child_by_field(id, "value") {
                    self.expr(v, env);
                }
                if let Some(n) = t.child_by_field(id, "name") {
                    self.define(n, env);
                }
            }
            "lambda" => {
                let mut inner = env.clone();
                if let Some(params) = t.child_by_field(id, "parameters") {
                    self.parameters(params, &mut inner);
                }
                if let Some(body) = t.child_by_field(id, "body") {
                    self.expr(body, &mut inner);
                }
            }
            "list_comprehension" | "set_comprehension" | "dictionary_comprehension" | "generator_expression" => {
                let mut inner = env.clone();
                let kids = self.named_children(id);
                for &c in &kids {
                    match self.kind(c) {
                        "for_in_clause" => {
                            if let Some(right) = t.child_by_field(c, "right") {
                                self.expr(right, &mut inner);
                            }
                            if let Some(left) = t.child_by_field(c, "left") {
                                self.target(left, &mut inner);
                            }
                        }
                        "if_clause" => {
                            for e in self.named_children(c) {
                                self.expr(e, &mut inner);
                            }
                        }
                        _ => {}
                    }
                }
                if let Some(body) = t.child_by_field(id, "body") {
                    self.expr(body, &mut inner);
                }
            }
            "assignment" | "augmented_assignment" => self.statement_expr(id, env),
            "string" | "integer" | "float" | "true" | "false" | "none" | "ellipsis" => {
                for c in self.named_children(id) {
                    if self.kind(c) == "interpolation" {
                        self.expr(c, env);
                    }
                }
            }
            _ => {
                for c in self.named_children(id) {
                    if matches!(self.kind(c), "block") {
                        self.block(c, env);
                    } else {
                        self.statement(c, env);
                    }
                }
            }
        }
    }
}
