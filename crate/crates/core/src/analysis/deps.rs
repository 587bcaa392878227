//! Dependencies of a method on imported packages, class fields and other
//! class methods.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::class::{ClassModel, Diagnostic};
use super::tree::{parse_source, ParseError, SyntaxTree};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencySet {
    pub packages: BTreeSet<String>,
    pub fields: BTreeSet<String>,
    pub methods: BTreeSet<String>,
}

impl DependencySet {
    pub fn is_empty(&self) -> bool {
        self.packages.is_empty() && self.fields.is_empty() && self.methods.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyReport {
    pub dependencies: DependencySet,
    pub diagnostics: Vec<Diagnostic>,
}

/// Names bound by the import statements in `import_block`.
pub fn imported_names(import_block: &str) -> Result<BTreeSet<String>, ParseError> {
    let tree = parse_source(import_block)?;
    let mut out = BTreeSet::new();
    for id in tree.preorder(tree.root()) {
        match tree.kind(id) {
            "import_statement" => {
                for name in tree.children_by_field(id, "name") {
                    out.insert(bound_name(&tree, name, import_block, true));
                }
            }
            "import_from_statement" => {
                for name in tree.children_by_field(id, "name") {
                    out.insert(bound_name(&tree, name, import_block, false));
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

fn bound_name(tree: &SyntaxTree, name: usize, src: &str, top_level: bool) -> String {
    if tree.kind(name) == "aliased_import" {
        if let Some(alias) = tree.child_by_field(name, "alias") {
            return tree.text(alias, src).to_string();
        }
    }
    let text = tree.text(name, src);
    if top_level {
        text.split('.').next().unwrap_or(text).to_string()
    } else {
        text.rsplit('.').next().unwrap_or(text).to_string()
    }
}

/// Dependencies referenced by `method_text` given its class and imports.
///
/// `self.<attr>` accesses naming neither a declared field nor a method are
/// dropped and reported as diagnostics.
pub fn extract_dependencies(
    method_text: &str,
    class: &ClassModel,
    import_block: &str,
) -> Result<DependencyReport, ParseError> {
    let source = dedent(method_text);
    let tree = parse_source(&source)?;
    let imports = imported_names(import_block)?;
    let own_name = tree
        .find_kind("function_definition")
        .first()
        .and_then(|&f| tree.child_by_field(f, "name"))
        .map(|n| tree.text(n, &source).to_string());
    let methods: BTreeSet<&str> = class.method_names().collect();

    let mut report = DependencyReport::default();
    let mut unknown = BTreeSet::new();
    let mut locals = BTreeSet::new();
    for id in tree.find_kind("parameters") {
        for n in tree.preorder(id) {
            if tree.kind(n) == "identifier" {
                locals.insert(tree.text(n, &source).to_string());
            }
        }
    }
    for id in tree.preorder(tree.root()) {
        match tree.kind(id) {
            "attribute" => {
                let (Some(obj), Some(attr)) = (tree.child_by_field(id, "object"), tree.child_by_field(id, "attribute")) else {
                    continue;
                };
                let base = tree.text(obj, &source);
                let attr = tree.text(attr, &source);
                let qualified = base == "self" || base == "cls" || base == class.name;
                if !qualified {
                    continue;
                }
                if methods.contains(attr) {
                    if own_name.as_deref() != Some(attr) {
                        report.dependencies.methods.insert(attr.to_string());
                    }
                } else if class.fields.contains(attr) {
                    report.dependencies.fields.insert(attr.to_string());
                } else {
                    unknown.insert(attr.to_string());
                }
            }
            "identifier" => {
                let name = tree.text(id, &source);
                let is_attr_name = tree
                    .node(id)
                    .parent
                    .is_some_and(|p| tree.kind(p) == "attribute" && tree.child_by_field(p, "attribute") == Some(id));
                if !is_attr_name && imports.contains(name) && !locals.contains(name) {
                    report.dependencies.packages.insert(name.to_string());
                }
            }
            _ => {}
        }
    }
    let method = own_name.unwrap_or_default();
    report.diagnostics = unknown
        .into_iter()
        .map(|attr| Diagnostic {
            method: method.clone(),
            message: format!("`self.{attr}` is neither a declared field nor a method"),
        })
        .collect();
    Ok(report)
}

/// Removes the common leading whitespace of all non-blank lines.
pub fn dedent(text: &str) -> String {
    let indent = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let mut out: String = text
        .lines()
        .map(|l| if l.len() >= indent { &l[indent..] } else { l.trim_start() })
        .collect::<Vec<_>>()
        .join("\n");
    if text.ends_with('\n') {
        out.push('\n');
    }
    out
}
