use thiserror::Error;

use super::ErrorCategory;
use crate::analysis::{dedent, parse_source, ClassModel, NodeId, SyntaxTree};
use crate::dataset::AdaptationCase;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssemblyError {
    #[error("adapted code is empty")]
    Empty,
    #[error("adapted code does not parse: {0}")]
    Syntax(String),
    #[error("class context is unusable: {0}")]
    Context(String),
}

impl AssemblyError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            AssemblyError::Syntax(_) => ErrorCategory::SyntaxError,
            AssemblyError::Empty | AssemblyError::Context(_) => ErrorCategory::Other,
        }
    }
}

fn definition(tree: &SyntaxTree, id: NodeId) -> NodeId {
    if tree.kind(id) == "decorated_definition" {
        tree.child_by_field(id, "definition").unwrap_or(id)
    } else {
        id
    }
}

fn def_name<'s>(tree: &SyntaxTree, id: NodeId, src: &'s str) -> Option<&'s str> {
    let def = definition(tree, id);
    (tree.kind(def) == "function_definition")
        .then(|| tree.child_by_field(def, "name"))
        .flatten()
        .map(|n| tree.text(n, src))
}

/// Whole lines of `src` covering node `id`.
fn lines_of<'s>(tree: &SyntaxTree, id: NodeId, src: &'s str) -> &'s str {
    let span = &tree.node(id).span;
    let start = src[..span.start].rfind('\n').map_or(0, |i| i + 1);
    &src[start..span.end]
}

fn indent_block(text: &str, indent: &str) -> String {
    text.lines()
        .map(|l| if l.trim().is_empty() { String::new() } else { format!("{indent}{l}") })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits adapted code into (hoisted imports, module-level helpers, the
/// method text flush-left).
fn split_adaptation(code: &str, target: &str) -> Result<(Vec<String>, Vec<String>, String), AssemblyError> {
    let src = dedent(code);
    let tree = parse_source(&src).map_err(|e| AssemblyError::Syntax(e.to_string()))?;
    let root = tree.root();
    let mut imports = Vec::new();
    let mut others = Vec::new();
    let mut funcs = Vec::new();
    let mut method = None;
    for &c in tree.children(root) {
        match tree.kind(definition(&tree, c)) {
            "import_statement" | "import_from_statement" | "future_import_statement" => {
                imports.push(lines_of(&tree, c, &src).trim().to_string());
            }
            "class_definition" if method.is_none() => {
                let body = tree.child_by_field(definition(&tree, c), "body");
                let inner = body.into_iter().flat_map(|b| tree.children(b).iter().copied()).find(|&m| def_name(&tree, m, &src) == Some(target));
                match inner {
                    Some(m) => method = Some(dedent(lines_of(&tree, m, &src))),
                    None => others.push(lines_of(&tree, c, &src).to_string()),
                }
            }
            "function_definition" => funcs.push(c),
            _ => others.push(lines_of(&tree, c, &src).to_string()),
        }
    }
    if method.is_none() {
        let pick = funcs
            .iter()
            .copied()
            .find(|&f| def_name(&tree, f, &src) == Some(target))
            .or_else(|| funcs.first().copied())
            .ok_or_else(|| AssemblyError::Syntax("no method definition in adapted code".into()))?;
        method = Some(lines_of(&tree, pick, &src).to_string());
        funcs.retain(|&f| f != pick);
    }
    others.extend(funcs.into_iter().map(|f| lines_of(&tree, f, &src).to_string()));
    Ok((imports, others, method.expect("set above")))
}

/// Canonical class with the target method replaced by `adapted_code`,
/// preceded by the import block and any imports the adaptation added.
pub fn assemble_program(case: &AdaptationCase, adapted_code: &str) -> Result<String, AssemblyError> {
    if adapted_code.trim().is_empty() {
        return Err(AssemblyError::Empty);
    }
    let (imports, helpers, method) = split_adaptation(adapted_code, &case.method_name)?;
    let model = ClassModel::parse(&case.class_source, Some(&case.method_name)).map_err(|e| AssemblyError::Context(e.to_string()))?;
    let info = model
        .method(&case.method_name)
        .ok_or_else(|| AssemblyError::Context(format!("`{}` not in class", case.method_name)))?;
    let range = model.line_range(&info.span);
    let trailing_blank = case.class_source[info.span.end..range.end].matches('\n').count() > 1;
    let mut replacement = indent_block(method.trim_end(), &model.member_indent);
    replacement.push('\n');
    if trailing_blank {
        replacement.push('\n');
    }
    let mut class = case.class_source.clone();
    class.replace_range(range, &replacement);

    let mut out = String::new();
    let mut header: Vec<&str> = case.import_block.lines().filter(|l| !l.trim().is_empty()).collect();
    for imp in &imports {
        if !header.iter().any(|h| h.trim() == imp) {
            header.push(imp);
        }
    }
    for h in &header {
        out.push_str(h);
        out.push('\n');
    }
    if !header.is_empty() {
        out.push('\n');
    }
    for h in &helpers {
        out.push_str(h.trim_end());
        out.push_str("\n\n");
    }
    out.push_str(class.trim_end());
    out.push('\n');
    parse_source(&out).map_err(|e| AssemblyError::Syntax(e.to_string()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassContext;

    fn case() -> AdaptationCase {
        AdaptationCase {
            case_id: "K.area".into(),
            class_id: "K".into(),
            method_name: "area".into(),
            requirement: String::new(),
            retrieved_snippet: String::new(),
            context: ClassContext {
                skeleton: String::new(),
                enriched: String::new(),
                fields_decl: String::new(),
                excluded_methods: vec![],
            },
            canonical_solution: String::new(),
            test_source: String::new(),
            import_block: "import math\n".into(),
            class_source: "class K:\n    def __init__(self, r):\n        self.r = r\n\n    def area(self):\n        return math.pi * self.r ** 2\n\n    def twice(self):\n        return 2 * self.area()\n".into(),
        }
    }

    #[test]
    fn replaces_in_place() {
        let out = assemble_program(&case(), "    def area(self):\n        return 1.0\n").unwrap();
        assert_eq!(
            out,
            "import math\n\nclass K:\n    def __init__(self, r):\n        self.r = r\n\n    def area(self):\n        return 1.0\n\n    def twice(self):\n        return 2 * self.area()\n"
        );
    }

    #[test]
    fn flush_left_method_is_reindented() {
        let out = assemble_program(&case(), "def area(self):\n    return self.r\n").unwrap();
        assert!(out.contains("\n    def area(self):\n        return self.r\n"));
        parse_source(&out).unwrap();
    }

    #[test]
    fn imports_are_hoisted_and_class_wrappers_unwrapped() {
        let code = "import cmath\nimport math\n\nclass K:\n    def other(self):\n        pass\n\n    def area(self):\n        return cmath.pi\n";
        let out = assemble_program(&case(), code).unwrap();
        assert!(out.starts_with("import math\nimport cmath\n\nclass K:"));
        assert!(out.contains("        return cmath.pi\n"));
        assert!(!out.contains("def other"));
    }

    #[test]
    fn helpers_stay_at_module_level() {
        let code = "def helper(x):\n    return x\n\ndef area(self):\n    return helper(self.r)\n";
        let out = assemble_program(&case(), code).unwrap();
        assert!(out.contains("import math\n\ndef helper(x):\n    return x\n\nclass K:"));
        assert!(out.contains("    def area(self):\n        return helper(self.r)\n"));
    }

    #[test]
    fn syntax_and_empty_errors() {
        let e = assemble_program(&case(), "def f(:").unwrap_err();
        assert!(matches!(e, AssemblyError::Syntax(_)));
        assert_eq!(e.category(), ErrorCategory::SyntaxError);
        assert_eq!(assemble_program(&case(), "  \n").unwrap_err(), AssemblyError::Empty);
    }

    #[test]
    fn last_method_replacement() {
        let mut c = case();
        c.method_name = "twice".into();
        let out = assemble_program(&c, "def twice(self):\n    return 0\n").unwrap();
        assert!(out.ends_with("    def twice(self):\n        return 0\n"));
    }
}
