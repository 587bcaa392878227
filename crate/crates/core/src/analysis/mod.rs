//! Parsing and program analysis of Python sources.

pub mod class;
pub mod dataflow;
pub mod deps;
pub mod diff;
pub mod tree;

pub use class::{ClassError, ClassModel, Diagnostic, MethodInfo};
pub use dataflow::{extract_dataflow, DataFlowGraph};
pub use deps::{dedent, extract_dependencies, imported_names, DependencyReport, DependencySet};
pub use diff::{apply_script, tree_edit_distance, Edit, EditScript, EDIT_MODEL_VERSION};
pub use tree::{parse_recovering, parse_source, NodeId, ParseError, SyntaxNode, SyntaxTree};
