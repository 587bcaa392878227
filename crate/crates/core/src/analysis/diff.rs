//! AST differencing under an insert / delete / update / move edit model.
//!
//! Matching runs in three phases over the two trees:
//!
//! 1. top-down: greedy pairing of isomorphic subtrees of height >= 2,
//!    tallest first; ambiguous candidates are ranked by how well their
//!    parents already agree, then by pre-order position;
//! 2. bottom-up: an unmatched interior node is paired with the same-kind
//!    node whose descendants share the largest fraction of matches (dice
//!    coefficient, threshold 0.5); roots are always paired;
//! 3. recovery: inside every matched pair, remaining children are paired
//!    by longest common subsequence, first on isomorphism, then on
//!    kind + label, then on kind alone.
//!
//! The script is then derived from the matching with the classic
//! breadth-first insert/update/move pass, child alignment by LCS, and a
//! final post-order delete pass. The resulting edit count is the
//! adaptation size. [`EDIT_MODEL_VERSION`] changes whenever any of the
//! above changes the numbers it produces.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tree::{NodeId, SyntaxNode, SyntaxTree};

pub const EDIT_MODEL_VERSION: &str = "gtmatch-1";

const MIN_HEIGHT: usize = 2;
const MIN_DICE: f64 = 0.5;

/// One edit against the source tree. Node ids below the source tree's
/// length refer to its nodes; larger ids are allocated by inserts, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    Insert {
        node: NodeId,
        kind: String,
        label: String,
        parent: NodeId,
        index: usize,
    },
    Delete {
        node: NodeId,
    },
    Update {
        node: NodeId,
        label: String,
    },
    /// The node is detached first; `index` is its position among the new
    /// parent's children after detaching.
    Move {
        node: NodeId,
        parent: NodeId,
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditScript {
    pub edits: Vec<Edit>,
}

impl EditScript {
    pub fn size(&self) -> usize {
        self.edits.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("edit {0} references unknown node {1}")]
    UnknownNode(usize, NodeId),
    #[error("edit {0} inserts node {1} but the next free id is {2}")]
    NonSequentialInsert(usize, NodeId, NodeId),
    #[error("edit {0} deletes node {1}, which still has children")]
    DeleteInterior(usize, NodeId),
    #[error("edit {0} targets the root")]
    RootEdit(usize),
    #[error("edit {0} would move node {1} under its own descendant")]
    CyclicMove(usize, NodeId),
    #[error("edit {0} index {1} out of bounds")]
    BadIndex(usize, usize),
}

/// Computes the edit script transforming `source` into `target`.
pub fn tree_edit_distance(source: &SyntaxTree, target: &SyntaxTree) -> EditScript {
    if source.is_empty() || target.is_empty() {
        return EditScript::default();
    }
    let a = Indexed::new(source);
    let b = Indexed::new(target);
    let mut m = Mapping::new(source.len(), target.len());
    top_down(&a, &b, &mut m);
    bottom_up(&a, &b, &mut m);
    generate_script(source, target, &m)
}

/// Applies `script` to `source`. Kept independent of the generator so it
/// can check it.
pub fn apply_script(source: &SyntaxTree, script: &EditScript) -> Result<SyntaxTree, ApplyError> {
    let mut tree = WorkTree::from_tree(source);
    for (i, edit) in script.edits.iter().enumerate() {
        match edit {
            Edit::Insert {
                node,
                kind,
                label,
                parent,
                index,
            } => {
                if *node != tree.nodes.len() {
                    return Err(ApplyError::NonSequentialInsert(i, *node, tree.nodes.len()));
                }
                tree.check_alive(i, *parent)?;
                if *index > tree.nodes[*parent].children.len() {
                    return Err(ApplyError::BadIndex(i, *index));
                }
                tree.push(kind.clone(), label.clone());
                tree.attach(*node, *parent, *index);
            }
            Edit::Delete { node } => {
                tree.check_alive(i, *node)?;
                if *node == 0 {
                    return Err(ApplyError::RootEdit(i));
                }
                if !tree.nodes[*node].children.is_empty() {
                    return Err(ApplyError::DeleteInterior(i, *node));
                }
                tree.detach(*node);
                tree.nodes[*node].alive = false;
            }
            Edit::Update { node, label } => {
                tree.check_alive(i, *node)?;
                tree.nodes[*node].label = label.clone();
            }
            Edit::Move {
                node,
                parent,
                index,
            } => {
                tree.check_alive(i, *node)?;
                tree.check_alive(i, *parent)?;
                if *node == 0 {
                    return Err(ApplyError::RootEdit(i));
                }
                if tree.is_ancestor_or_self(*node, *parent) {
                    return Err(ApplyError::CyclicMove(i, *node));
                }
                tree.detach(*node);
                if *index > tree.nodes[*parent].children.len() {
                    return Err(ApplyError::BadIndex(i, *index));
                }
                tree.attach(*node, *parent, *index);
            }
        }
    }
    Ok(tree.into_tree())
}

/// Per-node measures used by the matcher.
struct Indexed<'t> {
    tree: &'t SyntaxTree,
    height: Vec<usize>,
    hash: Vec<u64>,
    /// Pre-order rank and subtree size give O(1) descendant tests.
    pre: Vec<usize>,
    size: Vec<usize>,
    order: Vec<NodeId>,
}

impl<'t> Indexed<'t> {
    fn new(tree: &'t SyntaxTree) -> Self {
        let n = tree.len();
        let mut height = vec![1; n];
        let mut hash = vec![0; n];
        let mut size = vec![1; n];
        for id in tree.postorder(tree.root()) {
            let node = &tree.nodes[id];
            let mut h = DefaultHasher::new();
            node.kind.hash(&mut h);
            node.label.hash(&mut h);
            for &c in &node.children {
                height[id] = height[id].max(height[c] + 1);
                size[id] += size[c];
                hash[c].hash(&mut h);
            }
            node.children.len().hash(&mut h);
            hash[id] = h.finish();
        }
        let order = tree.preorder(tree.root());
        let mut pre = vec![0; n];
        for (rank, &id) in order.iter().enumerate() {
            pre[id] = rank;
        }
        Indexed {
            tree,
            height,
            hash,
            pre,
            size,
            order,
        }
    }

    fn node(&self, id: NodeId) -> &SyntaxNode {
        &self.tree.nodes[id]
    }

    fn is_descendant(&self, node: NodeId, of: NodeId) -> bool {
        node != of && self.pre[node] > self.pre[of] && self.pre[node] < self.pre[of] + self.size[of]
    }

    fn descendants(&self, id: NodeId) -> &[NodeId] {
        let start = self.pre[id] + 1;
        &self.order[start..self.pre[id] + self.size[id]]
    }

    fn isomorphic(&self, a: NodeId, other: &Indexed<'_>, b: NodeId) -> bool {
        self.hash[a] == other.hash[b]
            && self.size[a] == other.size[b]
            && self.tree.isomorphic(a, other.tree, b)
    }
}

struct Mapping {
    src: Vec<Option<NodeId>>,
    dst: Vec<Option<NodeId>>,
}

impl Mapping {
    fn new(n: usize, m: usize) -> Self {
        Mapping {
            src: vec![None; n],
            dst: vec![None; m],
        }
    }

    fn link(&mut self, a: NodeId, b: NodeId) {
        self.src[a] = Some(b);
        self.dst[b] = Some(a);
    }

    fn link_subtrees(&mut self, a: &Indexed<'_>, x: NodeId, b: &Indexed<'_>, y: NodeId) {
        let xs = std::iter::once(x).chain(a.descendants(x).iter().copied());
        let ys = std::iter::once(y).chain(b.descendants(y).iter().copied());
        for (p, q) in xs.zip(ys) {
            self.link(p, q);
        }
    }
}

fn dice(a: &Indexed<'_>, x: NodeId, b: &Indexed<'_>, y: NodeId, m: &Mapping) -> f64 {
    let dx = a.size[x] - 1;
    let dy = b.size[y] - 1;
    if dx + dy == 0 {
        return 0.0;
    }
    let common = a
        .descendants(x)
        .iter()
        .filter(|&&d| m.src[d].is_some_and(|p| b.is_descendant(p, y)))
        .count();
    2.0 * common as f64 / (dx + dy) as f64
}

fn top_down(a: &Indexed<'_>, b: &Indexed<'_>, m: &mut Mapping) {
    // Open lists hold nodes still eligible for subtree matching.
    let mut open_a = vec![a.tree.root()];
    let mut open_b = vec![b.tree.root()];
    let mut candidates: Vec<(NodeId, NodeId)> = Vec::new();

    let peek = |list: &[NodeId], ix: &Indexed<'_>| list.iter().map(|&n| ix.height[n]).max().unwrap_or(0);
    loop {
        let ha = peek(&open_a, a);
        let hb = peek(&open_b, b);
        if ha.min(hb) < MIN_HEIGHT {
            break;
        }
        if ha != hb {
            if ha > hb {
                open_tallest(&mut open_a, a, ha);
            } else {
                open_tallest(&mut open_b, b, hb);
            }
            continue;
        }
        let h = ha;
        let mut level_a = take_height(&mut open_a, a, h);
        let mut level_b = take_height(&mut open_b, b, h);
        level_a.sort_by_key(|&n| a.pre[n]);
        level_b.sort_by_key(|&n| b.pre[n]);
        let mut matched_a = vec![false; level_a.len()];
        let mut matched_b = vec![false; level_b.len()];
        for (i, &x) in level_a.iter().enumerate() {
            for (j, &y) in level_b.iter().enumerate() {
                if !a.isomorphic(x, b, y) {
                    continue;
                }
                let unique_in_b = level_b
                    .iter()
                    .filter(|&&z| z != y && a.isomorphic(x, b, z))
                    .count()
                    == 0;
                let unique_in_a = level_a
                    .iter()
                    .filter(|&&z| z != x && a.isomorphic(z, b, y))
                    .count()
                    == 0;
                if unique_in_a && unique_in_b {
                    m.link_subtrees(a, x, b, y);
                } else {
                    candidates.push((x, y));
                }
                matched_a[i] = true;
                matched_b[j] = true;
            }
        }
        for (i, &x) in level_a.iter().enumerate() {
            if !matched_a[i] {
                open_a.extend(a.node(x).children.iter().copied());
            }
        }
        for (j, &y) in level_b.iter().enumerate() {
            if !matched_b[j] {
                open_b.extend(b.node(y).children.iter().copied());
            }
        }
    }

    // Rank ambiguous pairs by parent similarity, then by position.
    let mut ranked: Vec<(f64, usize, usize, NodeId, NodeId)> = candidates
        .into_iter()
        .map(|(x, y)| {
            let score = match (a.node(x).parent, b.node(y).parent) {
                (Some(px), Some(py)) => dice(a, px, b, py, m),
                _ => 0.0,
            };
            (score, a.pre[x], b.pre[y], x, y)
        })
        .collect();
    ranked.sort_by(|p, q| {
        q.0.partial_cmp(&p.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(p.1.cmp(&q.1))
            .then(p.2.cmp(&q.2))
    });
    for (_, _, _, x, y) in ranked {
        if m.src[x].is_none() && m.dst[y].is_none() {
            m.link_subtrees(a, x, b, y);
        }
    }
}

fn open_tallest(list: &mut Vec<NodeId>, ix: &Indexed<'_>, h: usize) {
    for n in take_height(list, ix, h) {
        list.extend(ix.node(n).children.iter().copied());
    }
}

fn take_height(list: &mut Vec<NodeId>, ix: &Indexed<'_>, h: usize) -> Vec<NodeId> {
    let (taken, rest): (Vec<_>, Vec<_>) = list.iter().partition(|&&n| ix.height[n] == h);
    *list = rest;
    taken
}

fn bottom_up(a: &Indexed<'_>, b: &Indexed<'_>, m: &mut Mapping) {
    let root_a = a.tree.root();
    let root_b = b.tree.root();
    for x in a.tree.postorder(root_a) {
        if m.src[x].is_some() {
            continue;
        }
        if x == root_a {
            if m.dst[root_b].is_none() && a.node(x).kind == b.node(root_b).kind {
                m.link(x, root_b);
            }
        } else if !a.node(x).children.is_empty() {
            let mut best: Option<(f64, NodeId)> = None;
            for &y in &b.order {
                if m.dst[y].is_some() || b.node(y).kind != a.node(x).kind || b.node(y).children.is_empty() {
                    continue;
                }
                let d = dice(a, x, b, y, m);
                if best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, y));
                }
            }
            if let Some((d, y)) = best {
                if d >= MIN_DICE {
                    m.link(x, y);
                }
            }
        }
        if let Some(y) = m.src[x] {
            recover(a, x, b, y, m);
        }
    }
}

/// Pairs the remaining children of a matched pair, recursively.
fn recover(a: &Indexed<'_>, x: NodeId, b: &Indexed<'_>, y: NodeId, m: &mut Mapping) {
    type Same<'f> = &'f dyn Fn(NodeId, NodeId) -> bool;
    let iso = |p: NodeId, q: NodeId| a.isomorphic(p, b, q);
    let exact = |p: NodeId, q: NodeId| a.node(p).kind == b.node(q).kind && a.node(p).label == b.node(q).label;
    let kind = |p: NodeId, q: NodeId| a.node(p).kind == b.node(q).kind;
    let passes: [Same<'_>; 3] = [&iso, &exact, &kind];
    for same in passes {
        let xs: Vec<NodeId> = a.node(x).children.iter().copied().filter(|&c| m.src[c].is_none()).collect();
        let ys: Vec<NodeId> = b.node(y).children.iter().copied().filter(|&c| m.dst[c].is_none()).collect();
        for (p, q) in lcs(&xs, &ys, same) {
            if a.isomorphic(p, b, q) {
                m.link_subtrees(a, p, b, q);
            } else {
                m.link(p, q);
                recover(a, p, b, q, m);
            }
        }
    }
}

/// Longest common subsequence, returning aligned pairs.
fn lcs<T: Copy, U: Copy>(xs: &[T], ys: &[U], same: &dyn Fn(T, U) -> bool) -> Vec<(T, U)> {
    let (n, k) = (xs.len(), ys.len());
    let mut table = vec![vec![0usize; k + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..k).rev() {
            table[i][j] = if same(xs[i], ys[j]) {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < n && j < k {
        if same(xs[i], ys[j]) {
            out.push((xs[i], ys[j]));
            i += 1;
            j += 1;
        } else if table[i + 1][j] >= table[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

#[derive(Clone)]
struct WorkNode {
    kind: String,
    label: String,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    alive: bool,
}

struct WorkTree {
    nodes: Vec<WorkNode>,
}

impl WorkTree {
    fn from_tree(tree: &SyntaxTree) -> Self {
        WorkTree {
            nodes: tree
                .nodes
                .iter()
                .map(|n| WorkNode {
                    kind: n.kind.clone(),
                    label: n.label.clone(),
                    parent: n.parent,
                    children: n.children.clone(),
                    alive: true,
                })
                .collect(),
        }
    }

    fn push(&mut self, kind: String, label: String) -> NodeId {
        self.nodes.push(WorkNode {
            kind,
            label,
            parent: None,
            children: Vec::new(),
            alive: true,
        });
        self.nodes.len() - 1
    }

    fn check_alive(&self, edit: usize, id: NodeId) -> Result<(), ApplyError> {
        match self.nodes.get(id) {
            Some(n) if n.alive => Ok(()),
            _ => Err(ApplyError::UnknownNode(edit, id)),
        }
    }

    fn detach(&mut self, id: NodeId) {
        if let Some(p) = self.nodes[id].parent.take() {
            self.nodes[p].children.retain(|&c| c != id);
        }
    }

    fn attach(&mut self, id: NodeId, parent: NodeId, index: usize) {
        let index = index.min(self.nodes[parent].children.len());
        self.nodes[parent].children.insert(index, id);
        self.nodes[id].parent = Some(parent);
    }

    fn index_in_parent(&self, id: NodeId) -> usize {
        let p = self.nodes[id].parent.expect("non-root");
        self.nodes[p].children.iter().position(|&c| c == id).expect("linked")
    }

    fn is_ancestor_or_self(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// Re-numbers live nodes in pre-order into a fresh tree.
    fn into_tree(self) -> SyntaxTree {
        let mut out = Vec::new();
        fn walk(w: &WorkTree, id: NodeId, parent: Option<NodeId>, out: &mut Vec<SyntaxNode>) {
            let me = out.len();
            out.push(SyntaxNode {
                kind: w.nodes[id].kind.clone(),
                label: w.nodes[id].label.clone(),
                span: 0..0,
                field: None,
                children: Vec::new(),
                parent,
                error: false,
            });
            let mut kids = Vec::new();
            for &c in &w.nodes[id].children {
                kids.push(out.len());
                walk(w, c, Some(me), out);
            }
            out[me].children = kids;
        }
        walk(&self, 0, None, &mut out);
        SyntaxTree { nodes: out }
    }
}

fn generate_script(source: &SyntaxTree, target: &SyntaxTree, m: &Mapping) -> EditScript {
    let mut work = WorkTree::from_tree(source);
    // Working-tree <-> target partners; grows as nodes are inserted.
    let mut w2t: Vec<Option<NodeId>> = m.src.clone();
    let mut t2w: Vec<Option<NodeId>> = m.dst.clone();
    let mut in_order_w = vec![false; source.len()];
    let mut in_order_t = vec![false; target.len()];
    let mut edits = Vec::new();

    // Roots are paired unconditionally. Both are `module` for parsed input.
    let root_w = 0;
    let root_t = target.root();
    if t2w[root_t] != Some(root_w) {
        if let Some(old) = w2t[root_w] {
            t2w[old] = None;
        }
        if let Some(old) = t2w[root_t] {
            w2t[old] = None;
        }
        w2t[root_w] = Some(root_t);
        t2w[root_t] = Some(root_w);
    }
    if work.nodes[root_w].label != target.nodes[root_t].label {
        let label = target.nodes[root_t].label.clone();
        work.nodes[root_w].label = label.clone();
        edits.push(Edit::Update { node: root_w, label });
    }
    in_order_w[root_w] = true;
    in_order_t[root_t] = true;

    let mut queue = std::collections::VecDeque::from([root_t]);
    while let Some(x) = queue.pop_front() {
        queue.extend(target.nodes[x].children.iter().copied());
        if x != root_t {
            let y = target.nodes[x].parent.expect("non-root has parent");
            let z = t2w[y].expect("parents are processed first");
            match t2w[x] {
                None => {
                    let k = find_pos(&work, target, x, &t2w, &in_order_t);
                    let node = &target.nodes[x];
                    let w = work.push(node.kind.clone(), node.label.clone());
                    work.attach(w, z, k);
                    w2t.push(Some(x));
                    in_order_w.push(false);
                    t2w[x] = Some(w);
                    edits.push(Edit::Insert {
                        node: w,
                        kind: node.kind.clone(),
                        label: node.label.clone(),
                        parent: z,
                        index: k,
                    });
                    in_order_w[w] = true;
                    in_order_t[x] = true;
                }
                Some(w) => {
                    if work.nodes[w].label != target.nodes[x].label {
                        let label = target.nodes[x].label.clone();
                        work.nodes[w].label = label.clone();
                        edits.push(Edit::Update { node: w, label });
                    }
                    let v = work.nodes[w].parent.expect("matched non-root has parent");
                    if w2t[v] != Some(y) {
                        work.detach(w);
                        let k = find_pos(&work, target, x, &t2w, &in_order_t);
                        work.attach(w, z, k);
                        edits.push(Edit::Move { node: w, parent: z, index: k });
                        in_order_w[w] = true;
                        in_order_t[x] = true;
                    }
                }
            }
        }
        let w = t2w[x].expect("partner assigned above");
        align_children(&mut work, target, w, x, &w2t, &t2w, &mut in_order_w, &mut in_order_t, &mut edits);
    }

    // Post-order delete of everything left unmatched.
    let mut stack = vec![(root_w, false)];
    let mut post = Vec::new();
    while let Some((n, expanded)) = stack.pop() {
        if expanded {
            post.push(n);
        } else {
            stack.push((n, true));
            stack.extend(work.nodes[n].children.iter().rev().map(|&c| (c, false)));
        }
    }
    for n in post {
        if n != root_w && w2t[n].is_none() {
            work.detach(n);
            work.nodes[n].alive = false;
            edits.push(Edit::Delete { node: n });
        }
    }
    EditScript { edits }
}

#[allow(clippy::too_many_arguments)]
fn align_children(
    work: &mut WorkTree,
    target: &SyntaxTree,
    w: NodeId,
    x: NodeId,
    w2t: &[Option<NodeId>],
    t2w: &[Option<NodeId>],
    in_order_w: &mut [bool],
    in_order_t: &mut [bool],
    edits: &mut Vec<Edit>,
) {
    for &c in &work.nodes[w].children {
        in_order_w[c] = false;
    }
    for &c in &target.nodes[x].children {
        in_order_t[c] = false;
    }
    let s1: Vec<NodeId> = work.nodes[w]
        .children
        .iter()
        .copied()
        .filter(|&c| w2t[c].is_some_and(|t| target.nodes[t].parent == Some(x)))
        .collect();
    let s2: Vec<NodeId> = target.nodes[x]
        .children
        .iter()
        .copied()
        .filter(|&c| t2w[c].is_some_and(|p| work.nodes[p].parent == Some(w)))
        .collect();
    let same = |p: NodeId, q: NodeId| w2t[p] == Some(q);
    let common = lcs(&s1, &s2, &same);
    for &(p, q) in &common {
        in_order_w[p] = true;
        in_order_t[q] = true;
    }
    for &b in &s2 {
        let a = t2w[b].expect("filtered to matched");
        if common.iter().any(|&(p, _)| p == a) {
            continue;
        }
        work.detach(a);
        let k = find_pos(work, target, b, t2w, in_order_t);
        work.attach(a, w, k);
        edits.push(Edit::Move { node: a, parent: w, index: k });
        in_order_w[a] = true;
        in_order_t[b] = true;
    }
}

/// Position for the partner of target node `x` among its new siblings:
/// just right of the partner of the rightmost in-order left sibling.
fn find_pos(
    work: &WorkTree,
    target: &SyntaxTree,
    x: NodeId,
    t2w: &[Option<NodeId>],
    in_order_t: &[bool],
) -> usize {
    let y = target.nodes[x].parent.expect("non-root");
    let siblings = &target.nodes[y].children;
    let me = siblings.iter().position(|&s| s == x).expect("child of parent");
    let Some(&v) = siblings[..me].iter().rev().find(|&&s| in_order_t[s]) else {
        return 0;
    };
    let u = t2w[v].expect("in-order nodes are matched");
    work.index_in_parent(u) + 1
}

/// Debug dump of a script as JSON.
pub fn script_to_json(script: &EditScript) -> String {
    serde_json::to_string_pretty(script).expect("edit scripts serialize")
}

/// Number of edits of each operation kind.
pub fn edit_histogram(script: &EditScript) -> HashMap<&'static str, usize> {
    let mut out = HashMap::new();
    for e in &script.edits {
        let key = match e {
            Edit::Insert { .. } => "insert",
            Edit::Delete { .. } => "delete",
            Edit::Update { .. } => "update",
            Edit::Move { .. } => "move",
        };
        *out.entry(key).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::tree::parse_source;

    fn check(a: &str, b: &str) -> EditScript {
        let ta = parse_source(a).unwrap();
        let tb = parse_source(b).unwrap();
        let script = tree_edit_distance(&ta, &tb);
        let out = apply_script(&ta, &script).unwrap();
        assert!(out.isomorphic(0, &tb, 0), "script {script:?} does not reproduce target");
        script
    }

    #[test]
    fn identical_snippets_need_no_edits() {
        assert_eq!(check("def f(x):\n    return x * 2\n", "def f(x):\n    return x * 2\n").size(), 0);
    }

    #[test]
    fn operator_swap_is_one_update() {
        let script = check("return a+b", "return a-b");
        assert_eq!(script.size(), 1);
        assert!(matches!(&script.edits[0], Edit::Update { label, .. } if label == "-"));
    }

    #[test]
    fn formatting_and_comments_do_not_count() {
        let s = check("x = 1 # c\n\n\ny = x\n", "x = 1\ny = x");
        assert_eq!(s.size(), 0);
    }

    #[test]
    fn added_statement() {
        let s = check("x = 1", "x = 1\ny = 2");
        assert!(s.size() > 0);
        assert!(edit_histogram(&s).contains_key("insert"));
    }

    #[test]
    fn reordered_statements_use_moves() {
        let s = check("a = foo(1, 2)\nb = bar(3, 4)\n", "b = bar(3, 4)\na = foo(1, 2)\n");
        assert_eq!(s.size(), 1);
        assert!(matches!(s.edits[0], Edit::Move { .. }));
    }

    #[test]
    fn rename_and_restructure() {
        check(
            "def total(items):\n    s = 0\n    for i in items:\n        s += i\n    return s\n",
            "def get_total(self):\n    return sum(item['price'] * item['quantity'] for item in self.cart)\n",
        );
    }

    #[test]
    fn to_empty_and_from_empty() {
        check("x = 1\nif x:\n    y = 2\n", "");
        check("", "x = 1\nif x:\n    y = 2\n");
    }

    #[test]
    fn apply_rejects_interior_delete() {
        let t = parse_source("x = 1").unwrap();
        let script = EditScript {
            edits: vec![Edit::Delete { node: 1 }],
        };
        assert!(matches!(apply_script(&t, &script), Err(ApplyError::DeleteInterior(0, 1))));
    }
}
