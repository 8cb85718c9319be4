//! Label trees whose leaves biject onto classes.
//!
//! Trees are stored in canonical breadth-first order: the root is node 0 and
//! children of a node keep their given order. The hierarchy text format is
//!
//! ```text
//! # comment
//! <parent_id>\t<child_id>
//! L\t<node_id>\t<class_id>
//! ```
//!
//! with arbitrary non-negative node ids; they are renumbered on load.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::dist::ClassDist;
use crate::error::{Error, Result};

/// Tolerance on per-node child distributions.
pub const NODE_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub class: Option<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTree {
    nodes: Vec<TreeNode>,
    leaf_of: Vec<usize>,
}

/// Bottom-up construction helper; ids it hands out are provisional.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    children: Vec<Vec<usize>>,
    class: Vec<Option<usize>>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, class: usize) -> usize {
        self.children.push(Vec::new());
        self.class.push(Some(class));
        self.children.len() - 1
    }

    pub fn internal(&mut self, children: Vec<usize>) -> usize {
        self.children.push(children);
        self.class.push(None);
        self.children.len() - 1
    }

    /// Validates and renumbers breadth-first from `root`.
    pub fn finish(self, root: usize, num_classes: usize) -> Result<LabelTree> {
        let n = self.children.len();
        let mut parent = vec![None; n];
        for (p, kids) in self.children.iter().enumerate() {
            for &c in kids {
                if c >= n || parent[c].is_some() || c == root {
                    return Err(Error::CycleDetected);
                }
                parent[c] = Some(p);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut new_id = vec![usize::MAX; n];
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            if new_id[v] != usize::MAX {
                return Err(Error::CycleDetected);
            }
            new_id[v] = order.len();
            order.push(v);
            queue.extend(self.children[v].iter().copied());
        }
        if order.len() != n {
            return Err(Error::MultipleRoots(n - order.len() + 1));
        }
        let nodes = order
            .iter()
            .map(|&old| TreeNode {
                parent: parent[old].map(|p| new_id[p]),
                children: self.children[old].iter().map(|&c| new_id[c]).collect(),
                class: self.class[old],
            })
            .collect();
        LabelTree::from_nodes(nodes, num_classes)
    }
}

impl LabelTree {
    /// Checks structure: root at 0, consistent parent links, internal nodes
    /// with at least two children and no class, one leaf per class.
    pub fn from_nodes(nodes: Vec<TreeNode>, num_classes: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput);
        }
        let roots = nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 || nodes[0].parent.is_some() {
            return Err(Error::MultipleRoots(roots));
        }
        let mut leaf_of = vec![usize::MAX; num_classes];
        for (id, node) in nodes.iter().enumerate() {
            for &c in &node.children {
                if c >= nodes.len() || nodes[c].parent != Some(id) {
                    return Err(Error::CycleDetected);
                }
            }
            match (node.is_leaf(), node.class) {
                (true, Some(class)) => {
                    if class >= num_classes {
                        return Err(Error::InvalidParams(format!(
                            "class {class} outside universe of {num_classes}"
                        )));
                    }
                    if leaf_of[class] != usize::MAX {
                        return Err(Error::InvalidParams(format!(
                            "class {class} mapped to several leaves"
                        )));
                    }
                    leaf_of[class] = id;
                }
                (true, None) => {
                    return Err(Error::InvalidParams(format!("leaf {id} has no class")));
                }
                (false, Some(_)) => {
                    return Err(Error::InvalidParams(format!(
                        "internal node {id} carries a class"
                    )));
                }
                (false, None) if node.children.len() < 2 => {
                    return Err(Error::UnaryInternalNode(id));
                }
                (false, None) => {}
            }
        }
        // every node reachable from the root
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::CycleDetected);
            }
            stack.extend(nodes[v].children.iter().copied());
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::CycleDetected);
        }
        if let Some(c) = leaf_of.iter().position(|&l| l == usize::MAX) {
            return Err(Error::UnmappedClass(c));
        }
        Ok(LabelTree { nodes, leaf_of })
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn leaf_of(&self, class: usize) -> Option<usize> {
        self.leaf_of.get(class).copied()
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&v| !self.nodes[v].is_leaf())
    }

    /// Nodes from the root down to the leaf of `class`, both included.
    pub fn path(&self, class: usize) -> Result<Vec<usize>> {
        let mut v = self.leaf_of(class).ok_or(Error::UnmappedClass(class))?;
        let mut path = vec![v];
        while let Some(p) = self.nodes[v].parent {
            path.push(p);
            v = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Number of edges between the root and the leaf of `class`.
    pub fn depth_of_class(&self, class: usize) -> Result<usize> {
        Ok(self.path(class)?.len() - 1)
    }

    /// Classes under each node, in leaf order.
    pub fn subtree_classes(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        // BFS numbering: children have larger ids than parents
        for v in (0..self.nodes.len()).rev() {
            let node = &self.nodes[v];
            if let Some(c) = node.class {
                out[v].push(c);
            } else {
                let merged: Vec<usize> = node
                    .children
                    .iter()
                    .flat_map(|&c| out[c].iter().copied())
                    .collect();
                out[v] = merged;
            }
        }
        out
    }

    /// For each class, the child index taken at every internal node on its
    /// path: `(node, child position)` pairs from the root down.
    pub fn routes(&self, class: usize) -> Result<Vec<(usize, usize)>> {
        let path = self.path(class)?;
        Ok(path
            .windows(2)
            .map(|w| {
                let pos = self.nodes[w[0]]
                    .children
                    .iter()
                    .position(|&c| c == w[1])
                    .unwrap();
                (w[0], pos)
            })
            .collect())
    }
}

/// Parses the hierarchy text format. With `num_classes` set, every class in
/// `0..num_classes` must be mapped; otherwise the universe is `0..=max class`.
pub fn load_hierarchy(text: &str, num_classes: Option<usize>) -> Result<LabelTree> {
    let mut edges: Vec<(u64, u64)> = Vec::new();
    let mut leaves: Vec<(u64, usize, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split('\t').map(str::trim).collect();
        let malformed = |msg: String| Error::MalformedHierarchy { line, msg };
        let id = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| malformed(format!("bad id `{s}`")))
        };
        match fields.as_slice() {
            ["L", node, class] => {
                let class = id(class)? as usize;
                leaves.push((id(node)?, class, line));
            }
            [parent, child] => edges.push((id(parent)?, id(child)?)),
            _ => return Err(malformed(format!("unexpected line `{content}`"))),
        }
    }
    if edges.is_empty() && leaves.is_empty() {
        return Err(Error::EmptyInput);
    }

    let mut ids: Vec<u64> = edges
        .iter()
        .flat_map(|&(p, c)| [p, c])
        .chain(leaves.iter().map(|l| l.0))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let dense = |raw: u64| ids.binary_search(&raw).unwrap();
    let n = ids.len();

    let mut children = vec![Vec::new(); n];
    let mut parent = vec![None; n];
    for &(p, c) in &edges {
        let (p, c) = (dense(p), dense(c));
        if p == c {
            return Err(Error::CycleDetected);
        }
        if parent[c].replace(p).is_some() {
            return Err(Error::MalformedHierarchy {
                line: 0,
                msg: format!("node {} has several parents", ids[c]),
            });
        }
        children[p].push(c);
    }
    let mut class = vec![None; n];
    for &(node, c, line) in &leaves {
        if class[dense(node)].replace(c).is_some() {
            return Err(Error::MalformedHierarchy {
                line,
                msg: format!("node {node} mapped twice"),
            });
        }
    }

    let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
    match roots.len() {
        0 => return Err(Error::CycleDetected),
        1 => {}
        r => return Err(Error::MultipleRoots(r)),
    }
    // nodes off the root's component sit on a cycle
    let mut seen = vec![false; n];
    let mut stack = vec![roots[0]];
    while let Some(v) = stack.pop() {
        if !std::mem::replace(&mut seen[v], true) {
            stack.extend(children[v].iter().copied());
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::CycleDetected);
    }
    for v in 0..n {
        if children[v].len() == 1 {
            return Err(Error::UnaryInternalNode(ids[v] as usize));
        }
        if children[v].is_empty() && class[v].is_none() {
            return Err(Error::MalformedHierarchy {
                line: 0,
                msg: format!("leaf node {} has no class", ids[v]),
            });
        }
        if !children[v].is_empty() && class[v].is_some() {
            return Err(Error::MalformedHierarchy {
                line: 0,
                msg: format!("internal node {} carries a class", ids[v]),
            });
        }
    }

    let max_class = leaves.iter().map(|l| l.1).max();
    let k = match (num_classes, max_class) {
        (Some(k), _) => k,
        (None, Some(m)) => m + 1,
        (None, None) => 0,
    };
    let mut mapped = vec![false; k];
    for &(_, c, line) in &leaves {
        if c >= k {
            return Err(Error::MalformedHierarchy {
                line,
                msg: format!("class {c} outside universe of {k}"),
            });
        }
        if std::mem::replace(&mut mapped[c], true) {
            return Err(Error::MalformedHierarchy {
                line,
                msg: format!("class {c} mapped to several leaves"),
            });
        }
    }
    if let Some(c) = mapped.iter().position(|m| !m) {
        return Err(Error::UnmappedClass(c));
    }

    let mut builder = TreeBuilder::new();
    builder.children = children;
    builder.class = class;
    builder.finish(roots[0], k)
}

/// Writes the hierarchy text format; loading the output yields the same tree.
pub fn format_hierarchy(tree: &LabelTree) -> String {
    let mut out = format!(
        "# label tree: {} nodes, {} classes\n",
        tree.len(),
        tree.num_classes()
    );
    for (v, node) in tree.nodes().iter().enumerate() {
        for &c in &node.children {
            writeln!(out, "{v}\t{c}").unwrap();
        }
    }
    for (v, node) in tree.nodes().iter().enumerate() {
        if let Some(c) = node.class {
            writeln!(out, "L\t{v}\t{c}").unwrap();
        }
    }
    out
}

/// L2-normalized mean feature vector of each class (zero for empty classes).
pub fn class_profiles(data: &Dataset) -> Vec<Vec<f64>> {
    let mut profiles = vec![vec![0.0; data.dim()]; data.num_classes()];
    for (x, y) in data.examples() {
        for &(j, v) in x.pairs() {
            profiles[*y][j] += v;
        }
    }
    for p in profiles.iter_mut() {
        normalize(p);
    }
    profiles
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const TWO_MEANS_MAX_ITER: usize = 50;

/// Splits `members` into halves of sizes `ceil(n/2)` and `floor(n/2)`
/// by balanced spherical 2-means.
fn balanced_split(
    profiles: &[Vec<f64>],
    members: &[usize],
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let n = members.len();
    let first = rng.random_range(0..n);
    let mut second = rng.random_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    let mut centroids = [
        profiles[members[first]].clone(),
        profiles[members[second]].clone(),
    ];
    let left_size = n.div_ceil(2);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..TWO_MEANS_MAX_ITER {
        let margins: Vec<f64> = members
            .iter()
            .map(|&m| dot(&profiles[m], &centroids[0]) - dot(&profiles[m], &centroids[1]))
            .collect();
        order.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]).then(a.cmp(&b)));
        let mut next = [vec![0.0; centroids[0].len()], vec![0.0; centroids[0].len()]];
        for (rank, &i) in order.iter().enumerate() {
            let side = usize::from(rank >= left_size);
            for (acc, v) in next[side].iter_mut().zip(&profiles[members[i]]) {
                *acc += v;
            }
        }
        next.iter_mut().for_each(|c| normalize(c));
        let moved = (0..2)
            .map(|s| {
                next[s]
                    .iter()
                    .zip(&centroids[s])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = next;
        if moved < eps {
            break;
        }
    }
    let mut left: Vec<usize> = order[..left_size].iter().map(|&i| members[i]).collect();
    let mut right: Vec<usize> = order[left_size..].iter().map(|&i| members[i]).collect();
    left.sort_unstable();
    right.sort_unstable();
    (left, right)
}

/// Recursive balanced 2-means over class profiles. Nodes with at most
/// `max_leaf` classes get one leaf child per class.
pub fn build_2means_tree(
    profiles: &[Vec<f64>],
    max_leaf: usize,
    eps_c: f64,
    seed: u64,
) -> Result<LabelTree> {
    if profiles.is_empty() {
        return Err(Error::EmptyInput);
    }
    if max_leaf == 0 {
        return Err(Error::InvalidParams("max_leaf must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = TreeBuilder::new();
    let all: Vec<usize> = (0..profiles.len()).collect();
    let root = grow(&mut builder, profiles, &all, max_leaf, eps_c, &mut rng);
    builder.finish(root, profiles.len())
}

fn grow(
    builder: &mut TreeBuilder,
    profiles: &[Vec<f64>],
    members: &[usize],
    max_leaf: usize,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    if members.len() == 1 {
        return builder.leaf(members[0]);
    }
    if members.len() <= max_leaf {
        let leaves = members.iter().map(|&c| builder.leaf(c)).collect();
        return builder.internal(leaves);
    }
    let (left, right) = balanced_split(profiles, members, eps, rng);
    let l = grow(builder, profiles, &left, max_leaf, eps, rng);
    let r = grow(builder, profiles, &right, max_leaf, eps, rng);
    builder.internal(vec![l, r])
}

/// Binary Huffman tree over class frequencies. Equal weights merge the
/// subtree holding the smallest class id first.
pub fn build_huffman_tree(frequencies: &[f64]) -> Result<LabelTree> {
    if frequencies.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(f) = frequencies.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::InvalidParams(format!("bad frequency {f}")));
    }
    #[derive(PartialEq)]
    struct Item(f64, usize, usize); // (weight, smallest class, node)
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }

    let mut builder = TreeBuilder::new();
    let mut heap: BinaryHeap<Reverse<Item>> = frequencies
        .iter()
        .enumerate()
        .map(|(c, &f)| Reverse(Item(f, c, builder.leaf(c))))
        .collect();
    while heap.len() > 1 {
        let Reverse(a) = heap.pop().unwrap();
        let Reverse(b) = heap.pop().unwrap();
        let node = builder.internal(vec![a.2, b.2]);
        heap.push(Reverse(Item(a.0 + b.0, a.1.min(b.1), node)));
    }
    let root = heap.pop().unwrap().0 .2;
    builder.finish(root, frequencies.len())
}

/// Random binary tree: classes shuffled, then split recursively at a
/// uniformly drawn position.
pub fn random_binary_tree(num_classes: usize, seed: u64) -> Result<LabelTree> {
    if num_classes == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<usize> = (0..num_classes).collect();
    classes.shuffle(&mut rng);
    let mut builder = TreeBuilder::new();
    fn split(b: &mut TreeBuilder, classes: &[usize], rng: &mut ChaCha8Rng) -> usize {
        if classes.len() == 1 {
            return b.leaf(classes[0]);
        }
        let cut = rng.random_range(1..classes.len());
        let l = split(b, &classes[..cut], rng);
        let r = split(b, &classes[cut..], rng);
        b.internal(vec![l, r])
    }
    let root = split(&mut builder, &classes, &mut rng);
    builder.finish(root, num_classes)
}

/// Per-node child distributions that do not depend on the input.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProbs {
    probs: Vec<Vec<f64>>,
}

impl NodeProbs {
    /// One vector per node (empty for leaves), each summing to one.
    pub fn new(tree: &LabelTree, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != tree.len() {
            return Err(Error::DimensionMismatch {
                expected: tree.len(),
                got: probs.len(),
            });
        }
        for (v, p) in probs.iter().enumerate() {
            let node = tree.node(v);
            if node.is_leaf() {
                continue;
            }
            if p.len() != node.children.len() {
                return Err(Error::MissingNodeModel(v));
            }
            let total: f64 = p.iter().sum();
            if p.iter().any(|q| q.is_nan() || *q < 0.0) || (total - 1.0).abs() > NODE_SUM_TOL {
                return Err(Error::UnnormalizedNode(v));
            }
        }
        Ok(NodeProbs { probs })
    }

    /// Factors that reproduce `dist` exactly by the chain rule: each child
    /// gets its subtree's share of the parent's mass (uniform when zero).
    pub fn induced(tree: &LabelTree, dist: &ClassDist) -> Result<Self> {
        if dist.len() != tree.num_classes() {
            return Err(Error::UniverseMismatch);
        }
        let subtree = tree.subtree_classes();
        let mass: Vec<f64> = subtree
            .iter()
            .map(|cs| cs.iter().map(|&c| dist.mass(c)).sum())
            .collect();
        let probs = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(v, node)| {
                let n = node.children.len();
                if n == 0 {
                    Vec::new()
                } else if mass[v] > 0.0 {
                    let raw: Vec<f64> = node.children.iter().map(|&c| mass[c] / mass[v]).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|p| p / s).collect()
                } else {
                    vec![1.0 / n as f64; n]
                }
            })
            .collect();
        Self::new(tree, probs)
    }

    pub fn get(&self, node: usize) -> &[f64] {
        &self.probs[node]
    }
}

/// `P(c|x)` by the chain rule along the path of `class`.
pub fn path_probability(tree: &LabelTree, probs: &NodeProbs, class: usize) -> Result<f64> {
    let mut p = 1.0;
    for (node, pos) in tree.routes(class)? {
        let dist = probs.get(node);
        let total: f64 = dist.iter().sum();
        if (total - 1.0).abs() > NODE_SUM_TOL {
            return Err(Error::UnnormalizedNode(node));
        }
        p *= dist[pos];
    }
    Ok(p)
}

/// Routes each example to the internal nodes on its class path, giving the
/// per-node training sets `(x, child position)`.
pub fn route_examples(tree: &LabelTree, data: &Dataset) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut routed: Vec<Vec<(usize, usize)>> = vec![Vec::new(); tree.len()];
    let routes: Vec<Vec<(usize, usize)>> = (0..tree.num_classes())
        .map(|c| tree.routes(c))
        .collect::<Result<_>>()?;
    for (i, (_, y)) in data.examples().iter().enumerate() {
        for &(node, pos) in routes.get(*y).ok_or(Error::UnmappedClass(*y))? {
            routed[node].push((i, pos));
        }
    }
    Ok(routed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_small_hierarchy() {
        // root(10) -> {A(11), inner(12)}, inner -> {B(13), C(14)}
        let text = "# toy\n10\t11\n10\t12\n12\t13\n12\t14\nL\t11\t0\nL\t13\t1\nL\t14\t2\n";
        let tree = load_hierarchy(text, Some(3)).unwrap();
        assert_eq!(tree.len(), 5);
        assert_eq!(tree.num_classes(), 3);
        assert_eq!(tree.depth_of_class(0).unwrap(), 1);
        assert_eq!(tree.depth_of_class(2).unwrap(), 2);
        let again = load_hierarchy(&format_hierarchy(&tree), Some(3)).unwrap();
        assert_eq!(again, tree);
        assert_eq!(format_hierarchy(&again), format_hierarchy(&tree));
    }

    #[test]
    fn hierarchy_errors() {
        let cycle = "0\t1\n1\t2\n2\t1\n0\t3\nL\t3\t0\n";
        assert!(matches!(
            load_hierarchy(cycle, None),
            Err(Error::CycleDetected | Error::MalformedHierarchy { .. })
        ));
        let pure_cycle = "1\t2\n2\t1\n";
        assert!(matches!(
            load_hierarchy(pure_cycle, None),
            Err(Error::CycleDetected)
        ));
        let two_roots = "0\t1\n0\t2\n5\t6\n5\t7\nL\t1\t0\nL\t2\t1\nL\t6\t2\nL\t7\t3\n";
        assert!(matches!(
            load_hierarchy(two_roots, None),
            Err(Error::MultipleRoots(2))
        ));
        let missing = "0\t1\n0\t2\nL\t1\t0\nL\t2\t2\n";
        assert!(matches!(
            load_hierarchy(missing, None),
            Err(Error::UnmappedClass(1))
        ));
        let missing_k = "0\t1\n0\t2\nL\t1\t0\nL\t2\t1\n";
        assert!(matches!(
            load_hierarchy(missing_k, Some(3)),
            Err(Error::UnmappedClass(2))
        ));
        let unary = "0\t1\n1\t2\n1\t3\n0\t4\n4\t5\nL\t2\t0\nL\t3\t1\nL\t5\t2\n";
        assert!(matches!(
            load_hierarchy(unary, None),
            Err(Error::UnaryInternalNode(4))
        ));
        assert!(matches!(
            load_hierarchy("0\tx\n", None),
            Err(Error::MalformedHierarchy { line: 1, .. })
        ));
    }

    #[test]
    fn single_class_tree() {
        let tree = load_hierarchy("L\t7\t0\n", None).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.path(0).unwrap(), vec![0]);
    }

    fn assert_balanced(tree: &LabelTree) {
        let sizes = tree.subtree_classes();
        for node in tree.nodes() {
            if node.children.len() == 2
                && node
                    .children
                    .iter()
                    .all(|&c| !tree.node(c).is_leaf() || sizes[c].len() == 1)
            {
                let a = sizes[node.children[0]].len() as i64;
                let b = sizes[node.children[1]].len() as i64;
                assert!((a - b).abs() <= 1, "unbalanced split {a} vs {b}");
            }
        }
    }

    #[test]
    fn two_means_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let profiles: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let tree = build_2means_tree(&profiles, 1, 1e-3, 4).unwrap();
        assert_eq!(tree.len(), 15);
        for c in 0..8 {
            assert_eq!(tree.depth_of_class(c).unwrap(), 3);
        }
        assert_balanced(&tree);
        let pair = build_2means_tree(&profiles[..2], 20, 1e-3, 4).unwrap();
        assert_eq!(pair.len(), 3);
        assert_eq!(build_2means_tree(&profiles, 1, 1e-3, 4).unwrap(), tree);
        assert!(matches!(
            build_2means_tree(&[], 2, 1e-3, 0),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn two_means_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let profiles: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let tree = build_2means_tree(&profiles, 20, 0.001, 7).unwrap();
        assert!(tree.len() < 2 * 1000);
        assert_eq!(tree.num_classes(), 1000);
        assert_balanced(&tree);
    }

    #[test]
    fn huffman_depths() {
        let depths = |f: &[f64]| -> Vec<usize> {
            let t = build_huffman_tree(f).unwrap();
            (0..f.len()).map(|c| t.depth_of_class(c).unwrap()).collect()
        };
        assert_eq!(depths(&[0.5, 0.25, 0.25]), vec![1, 2, 2]);
        assert_eq!(depths(&[1.0; 4]), vec![2, 2, 2, 2]);
        assert_eq!(depths(&[8.0, 1.0, 1.0, 1.0, 1.0])[0], 1);
        assert!(matches!(build_huffman_tree(&[]), Err(Error::EmptyInput)));
        assert_eq!(build_huffman_tree(&[3.0]).unwrap().len(), 1);
    }

    #[test]
    fn chain_rule() {
        // root -> {leaf 0 (0.4), inner (0.6)}, inner -> {leaf 1 (0.4), leaf 2 (0.6)}
        let text = "0\t1\n0\t2\n2\t3\n2\t4\nL\t1\t0\nL\t3\t1\nL\t4\t2\n";
        let tree = load_hierarchy(text, None).unwrap();
        let probs = NodeProbs::new(
            &tree,
            vec![vec![0.4, 0.6], vec![], vec![0.4, 0.6], vec![], vec![]],
        )
        .unwrap();
        assert!((path_probability(&tree, &probs, 2).unwrap() - 0.36).abs() < 1e-15);
        let total: f64 = (0..3)
            .map(|c| path_probability(&tree, &probs, c).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);

        let flat = "0\t1\n0\t2\nL\t1\t0\nL\t2\t1\n";
        let tree = load_hierarchy(flat, None).unwrap();
        let probs = NodeProbs::new(&tree, vec![vec![0.9, 0.1], vec![], vec![]]).unwrap();
        assert_eq!(path_probability(&tree, &probs, 0).unwrap(), 0.9);
        assert!(matches!(
            NodeProbs::new(&tree, vec![vec![0.9, 0.2], vec![], vec![]]),
            Err(Error::UnnormalizedNode(0))
        ));
        assert!(matches!(
            path_probability(&tree, &probs, 5),
            Err(Error::UnmappedClass(5))
        ));
    }

    #[test]
    fn induced_factors_reproduce_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        let dist = ClassDist::from_probs(&raw.iter().map(|r| r / s).collect::<Vec<_>>()).unwrap();
        let tree = random_binary_tree(20, 11).unwrap();
        let probs = NodeProbs::induced(&tree, &dist).unwrap();
        for c in 0..20 {
            assert!((path_probability(&tree, &probs, c).unwrap() - dist.mass(c)).abs() < 1e-12);
        }
    }
}
