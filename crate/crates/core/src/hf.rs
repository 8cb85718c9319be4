//! Hierarchical factorization: per-node child distributions over a label
//! tree, trained on routed examples, and a best-first provider that streams
//! leaves by decreasing path probability.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inference::ClassProvider;
use crate::linear::{train_softmax, LinearModel, TrainConfig};
use crate::sparse::SparseVector;
use crate::tree::{route_examples, LabelTree, NodeProbs};

/// Child distributions for the internal nodes of a tree.
pub trait NodeModels {
    /// Fails if some internal node lacks a model or `x` does not fit.
    fn check(&self, tree: &LabelTree, x: &SparseVector) -> Result<()>;

    /// Log-probabilities of the children of `node`, in child order.
    fn child_log_probs(&self, node: usize, x: &SparseVector, out: &mut Vec<f64>);
}

impl NodeModels for NodeProbs {
    fn check(&self, tree: &LabelTree, _x: &SparseVector) -> Result<()> {
        for v in tree.internal_nodes() {
            if self.get(v).len() != tree.node(v).children.len() {
                return Err(Error::MissingNodeModel(v));
            }
        }
        Ok(())
    }

    fn child_log_probs(&self, node: usize, _x: &SparseVector, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.get(node).iter().map(|p| p.ln().min(0.0)));
    }
}

/// One softmax model per internal node, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    tree: LabelTree,
    nodes: Vec<Option<LinearModel>>,
    dim: usize,
}

impl TreeModel {
    pub fn new(tree: LabelTree, nodes: Vec<Option<LinearModel>>, dim: usize) -> Result<Self> {
        if nodes.len() != tree.len() {
            return Err(Error::DimensionMismatch {
                expected: tree.len(),
                got: nodes.len(),
            });
        }
        for v in tree.internal_nodes() {
            match &nodes[v] {
                Some(m) if m.n_out() == tree.node(v).children.len() && m.dim() == dim => {}
                _ => return Err(Error::MissingNodeModel(v)),
            }
        }
        Ok(TreeModel { tree, nodes, dim })
    }

    pub fn tree(&self) -> &LabelTree {
        &self.tree
    }

    pub fn node_models(&self) -> &[Option<LinearModel>] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.tree.num_classes()
    }

    /// Full distribution over classes by evaluating every node.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check(&self.tree, x)?;
        let mut log_p = vec![0.0; self.tree.len()];
        let mut buf = Vec::new();
        // parents precede children in node order
        for v in self.tree.internal_nodes() {
            self.child_log_probs(v, x, &mut buf);
            for (&c, lp) in self.tree.node(v).children.iter().zip(&buf) {
                log_p[c] = log_p[v] + lp;
            }
        }
        let mut out = vec![0.0; self.num_classes()];
        for (v, node) in self.tree.nodes().iter().enumerate() {
            if let Some(c) = node.class {
                out[c] = log_p[v].exp();
            }
        }
        Ok(out)
    }

    pub fn provider<'a>(&'a self, x: &'a SparseVector) -> Result<HfProvider<'a, TreeModel>> {
        HfProvider::new(&self.tree, self, x)
    }
}

impl NodeModels for TreeModel {
    fn check(&self, tree: &LabelTree, x: &SparseVector) -> Result<()> {
        if tree.len() != self.nodes.len() {
            return Err(Error::UniverseMismatch);
        }
        if x.min_dim() > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.min_dim(),
            });
        }
        Ok(())
    }

    fn child_log_probs(&self, node: usize, x: &SparseVector, out: &mut Vec<f64>) {
        let model = self.nodes[node].as_ref().expect("checked at construction");
        out.clear();
        out.extend((0..model.n_out()).map(|c| model.score(c, x)));
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + out.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        for s in out.iter_mut() {
            *s = (*s - lse).min(0.0);
        }
    }
}

/// Trains every internal node on the examples routed through it. Nodes that
/// see fewer than two distinct children get a constant model whose bias is
/// the log of Laplace-smoothed child frequencies.
pub fn train_tree(tree: LabelTree, data: &Dataset, config: &TrainConfig) -> Result<TreeModel> {
    if tree.num_classes() != data.num_classes() {
        return Err(Error::UniverseMismatch);
    }
    let routed = route_examples(&tree, data)?;
    let dim = data.dim();
    let internal: Vec<usize> = tree.internal_nodes().collect();
    let trained: Vec<(usize, LinearModel)> = internal
        .par_iter()
        .map(|&v| {
            let arity = tree.node(v).children.len();
            let mut counts = vec![0usize; arity];
            for &(_, pos) in &routed[v] {
                counts[pos] += 1;
            }
            let model = if counts.iter().filter(|&&n| n > 0).count() < 2 {
                let total = (routed[v].len() + arity) as f64;
                let bias = counts
                    .iter()
                    .map(|&n| ((n + 1) as f64 / total).ln())
                    .collect();
                log::debug!("node {v}: constant model from {} examples", routed[v].len());
                LinearModel::constant(bias, dim)
            } else {
                let examples: Vec<(&SparseVector, usize)> = routed[v]
                    .iter()
                    .map(|&(i, pos)| (&data.examples()[i].0, pos))
                    .collect();
                train_softmax(&examples, arity, dim, config)?
            };
            Ok((v, model))
        })
        .collect::<Result<_>>()?;
    let mut nodes = vec![None; tree.len()];
    for (v, m) in trained {
        nodes[v] = Some(m);
    }
    TreeModel::new(tree, nodes, dim)
}

#[derive(Debug, Clone, Copy)]
struct Frontier {
    log_p: f64,
    node: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // max-heap on probability, smaller node id first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_p
            .total_cmp(&other.log_p)
            .then(other.node.cmp(&self.node))
    }
}

/// Best-first search over the tree. Path probabilities only shrink going
/// down, so leaves pop in non-increasing order of `P(c|x)`.
pub struct HfProvider<'a, M: NodeModels + ?Sized> {
    tree: &'a LabelTree,
    models: &'a M,
    x: &'a SparseVector,
    heap: BinaryHeap<Frontier>,
    buf: Vec<f64>,
    evaluations: usize,
}

impl<'a, M: NodeModels + ?Sized> HfProvider<'a, M> {
    pub fn new(tree: &'a LabelTree, models: &'a M, x: &'a SparseVector) -> Result<Self> {
        models.check(tree, x)?;
        let mut heap = BinaryHeap::new();
        heap.push(Frontier {
            log_p: 0.0,
            node: tree.root(),
        });
        Ok(HfProvider {
            tree,
            models,
            x,
            heap,
            buf: Vec::new(),
            evaluations: 0,
        })
    }

    /// Internal nodes whose child distribution has been computed so far.
    pub fn node_evaluations(&self) -> usize {
        self.evaluations
    }
}

impl<M: NodeModels + ?Sized> ClassProvider for HfProvider<'_, M> {
    fn num_classes(&self) -> usize {
        self.tree.num_classes()
    }

    fn next_class(&mut self) -> Option<(usize, f64)> {
        while let Some(Frontier { log_p, node }) = self.heap.pop() {
            let n = self.tree.node(node);
            if let Some(c) = n.class {
                return Some((c, log_p.exp()));
            }
            self.models.child_log_probs(node, self.x, &mut self.buf);
            self.evaluations += 1;
            for (&child, lp) in n.children.iter().zip(&self.buf) {
                self.heap.push(Frontier {
                    log_p: log_p + lp,
                    node: child,
                });
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ClassDist;
    use crate::tree::{load_hierarchy, random_binary_tree};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn drain<P: ClassProvider>(mut p: P) -> Vec<(usize, f64)> {
        std::iter::from_fn(|| p.next_class()).collect()
    }

    #[test]
    fn order_on_small_tree() {
        // P(c0)=0.4, P(c1)=0.24, P(c2)=0.36
        let text = "0\t1\n0\t2\n2\t3\n2\t4\nL\t1\t0\nL\t3\t1\nL\t4\t2\n";
        let tree = load_hierarchy(text, None).unwrap();
        let probs = NodeProbs::new(
            &tree,
            vec![vec![0.4, 0.6], vec![], vec![0.4, 0.6], vec![], vec![]],
        )
        .unwrap();
        let x = SparseVector::default();
        let out = drain(HfProvider::new(&tree, &probs, &x).unwrap());
        let ids: Vec<usize> = out.iter().map(|e| e.0).collect();
        assert_eq!(ids, vec![0, 2, 1]);
        assert!((out[1].1 - 0.36).abs() < 1e-12);
        assert!((out[2].1 - 0.24).abs() < 1e-12);
    }

    #[test]
    fn stream_is_monotone_and_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..10 {
            let k = 50;
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(3)).collect();
            let s: f64 = raw.iter().sum();
            let dist =
                ClassDist::from_probs(&raw.iter().map(|r| r / s).collect::<Vec<_>>()).unwrap();
            let tree = random_binary_tree(k, seed).unwrap();
            let probs = NodeProbs::induced(&tree, &dist).unwrap();
            let x = SparseVector::default();
            let out = drain(HfProvider::new(&tree, &probs, &x).unwrap());
            assert_eq!(out.len(), k);
            for w in out.windows(2) {
                assert!(w[0].1 >= w[1].1);
            }
            for (c, m) in out {
                assert!((m - dist.mass(c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stops_early_on_peaked_distribution() {
        let k = 256;
        let mut raw = vec![1e-6; k];
        raw[17] = 1.0;
        let s: f64 = raw.iter().sum();
        let dist = ClassDist::from_probs(&raw.iter().map(|r| r / s).collect::<Vec<_>>()).unwrap();
        let tree = random_binary_tree(k, 3).unwrap();
        let probs = NodeProbs::induced(&tree, &dist).unwrap();
        let x = SparseVector::default();
        let mut p = HfProvider::new(&tree, &probs, &x).unwrap();
        assert_eq!(p.next_class().unwrap().0, 17);
        assert_eq!(p.node_evaluations(), tree.depth_of_class(17).unwrap());
    }

    #[test]
    fn missing_model_is_reported() {
        let tree = random_binary_tree(4, 0).unwrap();
        let nodes = vec![None; tree.len()];
        assert!(matches!(
            TreeModel::new(tree, nodes, 3),
            Err(Error::MissingNodeModel(0))
        ));
    }

    #[test]
    fn trained_tree_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = 6;
        let examples: Vec<(SparseVector, usize)> = (0..300)
            .map(|_| {
                let y = rng.random_range(0..k);
                let x: Vec<f64> = (0..4)
                    .map(|j| if j == y % 4 { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3))
                    .collect();
                (SparseVector::from_dense(&x), y)
            })
            .collect();
        let data = Dataset::with_classes(examples, 4, k).unwrap();
        let tree = random_binary_tree(k, 5).unwrap();
        let model = train_tree(tree, &data, &TrainConfig::default()).unwrap();
        let x = &data.examples()[0].0;
        let full = model.predict_proba(x).unwrap();
        assert!((full.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let streamed = drain(model.provider(x).unwrap());
        for (c, m) in streamed {
            assert!((m - full[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn unseen_branch_gets_constant_model() {
        // class 2 never occurs; the node splitting {1, 2} sees one child only
        let text = "0\t1\n0\t2\n2\t3\n2\t4\nL\t1\t0\nL\t3\t1\nL\t4\t2\n";
        let tree = load_hierarchy(text, None).unwrap();
        let examples = vec![
            (SparseVector::from_dense(&[1.0, 0.0]), 0),
            (SparseVector::from_dense(&[0.0, 1.0]), 1),
            (SparseVector::from_dense(&[0.1, 0.9]), 1),
        ];
        let data = Dataset::with_classes(examples, 2, 3).unwrap();
        let model = train_tree(tree, &data, &TrainConfig::default()).unwrap();
        let inner = model.node_models()[2].as_ref().unwrap();
        assert_eq!(inner.nonzero_weights(), 0);
        let p = inner.predict_proba(&SparseVector::default()).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }
}
