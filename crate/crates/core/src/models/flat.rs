//! Branch-free batch prediction for shallow tree ensembles.
//!
//! Each tree is padded to a complete binary tree of its depth: a leaf above
//! the bottom level becomes a chain of `x[0] <= +∞` splits whose leaves all
//! carry its value. Traversal is then a fixed number of compare-and-shift
//! steps with no data-dependent branches.

use super::tree::{Node, TreeModel};
use super::{AnyModel, EnsembleKind, Regressor};

/// Deeper trees would need `2^depth` slots; they fall back to the node walk.
pub const MAX_FLAT_DEPTH: usize = 10;

#[derive(Clone, Debug)]
struct FlatTree {
    depth: usize,
    /// (feature, threshold) per internal slot, in heap order.
    splits: Vec<(usize, f64)>,
    leaves: Vec<f64>,
}

impl FlatTree {
    fn new(tree: &TreeModel) -> Self {
        let depth = tree.depth;
        let internal = (1usize << depth) - 1;
        let mut flat = FlatTree {
            depth,
            splits: vec![(0, f64::INFINITY); internal],
            leaves: vec![0.0; 1 << depth],
        };
        // (node id, slot in the complete tree, level)
        let mut stack = vec![(0usize, 0usize, 0usize)];
        while let Some((id, slot, level)) = stack.pop() {
            match tree.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    flat.splits[slot] = (feature, threshold);
                    stack.push((left, 2 * slot + 1, level + 1));
                    stack.push((right, 2 * slot + 2, level + 1));
                }
                Node::Leaf { value } => {
                    // Padding always goes left, so only the leftmost leaf below is reached.
                    let mut s = slot;
                    for _ in level..depth {
                        s = 2 * s + 1;
                    }
                    flat.leaves[s - internal] = value;
                }
            }
        }
        flat
    }

    #[inline]
    fn step(&self, i: usize, row: &[f64]) -> usize {
        let (f, t) = self.splits[i];
        2 * i + 1 + (row[f] > t) as usize
    }

    #[inline]
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        for _ in 0..self.depth {
            i = self.step(i, row);
        }
        self.leaves[i + 1 - (1 << self.depth)]
    }

    /// Four independent walks in lockstep, which hides load latency.
    #[inline]
    fn predict4(&self, rows: [&[f64]; 4]) -> [f64; 4] {
        let mut i = [0usize; 4];
        for _ in 0..self.depth {
            for r in 0..4 {
                i[r] = self.step(i[r], rows[r]);
            }
        }
        let base = (1 << self.depth) - 1;
        i.map(|i| self.leaves[i - base])
    }
}

/// A tree or ensemble compiled for evaluating many rows.
#[derive(Clone, Debug)]
pub struct FlatEnsemble {
    trees: Vec<FlatTree>,
    kind: Option<EnsembleKind>,
    learning_rate: f64,
    base_score: f64,
    n_features: usize,
}

impl FlatEnsemble {
    /// `None` for non-tree models or trees deeper than [`MAX_FLAT_DEPTH`].
    pub fn compile(model: &AnyModel) -> Option<Self> {
        let (trees, kind, learning_rate, base_score): (Vec<&TreeModel>, _, _, _) = match model {
            AnyModel::Tree(t) => (vec![t], None, 1.0, 0.0),
            AnyModel::Ensemble(e) => (e.trees.iter().collect(), Some(e.kind), e.learning_rate, e.base_score),
            _ => return None,
        };
        if trees.iter().any(|t| t.depth > MAX_FLAT_DEPTH) {
            return None;
        }
        Some(FlatEnsemble {
            trees: trees.into_iter().map(FlatTree::new).collect(),
            kind,
            learning_rate,
            base_score,
            n_features: model.n_features(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Predictions for the rows of a row-major `rows` buffer, bitwise equal
    /// to the model's own `predict_row`.
    pub fn predict_rows(&self, rows: &[f64]) -> Vec<f64> {
        let p = self.n_features;
        let m = rows.len().checked_div(p).unwrap_or(0);
        let mut acc = vec![0.0; m];
        let quads = m / 4 * 4;
        for tree in &self.trees {
            for (a, r) in acc[..quads].chunks_exact_mut(4).zip(rows.chunks_exact(4 * p)) {
                let v = tree.predict4([&r[..p], &r[p..2 * p], &r[2 * p..3 * p], &r[3 * p..]]);
                for q in 0..4 {
                    a[q] += v[q];
                }
            }
            for (a, row) in acc[quads..].iter_mut().zip(rows[quads * p..].chunks_exact(p)) {
                *a += tree.predict(row);
            }
        }
        match self.kind {
            None => acc,
            Some(EnsembleKind::Forest) => {
                let n = self.trees.len() as f64;
                acc.into_iter().map(|s| s / n).collect()
            }
            Some(EnsembleKind::Boosting) => acc.into_iter().map(|s| self.base_score + self.learning_rate * s).collect(),
        }
    }
}
