//! Weighted CART regression trees.
//!
//! Splits are chosen greedily to maximize the reduction of the weighted sum
//! of squared errors `Σ_L Σ_{i∈L} w_i (y_i - μ̂(L))²`, where `μ̂(L)` is the
//! weighted mean of the leaf. Candidate thresholds are midpoints between
//! consecutive distinct values; ties go to the lowest feature index and then
//! the lowest threshold. Minimal cost-complexity pruning runs after growth.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{check_finite, check_weights, ModelError, Regressor};
use crate::data::StreamRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until the other limits stop it.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub ccp_alpha: f64,
    /// Features examined per split; `None` means all of them.
    #[serde(default)]
    pub max_features: Option<usize>,
    /// Ridge on leaf values, `Σwy / (Σw + l2)`. Zero for plain CART.
    #[serde(default)]
    pub leaf_l2: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_samples_leaf: 1, min_samples_split: 2, ccp_alpha: 0.0, max_features: None, leaf_l2: 0.0 }
    }
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> Self {
        TreeParams { max_depth: Some(max_depth), ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub depth: usize,
    pub params: TreeParams,
}

impl TreeModel {
    /// A single-leaf tree.
    pub fn constant(value: f64, n_features: usize) -> Self {
        TreeModel { nodes: vec![Node::Leaf { value }], n_features, depth: 0, params: TreeParams::default() }
    }

    /// Index of the leaf `row` lands in.
    pub fn apply(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split { feature, threshold, left, right } => {
                    id = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Rewrites feature indices through `map` (used when a tree fitted on a
    /// column subset is embedded into a wider input).
    pub fn remap_features(mut self, map: &[usize], n_features: usize) -> Self {
        for node in &mut self.nodes {
            if let Node::Split { feature, .. } = node {
                *feature = map[*feature];
            }
        }
        self.n_features = n_features;
        self
    }
}

impl Regressor for TreeModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.apply(row)] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }
}

pub fn fit_tree(
    features: ArrayView2<'_, f64>,
    targets: ndarray::ArrayView1<'_, f64>,
    weights: Option<ndarray::ArrayView1<'_, f64>>,
    params: &TreeParams,
) -> Result<TreeModel, ModelError> {
    let y = targets.to_vec();
    let w = weights.map(|w| w.to_vec());
    TreeBuilder::new(features)?.fit(&y, w.as_deref(), params, None)
}

/// Column-major copy of a feature matrix with every column presorted once,
/// so that many trees on the same rows (forests, boosting rounds, CV grids)
/// share the sorting work.
pub struct TreeBuilder {
    columns: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
    n: usize,
}

#[derive(Clone, Copy, Debug)]
struct NodeStats {
    weight: f64,
    sse: f64,
    value: f64,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
}

enum Slot {
    Pending,
    Leaf,
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

impl TreeBuilder {
    pub fn new(features: ArrayView2<'_, f64>) -> Result<Self, ModelError> {
        check_finite(features.iter())?;
        let n = features.nrows();
        let columns: Vec<Vec<f64>> = features.columns().into_iter().map(|c| c.to_vec()).collect();
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Ok(TreeBuilder { columns, sorted, n })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Grows a tree on `targets` with optional sample `weights` (rows with
    /// zero weight are ignored). `rng` is required when `max_features`
    /// restricts the features examined per split.
    pub fn fit(
        &self,
        targets: &[f64],
        weights: Option<&[f64]>,
        params: &TreeParams,
        mut rng: Option<&mut StreamRng>,
    ) -> Result<TreeModel, ModelError> {
        let n = self.n;
        let p = self.columns.len();
        if targets.len() != n {
            return Err(ModelError::LengthMismatch { expected: n, found: targets.len() });
        }
        check_finite(targets.iter())?;
        if let Some(w) = weights {
            check_weights(ndarray::ArrayView1::from(w), n)?;
        }
        if n == 0 {
            return Err(ModelError::TooFewSamples { needed: 1, found: 0 });
        }
        let max_features = params.max_features.map(|m| m.clamp(1, p.max(1)));
        if max_features.is_some_and(|m| m < p) && rng.is_none() {
            return Err(ModelError::InvalidParameter("feature subsampling needs a random source".into()));
        }
        let wt = |i: usize| weights.map_or(1.0, |w| w[i]);

        let root: Vec<Vec<u32>> = self
            .sorted
            .iter()
            .map(|order| order.iter().copied().filter(|&i| wt(i as usize) > 0.0).collect())
            .collect();
        let root = if p == 0 {
            vec![(0..n as u32).filter(|&i| wt(i as usize) > 0.0).collect()]
        } else {
            root
        };

        let mut slots: Vec<Slot> = vec![Slot::Pending];
        let mut stats: Vec<NodeStats> = vec![NodeStats { weight: 0.0, sse: 0.0, value: 0.0 }];
        let mut depths: Vec<usize> = vec![0];
        let mut stack: Vec<(usize, Vec<Vec<u32>>, usize)> = vec![(0, root, 0)];
        let mut go_left = vec![false; n];

        while let Some((id, lists, depth)) = stack.pop() {
            let rows = &lists[0];
            let (mut wsum, mut wy) = (0.0, 0.0);
            for &i in rows {
                let i = i as usize;
                wsum += wt(i);
                wy += wt(i) * targets[i];
            }
            let mean = wy / wsum;
            let sse: f64 = rows
                .iter()
                .map(|&i| {
                    let d = targets[i as usize] - mean;
                    wt(i as usize) * d * d
                })
                .sum();
            stats[id] = NodeStats { weight: wsum, sse, value: wy / (wsum + params.leaf_l2) };
            depths[id] = depth;

            let m = rows.len();
            let can_split = p > 0
                && params.max_depth.is_none_or(|d| depth < d)
                && m >= params.min_samples_split.max(2)
                && m >= 2 * params.min_samples_leaf.max(1)
                && sse > f64::EPSILON * f64::EPSILON * wsum * (1.0 + mean * mean);
            let choice = if can_split {
                let candidates: Vec<usize> = match max_features {
                    Some(k) if k < p => {
                        let r = rng.as_deref_mut().expect("checked above");
                        let mut f: Vec<usize> = sample(r, p, k).into_vec();
                        f.sort_unstable();
                        f
                    }
                    _ => (0..p).collect(),
                };
                self.best_split(&lists, &candidates, targets, &wt, mean, sse, params.min_samples_leaf.max(1))
            } else {
                None
            };

            match choice {
                None => slots[id] = Slot::Leaf,
                Some(SplitChoice { feature, threshold }) => {
                    let col = &self.columns[feature];
                    for &i in rows {
                        go_left[i as usize] = col[i as usize] <= threshold;
                    }
                    let mut left_lists = Vec::with_capacity(lists.len());
                    let mut right_lists = Vec::with_capacity(lists.len());
                    for list in &lists {
                        let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&i| go_left[i as usize]);
                        left_lists.push(l);
                        right_lists.push(r);
                    }
                    let left = slots.len();
                    let right = left + 1;
                    for _ in 0..2 {
                        slots.push(Slot::Pending);
                        stats.push(NodeStats { weight: 0.0, sse: 0.0, value: 0.0 });
                        depths.push(depth + 1);
                    }
                    slots[id] = Slot::Split { feature, threshold, left, right };
                    stack.push((right, right_lists, depth + 1));
                    stack.push((left, left_lists, depth + 1));
                }
            }
        }

        if params.ccp_alpha > 0.0 {
            prune(&mut slots, &stats, params.ccp_alpha);
        }
        Ok(compact(&slots, &stats, p, params))
    }

    #[allow(clippy::too_many_arguments)]
    fn best_split(
        &self,
        lists: &[Vec<u32>],
        candidates: &[usize],
        targets: &[f64],
        wt: &dyn Fn(usize) -> f64,
        mean: f64,
        sse: f64,
        min_leaf: usize,
    ) -> Option<SplitChoice> {
        let m = lists[0].len();
        let (mut w_tot, mut s_tot) = (0.0, 0.0);
        for &i in &lists[0] {
            let i = i as usize;
            w_tot += wt(i);
            s_tot += wt(i) * (targets[i] - mean);
        }
        let base = s_tot * s_tot / w_tot;
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in candidates {
            let col = &self.columns[f];
            let order = &lists[f];
            let (mut w_l, mut s_l) = (0.0, 0.0);
            for pos in 0..m - 1 {
                let i = order[pos] as usize;
                w_l += wt(i);
                s_l += wt(i) * (targets[i] - mean);
                let n_l = pos + 1;
                if n_l < min_leaf {
                    continue;
                }
                if m - n_l < min_leaf {
                    break;
                }
                let a = col[i];
                let b = col[order[pos + 1] as usize];
                if !(a < b) {
                    continue;
                }
                let w_r = w_tot - w_l;
                if w_l <= 0.0 || w_r <= 0.0 {
                    continue;
                }
                let s_r = s_tot - s_l;
                let gain = s_l * s_l / w_l + s_r * s_r / w_r - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((gain, f, threshold));
                }
            }
        }
        match best {
            Some((gain, feature, threshold)) if gain > 1e-12 * sse => Some(SplitChoice { feature, threshold }),
            _ => None,
        }
    }
}

/// Weakest-link pruning: repeatedly collapse the internal node with the
/// smallest `(R(t) - R(T_t)) / (|leaves(T_t)| - 1)` while it is `<= alpha`,
/// where `R` is the weighted SSE divided by the root weight.
fn prune(slots: &mut [Slot], stats: &[NodeStats], alpha: f64) {
    let total = stats[0].weight;
    loop {
        let k = slots.len();
        let mut leaves = vec![0usize; k];
        let mut sub_sse = vec![0.0; k];
        let mut reachable = vec![false; k];
        reachable[0] = true;
        for id in 0..k {
            if !reachable[id] {
                continue;
            }
            if let Slot::Split { left, right, .. } = slots[id] {
                reachable[left] = true;
                reachable[right] = true;
            }
        }
        for id in (0..k).rev() {
            if !reachable[id] {
                continue;
            }
            match slots[id] {
                Slot::Split { left, right, .. } => {
                    leaves[id] = leaves[left] + leaves[right];
                    sub_sse[id] = sub_sse[left] + sub_sse[right];
                }
                _ => {
                    leaves[id] = 1;
                    sub_sse[id] = stats[id].sse;
                }
            }
        }
        let mut weakest: Option<(f64, usize)> = None;
        for id in 0..k {
            if reachable[id] && matches!(slots[id], Slot::Split { .. }) {
                let g = (stats[id].sse - sub_sse[id]) / total / (leaves[id] as f64 - 1.0);
                if weakest.is_none_or(|(best, _)| g < best) {
                    weakest = Some((g, id));
                }
            }
        }
        match weakest {
            Some((g, id)) if g <= alpha => slots[id] = Slot::Leaf,
            _ => return,
        }
    }
}

fn compact(slots: &[Slot], stats: &[NodeStats], n_features: usize, params: &TreeParams) -> TreeModel {
    let mut nodes = Vec::new();
    let mut depth = 0;
    // (old id, depth, parent new id, is_left)
    let mut stack = vec![(0usize, 0usize, usize::MAX, false)];
    while let Some((old, d, parent, is_left)) = stack.pop() {
        let new_id = nodes.len();
        depth = depth.max(d);
        match slots[old] {
            Slot::Split { feature, threshold, left, right } => {
                nodes.push(Node::Split { feature, threshold, left: usize::MAX, right: usize::MAX });
                stack.push((right, d + 1, new_id, false));
                stack.push((left, d + 1, new_id, true));
            }
            _ => nodes.push(Node::Leaf { value: stats[old].value }),
        }
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if is_left {
                    *left = new_id;
                } else {
                    *right = new_id;
                }
            }
        }
    }
    TreeModel { nodes, n_features, depth, params: params.clone() }
}
