//! K-fold grid search.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::TreeParams;
use super::{ModelError, Regressor};
use crate::data::RandomSource;

/// Lattice of tree hyperparameters, enumerated with `max_depth` outermost and
/// `ccp_alpha` varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeGrid {
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub ccp_alpha: Vec<f64>,
}

impl TreeGrid {
    /// The 54-point grid used for the tree-based surrogate-index baselines.
    pub fn standard() -> Self {
        TreeGrid {
            max_depth: vec![Some(3), Some(4), None],
            min_samples_leaf: vec![50, 100, 200],
            min_samples_split: vec![100, 200, 400],
            ccp_alpha: vec![0.0, 1e-3],
        }
    }

    pub fn points(&self) -> Vec<TreeParams> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &min_samples_leaf in &self.min_samples_leaf {
                for &min_samples_split in &self.min_samples_split {
                    for &ccp_alpha in &self.ccp_alpha {
                        out.push(TreeParams { max_depth, min_samples_leaf, min_samples_split, ccp_alpha, ..Default::default() });
                    }
                }
            }
        }
        out
    }
}

/// Fold label in `0..folds` for each of `n` rows: a seeded shuffle dealt
/// round-robin, so fold sizes differ by at most one.
pub fn kfold_assignments(n: usize, folds: usize, source: RandomSource) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut source.rng());
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Selects the grid point with the lowest mean out-of-fold (weighted) MSE.
/// Ties keep the earliest point. Returns the index into `grid` and the
/// per-point scores.
pub fn cross_validate_grid<P, M, F>(
    features: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    grid: &[P],
    folds: usize,
    source: RandomSource,
    mut trainer: F,
) -> Result<(usize, Vec<f64>), ModelError>
where
    M: Regressor,
    F: FnMut(ArrayView2<'_, f64>, ArrayView1<'_, f64>, Option<ArrayView1<'_, f64>>, &P) -> Result<M, ModelError>,
{
    let n = features.nrows();
    if folds < 2 {
        return Err(ModelError::InvalidParameter("cross-validation needs at least two folds".into()));
    }
    if n < folds {
        return Err(ModelError::TooFewSamples { needed: folds, found: n });
    }
    if grid.is_empty() {
        return Err(ModelError::InvalidParameter("empty grid".into()));
    }
    let fold = kfold_assignments(n, folds, source);
    let mut scores = vec![0.0; grid.len()];
    for k in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == k).collect();
        let x_tr = features.select(Axis(0), &train);
        let y_tr = targets.select(Axis(0), &train);
        let w_tr = weights.map(|w| w.select(Axis(0), &train));
        let x_te = features.select(Axis(0), &test);
        let w_te: Vec<f64> = test.iter().map(|&i| weights.map_or(1.0, |w| w[i])).collect();
        let w_te_sum: f64 = w_te.iter().sum();
        for (g, point) in grid.iter().enumerate() {
            let model = trainer(x_tr.view(), y_tr.view(), w_tr.as_ref().map(|w| w.view()), point)?;
            let pred = model.predict(x_te.view())?;
            let sse: f64 = test
                .iter()
                .zip(pred.iter())
                .zip(&w_te)
                .map(|((&i, p), w)| w * (targets[i] - p).powi(2))
                .sum();
            scores[g] += if w_te_sum > 0.0 { sse / w_te_sum } else { 0.0 } / folds as f64;
        }
    }
    let mut best = 0;
    for (g, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = g;
        }
    }
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_tree;
    use ndarray::{Array1, Array2};
    use rand::Rng;

    #[test]
    fn standard_grid_order() {
        let pts = TreeGrid::standard().points();
        assert_eq!(pts.len(), 54);
        assert_eq!(pts[0].max_depth, Some(3));
        assert_eq!(pts[1].ccp_alpha, 1e-3);
        assert_eq!(pts[53].max_depth, None);
    }

    #[test]
    fn folds_are_balanced() {
        let f = kfold_assignments(23, 5, RandomSource::new(1, 0));
        let mut counts = [0; 5];
        f.iter().for_each(|&k| counts[k] += 1);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
    }

    #[test]
    fn picks_depth_two_for_depth_two_rule() {
        let mut rng = RandomSource::new(7, 0).rng();
        let x = Array2::from_shape_fn((400, 2), |_| rng.random::<f64>());
        let y: Array1<f64> = x.rows().into_iter().map(|r| if r[0] > 0.5 { if r[1] > 0.3 { 2.0 } else { 1.0 } } else { 0.0 }).collect();
        let grid = vec![TreeParams::with_depth(1), TreeParams::with_depth(2)];
        let (best, _) = cross_validate_grid(x.view(), y.view(), None, &grid, 5, RandomSource::new(8, 0), |x, y, w, p| {
            fit_tree(x, y, w, p)
        })
        .unwrap();
        assert_eq!(best, 1);
    }
}
