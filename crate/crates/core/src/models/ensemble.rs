//! Random forests and least-squares gradient boosting built on [`TreeBuilder`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{TreeBuilder, TreeModel, TreeParams};
use super::{check_finite, check_weights, ModelError, Regressor};
use crate::data::RandomSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Forest,
    Boosting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub trees: Vec<TreeModel>,
    pub kind: EnsembleKind,
    pub learning_rate: f64,
    pub base_score: f64,
    pub n_features: usize,
}

impl EnsembleModel {
    /// Predictions for every row of `x`, looping trees outermost so each tree
    /// stays in cache. Bitwise equal to per-row `predict_row`.
    pub fn predict_rows(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut acc = vec![0.0; rows.len()];
        for tree in &self.trees {
            for (a, row) in acc.iter_mut().zip(&rows) {
                *a += tree.predict_row(row);
            }
        }
        match self.kind {
            EnsembleKind::Forest => acc.into_iter().map(|s| s / self.trees.len() as f64).collect(),
            EnsembleKind::Boosting => acc.into_iter().map(|s| self.base_score + self.learning_rate * s).collect(),
        }
    }
}

impl Regressor for EnsembleModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        match self.kind {
            EnsembleKind::Forest => sum / self.trees.len() as f64,
            EnsembleKind::Boosting => self.base_score + self.learning_rate * sum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` examines every feature at every split.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: None, min_samples_leaf: 5, features_per_split: None, bootstrap: true }
    }
}

/// A forest together with its out-of-bag predictions on the training rows.
#[derive(Clone, Debug)]
pub struct ForestFit {
    pub model: EnsembleModel,
    /// Mean over trees whose bootstrap sample left the row out; rows that
    /// every tree saw fall back to the full forest prediction.
    pub oob_predictions: Array1<f64>,
}

pub fn fit_forest(
    features: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
    params: &ForestParams,
    source: RandomSource,
) -> Result<EnsembleModel, ModelError> {
    Ok(fit_forest_oob(features, targets, params, source)?.model)
}

pub fn fit_forest_oob(
    features: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
    params: &ForestParams,
    source: RandomSource,
) -> Result<ForestFit, ModelError> {
    let n = features.nrows();
    if targets.len() != n {
        return Err(ModelError::LengthMismatch { expected: n, found: targets.len() });
    }
    if n < 2 {
        return Err(ModelError::TooFewSamples { needed: 2, found: n });
    }
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParameter("a forest needs at least one tree".into()));
    }
    let builder = TreeBuilder::new(features)?;
    let y = targets.to_vec();
    check_finite(y.iter())?;
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        min_samples_split: 2 * params.min_samples_leaf.max(1),
        ccp_alpha: 0.0,
        max_features: params.features_per_split,
        leaf_l2: 0.0,
    };

    let fitted: Vec<(TreeModel, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = source.substream(b as u64).rng();
            let counts = if params.bootstrap {
                let mut c = vec![0.0; n];
                for _ in 0..n {
                    c[rng.random_range(0..n)] += 1.0;
                }
                c
            } else {
                vec![1.0; n]
            };
            builder.fit(&y, Some(&counts), &tree_params, Some(&mut rng)).map(|t| (t, counts))
        })
        .collect::<Result<_, _>>()?;

    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    let mut trees = Vec::with_capacity(fitted.len());
    for (tree, counts) in fitted {
        for (i, row) in features.axis_iter(Axis(0)).enumerate() {
            if counts[i] == 0.0 {
                oob_sum[i] += tree.predict_row(row.as_slice().unwrap_or(&row.to_vec()));
                oob_count[i] += 1;
            }
        }
        trees.push(tree);
    }
    let model = EnsembleModel {
        trees,
        kind: EnsembleKind::Forest,
        learning_rate: 1.0,
        base_score: 0.0,
        n_features: features.ncols(),
    };
    let oob_predictions = (0..n)
        .map(|i| {
            if oob_count[i] > 0 {
                oob_sum[i] / oob_count[i] as f64
            } else {
                let row = features.row(i).to_vec();
                model.predict_row(&row)
            }
        })
        .collect();
    Ok(ForestFit { model, oob_predictions })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub l2: f64,
    pub early_stopping: bool,
    pub validation_fraction: f64,
    pub n_iter_no_change: usize,
    /// Relative improvement of the validation loss that counts as progress.
    pub tol: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            max_depth: Some(6),
            min_samples_leaf: 50,
            learning_rate: 0.05,
            max_iter: 400,
            l2: 0.0,
            early_stopping: true,
            validation_fraction: 0.1,
            n_iter_no_change: 20,
            tol: 1e-7,
        }
    }
}

/// Per-round losses of a boosting run. Index 0 is the constant model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GbmTrace {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Number of trees kept (the round with the lowest validation loss).
    pub best_iteration: usize,
    /// Number of rounds actually run.
    pub rounds: usize,
}

/// Least-squares gradient boosting. With early stopping the model is rolled
/// back to the round with the lowest validation loss.
pub fn fit_gbm(
    features: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    params: &GbmParams,
    source: RandomSource,
) -> Result<(EnsembleModel, GbmTrace), ModelError> {
    let n = features.nrows();
    if targets.len() != n {
        return Err(ModelError::LengthMismatch { expected: n, found: targets.len() });
    }
    check_finite(features.iter())?;
    check_finite(targets.iter())?;
    if let Some(w) = weights {
        check_weights(w, n)?;
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(ModelError::InvalidParameter(format!("learning rate {} outside (0, 1]", params.learning_rate)));
    }
    let needed = if params.early_stopping { 20 } else { 1 };
    if n < needed {
        return Err(ModelError::TooFewSamples { needed, found: n });
    }

    let (train, valid) = if params.early_stopping {
        let n_val = ((params.validation_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut source.rng());
        let (v, t) = order.split_at(n_val);
        let (mut t, mut v) = (t.to_vec(), v.to_vec());
        t.sort_unstable();
        v.sort_unstable();
        (t, v)
    } else {
        ((0..n).collect::<Vec<_>>(), Vec::new())
    };

    let take = |idx: &[usize]| -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        (
            features.select(Axis(0), idx),
            idx.iter().map(|&i| targets[i]).collect(),
            idx.iter().map(|&i| weights.map_or(1.0, |w| w[i])).collect(),
        )
    };
    let (x_tr, y_tr, w_tr) = take(&train);
    let (x_va, y_va, w_va) = take(&valid);
    let w_sum: f64 = w_tr.iter().sum();
    if w_sum <= 0.0 {
        return Err(ModelError::AllZeroWeights);
    }
    let base_score = y_tr.iter().zip(&w_tr).map(|(y, w)| y * w).sum::<f64>() / w_sum;

    let builder = TreeBuilder::new(x_tr.view())?;
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        min_samples_split: 2 * params.min_samples_leaf.max(1),
        ccp_alpha: 0.0,
        max_features: None,
        leaf_l2: params.l2,
    };

    let loss = |pred: &[f64], y: &[f64], w: &[f64]| -> f64 {
        let ws: f64 = w.iter().sum();
        pred.iter().zip(y).zip(w).map(|((p, y), w)| w * (y - p) * (y - p)).sum::<f64>() / ws.max(f64::MIN_POSITIVE)
    };
    let mut f_tr = vec![base_score; y_tr.len()];
    let mut f_va = vec![base_score; y_va.len()];
    let mut trace = GbmTrace {
        train_loss: vec![loss(&f_tr, &y_tr, &w_tr)],
        validation_loss: if valid.is_empty() { Vec::new() } else { vec![loss(&f_va, &y_va, &w_va)] },
        best_iteration: 0,
        rounds: 0,
    };
    let mut best_val = trace.validation_loss.first().copied().unwrap_or(f64::INFINITY);
    let mut since_best = 0;
    let mut trees: Vec<TreeModel> = Vec::new();
    let mut residual = vec![0.0; y_tr.len()];

    for _ in 0..params.max_iter {
        for ((r, y), f) in residual.iter_mut().zip(&y_tr).zip(&f_tr) {
            *r = y - f;
        }
        let tree = builder.fit(&residual, Some(&w_tr), &tree_params, None)?;
        for (f, row) in f_tr.iter_mut().zip(x_tr.rows()) {
            *f += params.learning_rate * tree.predict_row(row.as_slice().expect("owned rows are contiguous"));
        }
        for (f, row) in f_va.iter_mut().zip(x_va.rows()) {
            *f += params.learning_rate * tree.predict_row(row.as_slice().expect("owned rows are contiguous"));
        }
        trees.push(tree);
        trace.rounds += 1;
        trace.train_loss.push(loss(&f_tr, &y_tr, &w_tr));
        if params.early_stopping {
            let v = loss(&f_va, &y_va, &w_va);
            trace.validation_loss.push(v);
            if v < best_val - params.tol * best_val.abs() {
                best_val = v;
                trace.best_iteration = trees.len();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= params.n_iter_no_change {
                    break;
                }
            }
        } else {
            trace.best_iteration = trees.len();
        }
    }
    trees.truncate(trace.best_iteration);
    let model = EnsembleModel {
        trees,
        kind: EnsembleKind::Boosting,
        learning_rate: params.learning_rate,
        base_score,
        n_features: features.ncols(),
    };
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_tree;
    use ndarray::Array1;
    use rand_distr::{Distribution, StandardNormal};

    fn uniform_design(seed: u64, n: usize, p: usize) -> Array2<f64> {
        let mut rng = RandomSource::new(seed, 0).rng();
        Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn degenerate_forest_equals_tree() {
        let x = uniform_design(1, 120, 3);
        let y = Array1::from_shape_fn(120, |i| x[[i, 0]] - x[[i, 1]] * x[[i, 2]]);
        let params = ForestParams { n_trees: 1, max_depth: Some(5), min_samples_leaf: 4, features_per_split: None, bootstrap: false };
        let forest = fit_forest(x.view(), y.view(), &params, RandomSource::new(3, 0)).unwrap();
        let tree_params = TreeParams { max_depth: Some(5), min_samples_leaf: 4, min_samples_split: 8, ..Default::default() };
        let tree = fit_tree(x.view(), y.view(), None, &tree_params).unwrap();
        assert_eq!(forest.predict(x.view()).unwrap(), tree.predict(x.view()).unwrap());
    }

    #[test]
    fn forest_is_deterministic() {
        let x = uniform_design(2, 200, 4);
        let y = Array1::from_shape_fn(200, |i| x[[i, 0]] + x[[i, 3]]);
        let params = ForestParams { n_trees: 10, features_per_split: Some(2), ..Default::default() };
        let a = fit_forest(x.view(), y.view(), &params, RandomSource::new(4, 0)).unwrap();
        let b = fit_forest(x.view(), y.view(), &params, RandomSource::new(4, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_targets_keep_no_trees() {
        let x = uniform_design(5, 100, 2);
        let y = Array1::from_elem(100, 3.5);
        let (m, trace) = fit_gbm(x.view(), y.view(), None, &GbmParams::default(), RandomSource::new(5, 0)).unwrap();
        assert!(m.trees.is_empty());
        assert_eq!(m.base_score, 3.5);
        assert!(trace.rounds < 400);
    }

    #[test]
    fn training_loss_never_increases() {
        let x = uniform_design(6, 400, 2);
        let mut rng = RandomSource::new(6, 1).rng();
        let y = Array1::from_shape_fn(400, |i| x[[i, 0]].powi(2) + { let e: f64 = StandardNormal.sample(&mut rng); 0.1 * e });
        let params = GbmParams { min_samples_leaf: 10, max_iter: 60, early_stopping: false, ..Default::default() };
        let (_, trace) = fit_gbm(x.view(), y.view(), None, &params, RandomSource::new(6, 0)).unwrap();
        assert!(trace.train_loss.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}
