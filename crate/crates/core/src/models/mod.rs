//! Supervised-learning primitives used as nuisance models and as surrogate
//! model families.

mod cv;
mod ensemble;
mod flat;
mod linalg;
mod linear;
mod logistic;
mod tree;

pub use cv::{cross_validate_grid, kfold_assignments, TreeGrid};
pub use ensemble::{fit_forest, fit_forest_oob, fit_gbm, EnsembleKind, EnsembleModel, ForestFit, ForestParams, GbmParams, GbmTrace};
pub use flat::{FlatEnsemble, MAX_FLAT_DEPTH};
pub use linear::{fit_linear, fit_linear_through_origin, LinearModel};
pub use logistic::{fit_logistic, logistic_gradient, logistic_objective, LogisticModel};
pub use tree::{fit_tree, Node, TreeBuilder, TreeModel, TreeParams};

pub(crate) use linear::soft_threshold;
pub(crate) use logistic::sigmoid;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("all sample weights are zero")]
    AllZeroWeights,
    #[error("sample weight {0} is negative")]
    NegativeWeight(f64),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("too few samples: need {needed}, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("logistic fit diverges: the classes are separable")]
    Separation,
    #[error("model expects {expected} features, input has {found}")]
    WidthMismatch { expected: usize, found: usize },
}

pub(crate) fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<(), ModelError> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFiniteInput)
    }
}

pub(crate) fn check_weights(weights: ArrayView1<'_, f64>, n: usize) -> Result<(), ModelError> {
    if weights.len() != n {
        return Err(ModelError::LengthMismatch { expected: n, found: weights.len() });
    }
    check_finite(weights.iter())?;
    if let Some(&w) = weights.iter().find(|&&w| w < 0.0) {
        return Err(ModelError::NegativeWeight(w));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(ModelError::AllZeroWeights);
    }
    Ok(())
}

/// A fitted real-valued predictor.
pub trait Regressor {
    fn n_features(&self) -> usize;

    /// Prediction for one row; the caller guarantees the width.
    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Array1<f64>, ModelError> {
        if features.ncols() != self.n_features() {
            return Err(ModelError::WidthMismatch { expected: self.n_features(), found: features.ncols() });
        }
        let mut row = vec![0.0; features.ncols()];
        Ok(features
            .rows()
            .into_iter()
            .map(|r| {
                for (dst, src) in row.iter_mut().zip(r.iter()) {
                    *dst = *src;
                }
                self.predict_row(&row)
            })
            .collect())
    }
}

/// Any fitted model, serialized with a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyModel {
    Linear(LinearModel),
    Logistic(LogisticModel),
    Tree(TreeModel),
    Ensemble(EnsembleModel),
}

impl Regressor for AnyModel {
    fn n_features(&self) -> usize {
        match self {
            AnyModel::Linear(m) => m.n_features(),
            AnyModel::Logistic(m) => m.n_features(),
            AnyModel::Tree(m) => m.n_features(),
            AnyModel::Ensemble(m) => m.n_features(),
        }
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            AnyModel::Linear(m) => m.predict_row(row),
            AnyModel::Logistic(m) => m.predict_row(row),
            AnyModel::Tree(m) => m.predict_row(row),
            AnyModel::Ensemble(m) => m.predict_row(row),
        }
    }
}

impl From<LinearModel> for AnyModel {
    fn from(m: LinearModel) -> Self {
        AnyModel::Linear(m)
    }
}

impl From<LogisticModel> for AnyModel {
    fn from(m: LogisticModel) -> Self {
        AnyModel::Logistic(m)
    }
}

impl From<TreeModel> for AnyModel {
    fn from(m: TreeModel) -> Self {
        AnyModel::Tree(m)
    }
}

impl From<EnsembleModel> for AnyModel {
    fn from(m: EnsembleModel) -> Self {
        AnyModel::Ensemble(m)
    }
}

/// Predictions of `model` on every row of `features`.
pub fn predict(model: &AnyModel, features: ArrayView2<'_, f64>) -> Result<Array1<f64>, ModelError> {
    model.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn predict_examples() {
        let lin = AnyModel::from(LinearModel::new(array![1.0, -1.0], 3.0));
        assert_eq!(predict(&lin, array![[2.0, 1.0]].view()).unwrap(), array![4.0]);
        let logit = AnyModel::from(LogisticModel { coefficients: array![0.0], intercept: 0.0 });
        assert_eq!(predict(&logit, array![[5.0]].view()).unwrap(), array![0.5]);
        let leaf = AnyModel::from(TreeModel::constant(7.0, 3));
        assert_eq!(predict(&leaf, Array2::zeros((2, 3)).view()).unwrap(), array![7.0, 7.0]);
    }

    #[test]
    fn width_mismatch() {
        let lin = AnyModel::from(LinearModel::new(array![1.0, -1.0], 3.0));
        assert!(matches!(
            predict(&lin, array![[1.0]].view()),
            Err(ModelError::WidthMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let lin = AnyModel::from(LinearModel::new(array![0.1 + 0.2, std::f64::consts::PI], -1.0 / 3.0));
        let back: AnyModel = serde_json::from_str(&serde_json::to_string(&lin).unwrap()).unwrap();
        let x = array![[0.7, -2.3]];
        assert_eq!(predict(&lin, x.view()).unwrap()[0].to_bits(), predict(&back, x.view()).unwrap()[0].to_bits());
    }
}
