//! Learners for plug-in surrogates.
//!
//! Every learner returns a [`SurrogateModel`], a function of the surrogates
//! `s` alone, except the surrogate-index baselines, which return the fitted
//! `ĥ(x, s) = E[Y | X = x, S = s]` itself (see [`Endpoint`]).
//!
//! - [`fit_surrogate_sampling`] draws counterfactual surrogates from a
//!   [`ConditionalSampler`] and regresses the per-unit contrast of `ĥ` on the
//!   per-unit contrast of `s`.
//! - [`fit_bound_regression`] regresses `ĥ(x, s)` on `s` with weights built
//!   from the propensity `ê(x)` and the surrogate score `ρ̂(x, s)`.
//! - [`fit_outcome_regression`] and [`fit_reg_sel_reg`] are the naive baselines.

mod baselines;
mod bound;
mod nuisance;
mod registry;
mod sampler;
mod sampling;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::models::{LinearModel, ModelError, Regressor, TreeModel};

pub use baselines::{fit_outcome_regression, fit_reg_sel_reg, standardized_coefficients, BaselineFamily, BaselineOptions};
pub use bound::{bound_weights, compute_bound_weights, fit_bound_regression, BoundFamily, BoundOptions, QuantileBinarizer, ZERO_WEIGHT_TOL};
pub use nuisance::{
    fit_nuisances, fit_propensity, fit_surrogate_index, fit_surrogate_score, fit_tree_cv, IndexFamily, IndexOptions,
    NuisanceBundle, NuisanceRequest, Propensity, LOGISTIC_L2,
};
pub use registry::{fit_method, Endpoint, MethodId, MethodOptions, NuisanceCache, TrainingData};
pub use sampler::{fit_conditional_sampler, ConditionalSampler};
pub use sampling::{
    estimate_sampling_risk, fit_surrogate_sampling, fit_surrogate_sampling_from, sample_contrasts, Optimizer,
    SampledContrasts, SamplingFit,
};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_CLIP: (f64, f64) = (0.3, 0.7);
pub const DEFAULT_DRAWS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("the outcome column is required")]
    MissingOutcome,
    #[error("the treatment column is required")]
    MissingTreatment,
    #[error("nuisance `{0}` has not been fitted")]
    UnfittedNuisance(&'static str),
    #[error("all weights are (numerically) zero: S carries no information about T given X")]
    AllZeroWeights,
    #[error("every sampled surrogate contrast is zero: no surrogate responds to treatment")]
    DegenerateContrasts,
    #[error("arm {0} has fewer than two units")]
    SingleArmData(u8),
    #[error("surrogate model expects {expected} inputs, got {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(DataError),
}

impl From<DataError> for SurrogateError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::MissingColumn("y") => SurrogateError::MissingOutcome,
            DataError::MissingColumn("t") => SurrogateError::MissingTreatment,
            other => SurrogateError::Data(other),
        }
    }
}

/// Affine output map `scale · f(s) + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    pub offset: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { scale: 1.0, offset: 0.0 }
    }
}

/// How [`calibrate_surrogate`] adjusts a surrogate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Match the mean only.
    #[default]
    Level,
    /// Match the standard deviation too. Changes estimated effects.
    LevelAndScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SurrogateForm {
    Linear(LinearModel),
    Tree(TreeModel),
    /// A tree over indicator features `1[s_j ≤ q]`.
    BinarizedTree { binarizer: QuantileBinarizer, tree: TreeModel },
}

/// A plug-in surrogate `f: R^d -> R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub form: SurrogateForm,
    pub input_dim: usize,
    #[serde(default)]
    pub calibration: Calibration,
}

impl SurrogateModel {
    pub fn linear(model: LinearModel) -> Self {
        SurrogateModel { input_dim: model.coefficients.len(), form: SurrogateForm::Linear(model), calibration: Calibration::default() }
    }

    pub fn tree(model: TreeModel) -> Self {
        SurrogateModel { input_dim: model.n_features, form: SurrogateForm::Tree(model), calibration: Calibration::default() }
    }

    /// Coefficients `β_f` and intercept `b_f` of a linear surrogate, after calibration.
    pub fn linear_parts(&self) -> Option<(Array1<f64>, f64)> {
        match &self.form {
            SurrogateForm::Linear(m) => Some((
                &m.coefficients * self.calibration.scale,
                self.calibration.scale * m.intercept + self.calibration.offset,
            )),
            _ => None,
        }
    }

    fn raw(&self, s: &[f64]) -> f64 {
        match &self.form {
            SurrogateForm::Linear(m) => m.predict_row(s),
            SurrogateForm::Tree(t) => t.predict_row(s),
            SurrogateForm::BinarizedTree { binarizer, tree } => tree.predict_row(&binarizer.transform_row(s)),
        }
    }

    /// `f(s)` for one unit.
    pub fn evaluate_row(&self, s: &[f64]) -> Result<f64, SurrogateError> {
        if s.len() != self.input_dim {
            return Err(SurrogateError::WidthMismatch { expected: self.input_dim, found: s.len() });
        }
        Ok(self.calibration.scale * self.raw(s) + self.calibration.offset)
    }

    /// `f(s_i)` for every row of `s`.
    pub fn evaluate(&self, s: ArrayView2<'_, f64>) -> Result<Array1<f64>, SurrogateError> {
        if s.ncols() != self.input_dim {
            return Err(SurrogateError::WidthMismatch { expected: self.input_dim, found: s.ncols() });
        }
        let mut buf = vec![0.0; self.input_dim];
        Ok(s.rows()
            .into_iter()
            .map(|row| {
                buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
                self.calibration.scale * self.raw(&buf) + self.calibration.offset
            })
            .collect())
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = calibration;
        self
    }
}

/// Calibrates `f` against `target` (usually `ĥ` or `y` on the observational
/// cohort whose surrogates are `s`). Level mode keeps the current scale and
/// sets the offset so that the means agree.
pub fn calibrate_surrogate(
    f: &SurrogateModel,
    s: ArrayView2<'_, f64>,
    target: &[f64],
    mode: CalibrationMode,
) -> Result<SurrogateModel, SurrogateError> {
    if target.len() != s.nrows() {
        return Err(ModelError::LengthMismatch { expected: s.nrows(), found: target.len() }.into());
    }
    if target.is_empty() {
        return Err(ModelError::TooFewSamples { needed: 1, found: 0 }.into());
    }
    let base = f.clone().with_calibration(Calibration::default());
    let raw = base.evaluate(s)?;
    let n = raw.len() as f64;
    let mean_f = raw.sum() / n;
    let mean_t = target.iter().sum::<f64>() / n;
    let scale = match mode {
        CalibrationMode::Level => f.calibration.scale,
        CalibrationMode::LevelAndScale => {
            let sd_f = (raw.iter().map(|v| (v - mean_f).powi(2)).sum::<f64>() / n).sqrt();
            let sd_t = (target.iter().map(|v| (v - mean_t).powi(2)).sum::<f64>() / n).sqrt();
            if sd_f > 0.0 {
                sd_t / sd_f
            } else {
                f.calibration.scale
            }
        }
    };
    Ok(base.with_calibration(Calibration { scale, offset: mean_t - scale * mean_f }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn lin(beta: Array1<f64>, b: f64) -> SurrogateModel {
        SurrogateModel::linear(LinearModel::new(beta, b))
    }

    #[test]
    fn calibration_is_affine() {
        let f = lin(array![1.0, -2.0], 0.5).with_calibration(Calibration { scale: 3.0, offset: -1.0 });
        let v = f.evaluate_row(&[2.0, 1.0]).unwrap();
        assert_eq!(v, 3.0 * (2.0 - 2.0 + 0.5) - 1.0);
    }

    #[test]
    fn level_calibration_sets_offset() {
        let f = lin(array![1.0], 0.0);
        let s = array![[2.0], [4.0]];
        let g = calibrate_surrogate(&f, s.view(), &[9.0, 11.0], CalibrationMode::Level).unwrap();
        assert_eq!(g.calibration, Calibration { scale: 1.0, offset: 7.0 });
        let again = calibrate_surrogate(&g, s.view(), &[9.0, 11.0], CalibrationMode::Level).unwrap();
        assert_eq!(again.calibration.offset, 7.0);
        let out = again.evaluate(s.view()).unwrap();
        assert!((out.sum() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn scale_mode_matches_spread() {
        let f = lin(array![1.0], 0.0);
        let s = array![[0.0], [1.0]];
        let g = calibrate_surrogate(&f, s.view(), &[0.0, 4.0], CalibrationMode::LevelAndScale).unwrap();
        assert_eq!(g.evaluate(s.view()).unwrap(), array![0.0, 4.0]);
    }

    #[test]
    fn width_is_checked() {
        let f = lin(array![1.0, 1.0], 0.0);
        assert!(matches!(f.evaluate_row(&[1.0]), Err(SurrogateError::WidthMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn linear_parts_include_calibration() {
        let f = lin(array![2.0], 1.0).with_calibration(Calibration { scale: 2.0, offset: 3.0 });
        let (b, c) = f.linear_parts().unwrap();
        assert_eq!(b, array![4.0]);
        assert_eq!(c, 5.0);
    }

    #[test]
    fn json_round_trip() {
        let f = lin(array![0.1 + 0.2, -1.0 / 3.0], 0.7).with_calibration(Calibration { scale: 1.0, offset: 0.3 });
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<SurrogateModel>(&text).unwrap(), f);
    }
}
