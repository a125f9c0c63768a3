//! Bound regression: weighted regression of `ĥ(x, s)` on `s`.

use log::warn;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::nuisance::{fit_tree_cv, NuisanceBundle};
use super::{calibrate_surrogate, CalibrationMode, SurrogateError, SurrogateForm, SurrogateModel};
use crate::data::{Cohort, DensityRatio, RandomSource};
use crate::models::{fit_linear, TreeGrid};
use crate::oracle::{WeightKind, WeightScheme};

/// Mean weight below which the weighting is treated as identically zero.
pub const ZERO_WEIGHT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFamily {
    LinearOls,
    LinearLasso,
    Tree,
    /// Tree over quantile indicators `1[s_j ≤ q]`. A greedy CART stands in
    /// for an exact optimal binary tree.
    Bintree,
}

/// Weights from per-unit `ê`, `ρ̂` and density ratio values.
pub fn bound_weights(e: &[f64], rho: &[f64], ratio: &[f64], scheme: WeightScheme) -> Result<Array1<f64>, SurrogateError> {
    match scheme.kind {
        WeightKind::W2 | WeightKind::Wplus | WeightKind::W1 | WeightKind::Uniform => {}
        other => return Err(SurrogateError::InvalidOption(format!("weight scheme {other:?} is not available for bound regression"))),
    }
    if e.len() != rho.len() || e.len() != ratio.len() {
        return Err(crate::models::ModelError::LengthMismatch { expected: e.len(), found: rho.len().min(ratio.len()) }.into());
    }
    Ok(e.iter().zip(rho).zip(ratio).map(|((&e, &r), &q)| q * scheme.value(e, r, f64::NAN)).collect())
}

/// Per-unit weights on the treatment data, before stabilization.
pub fn compute_bound_weights(
    treatment: &Cohort,
    bundle: &NuisanceBundle,
    scheme: WeightScheme,
    ratio: &DensityRatio,
) -> Result<Array1<f64>, SurrogateError> {
    let e_hat = bundle.e()?;
    let rho_hat = bundle.rho()?;
    let xs = treatment.xs();
    let e: Vec<f64> = treatment.x.rows().into_iter().map(|r| e_hat.probability(&r.to_vec())).collect();
    let rho: Vec<f64> = xs.rows().into_iter().map(|r| rho_hat.probability(&r.to_vec())).collect();
    let q = ratio.evaluate(treatment.x.view())?;
    bound_weights(&e, &rho, &q, scheme)
}

/// Per-column decile (by default) thresholds for the binarized tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileBinarizer {
    pub input_dim: usize,
    /// `(column, threshold)` for every indicator, in output order.
    pub thresholds: Vec<(usize, f64)>,
}

impl QuantileBinarizer {
    /// Interior quantiles `ℓ/bins`, `ℓ = 1..bins-1`, with linear
    /// interpolation. Thresholds inducing the same split, or a constant
    /// indicator, are dropped.
    pub fn fit(s: ArrayView2<'_, f64>, bins: usize) -> Self {
        let mut thresholds = Vec::new();
        for j in 0..s.ncols() {
            let mut col: Vec<f64> = s.column(j).to_vec();
            col.sort_by(f64::total_cmp);
            let max = col[col.len() - 1];
            let mut last = f64::NEG_INFINITY;
            for l in 1..bins {
                let pos = l as f64 / bins as f64 * (col.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                let q = col[lo] + (pos - lo as f64) * (col[hi] - col[lo]);
                // Snap to the largest observed value ≤ q: same indicator, no duplicates.
                let q = col[col.partition_point(|&v| v <= q) - 1];
                if q > last && q < max {
                    thresholds.push((j, q));
                    last = q;
                }
            }
        }
        QuantileBinarizer { input_dim: s.ncols(), thresholds }
    }

    pub fn transform_row(&self, s: &[f64]) -> Vec<f64> {
        self.thresholds.iter().map(|&(j, q)| (s[j] <= q) as u8 as f64).collect()
    }

    pub fn transform(&self, s: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((s.nrows(), self.thresholds.len()));
        for (i, row) in s.rows().into_iter().enumerate() {
            for (c, &(j, q)) in self.thresholds.iter().enumerate() {
                out[[i, c]] = (row[j] <= q) as u8 as f64;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundOptions {
    pub lambda: f64,
    /// Rescale weights to mean one.
    pub stabilize: bool,
    pub grid: TreeGrid,
    pub folds: usize,
    pub bins: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions { lambda: super::DEFAULT_LAMBDA, stabilize: true, grid: TreeGrid::standard(), folds: 5, bins: 10 }
    }
}

/// Regresses `ĥ(x_i, s_i)` on `s_i` with the bound weights and
/// level-calibrates the result against `ĥ` on the same units.
pub fn fit_bound_regression(
    treatment: &Cohort,
    bundle: &NuisanceBundle,
    scheme: WeightScheme,
    family: BoundFamily,
    options: &BoundOptions,
    ratio: &DensityRatio,
    source: RandomSource,
) -> Result<SurrogateModel, SurrogateError> {
    let mut w = compute_bound_weights(treatment, bundle, scheme, ratio)?;
    let mean_w = w.mean().unwrap_or(0.0);
    if !(mean_w >= ZERO_WEIGHT_TOL) {
        return Err(SurrogateError::AllZeroWeights);
    }
    if mean_w < 1e-4 {
        warn!("bound-regression weights are nearly zero (mean {mean_w:e})");
    }
    if options.stabilize {
        w /= mean_w;
    }
    let target = bundle.h_values(treatment)?;
    let s = treatment.s.view();
    let model = match family {
        BoundFamily::LinearOls => SurrogateModel::linear(fit_linear(s, target.view(), Some(w.view()), 0.0)?),
        BoundFamily::LinearLasso => SurrogateModel::linear(fit_linear(s, target.view(), Some(w.view()), options.lambda)?),
        BoundFamily::Tree => {
            SurrogateModel::tree(fit_tree_cv(s, target.view(), Some(w.view()), &options.grid, options.folds, source)?)
        }
        BoundFamily::Bintree => {
            let binarizer = QuantileBinarizer::fit(s, options.bins);
            let z = binarizer.transform(s);
            let tree = fit_tree_cv(z.view(), target.view(), Some(w.view()), &options.grid, options.folds, source)?;
            SurrogateModel {
                input_dim: binarizer.input_dim,
                form: SurrogateForm::BinarizedTree { binarizer, tree },
                calibration: Default::default(),
            }
        }
    };
    calibrate_surrogate(&model, s, target.as_slice().expect("contiguous"), CalibrationMode::Level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_set_weights() {
        let w2 = WeightScheme::clipped(WeightKind::W2, 0.3, 0.7);
        let w = bound_weights(&[0.5], &[0.7], &[1.0], w2).unwrap();
        assert!((w[0] - 0.64).abs() < 1e-12);
        let plus = WeightScheme::clipped(WeightKind::Wplus, 0.3, 0.7);
        for rho in [0.1, 0.4, 0.9] {
            assert!((bound_weights(&[0.5], &[rho], &[1.0], plus).unwrap()[0] - 2.0).abs() < 1e-12);
        }
        let same = bound_weights(&[0.35, 0.6], &[0.35, 0.6], &[1.0, 1.0], WeightScheme::new(WeightKind::W1)).unwrap();
        assert!(same.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn ratio_multiplies() {
        let w = bound_weights(&[0.5], &[0.7], &[2.5], WeightScheme::new(WeightKind::W2)).unwrap();
        assert!((w[0] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn signed_scheme_rejected() {
        assert!(bound_weights(&[0.5], &[0.5], &[1.0], WeightScheme::new(WeightKind::Wminus)).is_err());
    }

    #[test]
    fn deciles_of_uniform_grid() {
        let s = Array2::from_shape_fn((11, 1), |(i, _)| i as f64);
        let b = QuantileBinarizer::fit(s.view(), 10);
        let qs: Vec<f64> = b.thresholds.iter().map(|t| t.1).collect();
        assert_eq!(qs, (1..10).map(|v| v as f64).collect::<Vec<_>>());
        assert_eq!(b.transform_row(&[4.0]).iter().sum::<f64>(), 6.0);
        let binary = array![[0.0], [1.0], [1.0], [1.0]];
        assert_eq!(QuantileBinarizer::fit(binary.view(), 10).thresholds.len(), 1);
    }
}
