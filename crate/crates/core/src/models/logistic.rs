//! L2-penalized logistic regression fitted by Newton / IRLS.
//!
//! Minimizes `Σ_i logloss_i + (α/2)‖β‖²`; the intercept is not penalized.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linalg::solve_spd;
use super::{check_finite, ModelError, Regressor};

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(c, z)| c * z).sum::<f64>()
    }

    /// `P(label = 1 | row)`, kept strictly inside (0, 1).
    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row)).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }
}

impl Regressor for LogisticModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.probability(row)
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood at `(intercept, coefficients)`.
pub fn logistic_objective(features: ArrayView2<'_, f64>, labels: &[u8], l2: f64, model: &LogisticModel) -> f64 {
    let nll: f64 = features
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let eta = model.intercept + row.dot(&model.coefficients);
            log1p_exp(eta) - y as f64 * eta
        })
        .sum();
    nll + 0.5 * l2 * model.coefficients.dot(&model.coefficients)
}

/// Gradient of [`logistic_objective`], ordered `[intercept, coefficients...]`.
pub fn logistic_gradient(features: ArrayView2<'_, f64>, labels: &[u8], l2: f64, model: &LogisticModel) -> Array1<f64> {
    let p = features.ncols();
    let mut g = Array1::zeros(p + 1);
    for (row, &y) in features.rows().into_iter().zip(labels) {
        let r = sigmoid(model.intercept + row.dot(&model.coefficients)) - y as f64;
        g[0] += r;
        for j in 0..p {
            g[j + 1] += r * row[j];
        }
    }
    for j in 0..p {
        g[j + 1] += l2 * model.coefficients[j];
    }
    g
}

/// True when the linear predictor puts every row strictly on its label's
/// side of zero, in which case no finite unpenalized maximizer exists.
fn separates(features: ArrayView2<'_, f64>, labels: &[u8], model: &LogisticModel) -> bool {
    features.rows().into_iter().zip(labels).all(|(row, &y)| {
        let eta = model.intercept + row.dot(&model.coefficients);
        if y == 1 { eta > 0.0 } else { eta < 0.0 }
    })
}

pub fn fit_logistic(features: ArrayView2<'_, f64>, labels: &[u8], l2_strength: f64) -> Result<LogisticModel, ModelError> {
    let n = features.nrows();
    let p = features.ncols();
    if labels.len() != n {
        return Err(ModelError::LengthMismatch { expected: n, found: labels.len() });
    }
    if n < 2 {
        return Err(ModelError::TooFewSamples { needed: 2, found: n });
    }
    if !(l2_strength >= 0.0 && l2_strength.is_finite()) {
        return Err(ModelError::InvalidParameter(format!("l2_strength = {l2_strength}")));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(ModelError::InvalidParameter("labels must be 0 or 1".into()));
    }
    check_finite(features.iter())?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        // The unpenalized intercept diverges whatever the penalty on β.
        return Err(ModelError::Separation);
    }

    let mut model = LogisticModel { coefficients: Array1::zeros(p), intercept: 0.0 };
    let mut obj = logistic_objective(features, labels, l2_strength, &model);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let g = logistic_gradient(features, labels, l2_strength, &model);
        if g.dot(&g).sqrt() < GRAD_TOL {
            converged = true;
            break;
        }
        let mut h = Array2::<f64>::zeros((p + 1, p + 1));
        for row in features.rows() {
            let mu = sigmoid(model.intercept + row.dot(&model.coefficients));
            let v = mu * (1.0 - mu);
            h[[0, 0]] += v;
            for j in 0..p {
                h[[j + 1, 0]] += v * row[j];
                for k in 0..=j {
                    h[[j + 1, k + 1]] += v * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            h[[j + 1, j + 1]] += l2_strength;
        }
        for j in 0..=p {
            for k in 0..j {
                h[[k, j]] = h[[j, k]];
            }
        }
        let step = solve_spd(&h, &g).x;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = LogisticModel {
                intercept: model.intercept - t * step[0],
                coefficients: &model.coefficients - &(step.slice(ndarray::s![1..]).to_owned() * t),
            };
            let cand_obj = logistic_objective(features, labels, l2_strength, &cand);
            if cand_obj <= obj {
                model = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent possible at machine precision.
            converged = true;
            break;
        }
    }
    let size = model.intercept.abs().max(model.coefficients.iter().fold(0.0, |m, c| m.max(c.abs())));
    if l2_strength == 0.0 && (size > 1e3 || !converged || separates(features, labels, &model)) {
        return Err(ModelError::Separation);
    }
    if !model.intercept.is_finite() || model.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(ModelError::Separation);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn symmetric_labels_give_half() {
        let x = Array2::zeros((4, 2));
        let m = fit_logistic(x.view(), &[0, 1, 0, 1], 1.0).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!(m.intercept.abs() < 1e-12);
        assert!((m.probability(&[3.0, -2.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_relation_positive_slope() {
        let z: Vec<f64> = (0..20).map(|i| i as f64 / 10.0 - 1.0).collect();
        let labels: Vec<u8> = z.iter().map(|&v| (v > 0.0) as u8).collect();
        let x = Array2::from_shape_vec((20, 1), z).unwrap();
        let m = fit_logistic(x.view(), &labels, 1.0).unwrap();
        assert!(m.coefficients[0] > 0.0);
    }

    #[test]
    fn separable_unpenalized_fails() {
        let x = array![[-2.0], [-1.0], [1.0], [2.0]];
        assert!(matches!(fit_logistic(x.view(), &[0, 0, 1, 1], 0.0), Err(ModelError::Separation)));
        assert!(fit_logistic(x.view(), &[0, 0, 1, 1], 1.0).is_ok());
    }

    #[test]
    fn probabilities_stay_open_interval() {
        let m = LogisticModel { coefficients: array![100.0], intercept: 0.0 };
        let p = m.probability(&[50.0]);
        assert!(p < 1.0 && p > 0.0);
    }
}
