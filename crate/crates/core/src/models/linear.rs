//! Weighted least squares and weighted Lasso.
//!
//! The Lasso objective is
//!
//! ```text
//! (1/2n) Σ_i w_i (y_i - b - βᵀz_i)² + λ ‖β‖₁
//! ```
//!
//! with an unpenalized intercept `b`. Coordinate descent runs on standardized
//! columns `u_j = (z_j - μ_j) / σ_j`, with the per-coordinate threshold
//! rescaled to `λ / σ_j`, so the solution is the minimizer of the objective
//! above in the original units.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linalg::solve_spd;
use super::{check_finite, check_weights, ModelError, Regressor};

const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(coefficients: Array1<f64>, intercept: f64) -> Self {
        LinearModel { coefficients, intercept }
    }
}

impl Regressor for LinearModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(c, z)| c * z).sum::<f64>()
    }
}

/// Weighted linear regression with intercept. `l1_strength == 0` gives the
/// exact weighted least-squares solution, `l1_strength > 0` the Lasso.
pub fn fit_linear(
    features: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    l1_strength: f64,
) -> Result<LinearModel, ModelError> {
    fit(features, targets, weights, l1_strength, true)
}

/// Same as [`fit_linear`] without an intercept (the returned intercept is 0).
pub fn fit_linear_through_origin(
    features: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    l1_strength: f64,
) -> Result<LinearModel, ModelError> {
    fit(features, targets, weights, l1_strength, false)
}

fn fit(
    z: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    l1: f64,
    intercept: bool,
) -> Result<LinearModel, ModelError> {
    let n = z.nrows();
    let p = z.ncols();
    if n == 0 {
        return Err(ModelError::TooFewSamples { needed: 1, found: 0 });
    }
    if y.len() != n {
        return Err(ModelError::LengthMismatch { expected: n, found: y.len() });
    }
    if !(l1 >= 0.0 && l1.is_finite()) {
        return Err(ModelError::InvalidParameter(format!("l1_strength = {l1}")));
    }
    check_finite(z.iter().chain(y.iter()))?;
    let w: Array1<f64> = match weights {
        Some(w) => {
            check_weights(w, n)?;
            w.to_owned()
        }
        None => Array1::ones(n),
    };
    let wsum = w.sum();

    let (mu_z, mu_y) = if intercept {
        let mu_z = Array1::from_iter((0..p).map(|j| z.column(j).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum));
        let mu_y = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum;
        (mu_z, mu_y)
    } else {
        (Array1::zeros(p), 0.0)
    };
    let mut zc = z.to_owned();
    for j in 0..p {
        zc.column_mut(j).mapv_inplace(|v| v - mu_z[j]);
    }
    let yc = y.mapv(|v| v - mu_y);

    let beta = if l1 == 0.0 { wls(&zc, &yc, &w) } else { lasso(&zc, &yc, &w, l1) };
    let b = if intercept { mu_y - beta.dot(&mu_z) } else { 0.0 };
    Ok(LinearModel { coefficients: beta, intercept: b })
}

fn wls(zc: &Array2<f64>, yc: &Array1<f64>, w: &Array1<f64>) -> Array1<f64> {
    let p = zc.ncols();
    let mut a = Array2::zeros((p, p));
    let mut b = Array1::zeros(p);
    for (i, row) in zc.rows().into_iter().enumerate() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for j in 0..p {
            let v = wi * row[j];
            b[j] += v * yc[i];
            for k in 0..=j {
                a[[j, k]] += v * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[[k, j]] = a[[j, k]];
        }
    }
    let sol = solve_spd(&a, &b);
    if sol.jitter > 0.0 {
        warn!("normal equations singular; solved with ridge jitter {:e}", sol.jitter);
    }
    sol.x
}

fn lasso(zc: &Array2<f64>, yc: &Array1<f64>, w: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let n = zc.nrows() as f64;
    let p = zc.ncols();
    let wsum = w.sum();
    // Column scales: weighted standard deviation (or RMS when uncentered).
    let sd: Vec<f64> = (0..p)
        .map(|j| {
            let ss: f64 = zc.column(j).iter().zip(w).map(|(v, wi)| wi * v * v).sum();
            (ss / wsum).sqrt()
        })
        .collect();
    let mut u = zc.clone();
    for j in 0..p {
        if sd[j] > 0.0 {
            u.column_mut(j).mapv_inplace(|v| v / sd[j]);
        }
    }
    let a: Vec<f64> = (0..p).map(|j| u.column(j).iter().zip(w).map(|(v, wi)| wi * v * v).sum::<f64>() / n).collect();
    let mut gamma = vec![0.0; p];
    let mut r = yc.clone();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if sd[j] == 0.0 || a[j] == 0.0 {
                continue;
            }
            let col = u.column(j);
            let rho = col.iter().zip(r.iter()).zip(w).map(|((uij, ri), wi)| wi * uij * (ri + uij * gamma[j])).sum::<f64>() / n;
            let new = soft_threshold(rho, lambda / sd[j]) / a[j];
            let delta = new - gamma[j];
            if delta != 0.0 {
                r.zip_mut_with(&col, |ri, uij| *ri -= uij * delta);
                gamma[j] = new;
                max_change = max_change.max((delta / sd[j]).abs());
            }
        }
        if max_change < LASSO_TOL {
            break;
        }
    }
    Array1::from_iter((0..p).map(|j| if sd[j] > 0.0 { gamma[j] / sd[j] } else { 0.0 }))
}

pub(crate) fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}
