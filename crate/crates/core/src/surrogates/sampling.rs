//! Surrogate sampling.
//!
//! For every observational unit `j` the sampler draws `L` counterfactual
//! surrogate rows per arm. The objective is
//!
//! ```text
//! (1/2n) Σ_j w_j ( Σ_t (-1)^t (1/L) Σ_l [ĥ(x_j, ŝ_t^{jl}) - f(ŝ_t^{jl})] )² + λ‖β‖₁
//! ```
//!
//! For a linear `f(s) = βᵀs + b` the intercept cancels and the inner term is
//! `c_j - βᵀd_j`, with `c_j` the mean contrast of `ĥ` and `d_j` the mean
//! contrast of the draws, so the minimizer is a regression of `c` on `d`
//! through the origin.

use ndarray::{Array1, Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nuisance::NuisanceBundle;
use super::{calibrate_surrogate, CalibrationMode, SurrogateError, SurrogateModel};
use crate::data::{Cohort, DensityRatio, RandomSource};
use crate::models::{fit_linear_through_origin, soft_threshold, FlatEnsemble, LinearModel, Regressor};

/// Largest `|d_j|` entry below which the contrasts count as degenerate.
const DEGENERATE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Coordinate-descent Lasso (or least squares when `λ = 0`) on `(d_j, c_j)`.
    #[default]
    ClosedForm,
    /// Proximal gradient with Nesterov momentum on the raw per-draw objective.
    Fista { max_iter: usize, tol: f64 },
}

impl Optimizer {
    pub fn fista() -> Self {
        Optimizer::Fista { max_iter: 200_000, tol: 1e-12 }
    }
}

/// Draws and per-unit contrasts for the observational units.
#[derive(Clone, Debug)]
pub struct SampledContrasts {
    /// `c_j`.
    pub c: Array1<f64>,
    /// `d_j` as an `n × d` matrix.
    pub d: Array2<f64>,
    /// Per-unit weights (the density ratio, or ones).
    pub weights: Array1<f64>,
    /// Draws `samples[t]`, shaped `n × L × d`.
    pub samples: [Array3<f64>; 2],
}

impl SampledContrasts {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn draws(&self) -> usize {
        self.samples[0].len_of(Axis(1))
    }
}

/// Samples `draws` counterfactual rows per arm for every unit of `units` and
/// forms the contrasts. Unit `j` uses the stream `source.substream(j)`.
pub fn sample_contrasts(
    units: &Cohort,
    bundle: &NuisanceBundle,
    draws: usize,
    ratio: &DensityRatio,
    source: RandomSource,
) -> Result<SampledContrasts, SurrogateError> {
    if draws == 0 {
        return Err(SurrogateError::InvalidOption("at least one draw per arm is required".into()));
    }
    let h = bundle.h()?;
    let sampler = bundle.sampler()?;
    let (n, k, d) = (units.n, units.k(), units.d());
    if sampler.d != d || sampler.k != k {
        return Err(SurrogateError::WidthMismatch { expected: sampler.k + sampler.d, found: k + d });
    }
    let weights = Array1::from(ratio.evaluate(units.x.view())?);
    // ĥ is evaluated 2·L·n times; compile tree ensembles once.
    let flat = FlatEnsemble::compile(h);
    let means = [sampler.means(units.x.view(), 0), sampler.means(units.x.view(), 1)];

    let per_unit: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = units.x.row(j).to_vec();
            let mut rng = source.substream(j as u64).rng();
            let s0 = sampler.draw_around(&means[0].row(j).to_owned(), 0, draws, &mut rng);
            let s1 = sampler.draw_around(&means[1].row(j).to_owned(), 1, draws, &mut rng);
            let c = match &flat {
                Some(fe) => {
                    let mut rows = Vec::with_capacity(2 * draws * (k + d));
                    for s in [&s1, &s0] {
                        for r in s.rows() {
                            rows.extend_from_slice(&x);
                            rows.extend(r.iter());
                        }
                    }
                    let v = fe.predict_rows(&rows);
                    let (v1, v0) = v.split_at(draws);
                    v1.iter().sum::<f64>() / draws as f64 - v0.iter().sum::<f64>() / draws as f64
                }
                None => {
                    let mut row = x.clone();
                    row.resize(k + d, 0.0);
                    let mut mean_h = |s: &Array2<f64>| {
                        s.rows()
                            .into_iter()
                            .map(|r| {
                                row[k..].iter_mut().zip(r.iter()).for_each(|(a, b)| *a = *b);
                                h.predict_row(&row)
                            })
                            .sum::<f64>()
                            / draws as f64
                    };
                    mean_h(&s1) - mean_h(&s0)
                }
            };
            (c, s0.into_raw_vec_and_offset().0, s1.into_raw_vec_and_offset().0)
        })
        .collect();

    let mut c = Array1::zeros(n);
    let mut raw0 = Vec::with_capacity(n * draws * d);
    let mut raw1 = Vec::with_capacity(n * draws * d);
    for (j, (cj, s0, s1)) in per_unit.into_iter().enumerate() {
        c[j] = cj;
        raw0.extend(s0);
        raw1.extend(s1);
    }
    let s0 = Array3::from_shape_vec((n, draws, d), raw0).expect("draw layout");
    let s1 = Array3::from_shape_vec((n, draws, d), raw1).expect("draw layout");
    let dmat = s1.mean_axis(Axis(1)).expect("draws > 0") - s0.mean_axis(Axis(1)).expect("draws > 0");
    Ok(SampledContrasts { c, d: dmat, weights, samples: [s0, s1] })
}

/// Weighted mean over units of the squared contrast residual
/// `(c_j - [mean_l f(ŝ_1) - mean_l f(ŝ_0)])²`, i.e. twice the unpenalized
/// training objective. Translation-invariant in `f`.
pub fn estimate_sampling_risk(f: &SurrogateModel, contrasts: &SampledContrasts) -> Result<f64, SurrogateError> {
    let n = contrasts.n();
    let mut total = 0.0;
    for j in 0..n {
        let f1 = f.evaluate(contrasts.samples[1].index_axis(Axis(0), j))?.mean().unwrap_or(0.0);
        let f0 = f.evaluate(contrasts.samples[0].index_axis(Axis(0), j))?.mean().unwrap_or(0.0);
        total += contrasts.weights[j] * (contrasts.c[j] - (f1 - f0)).powi(2);
    }
    Ok(total / n as f64)
}

/// Result of [`fit_surrogate_sampling`].
#[derive(Clone, Debug)]
pub struct SamplingFit {
    pub model: SurrogateModel,
    pub contrasts: SampledContrasts,
    /// [`estimate_sampling_risk`] of the fitted model.
    pub risk: f64,
}

/// Fits a linear surrogate by surrogate sampling and level-calibrates it
/// against `ĥ` on `units`.
pub fn fit_surrogate_sampling(
    units: &Cohort,
    bundle: &NuisanceBundle,
    draws: usize,
    lambda: f64,
    optimizer: Optimizer,
    ratio: &DensityRatio,
    source: RandomSource,
) -> Result<SamplingFit, SurrogateError> {
    let contrasts = sample_contrasts(units, bundle, draws, ratio, source)?;
    let raw = fit_surrogate_sampling_from(&contrasts, lambda, optimizer)?;
    let h_values = bundle.h_values(units)?;
    let model = calibrate_surrogate(&raw, units.s.view(), h_values.as_slice().expect("contiguous"), CalibrationMode::Level)?;
    let risk = estimate_sampling_risk(&model, &contrasts)?;
    Ok(SamplingFit { model, contrasts, risk })
}

/// The linear minimizer for precomputed contrasts (uncalibrated, intercept 0).
pub fn fit_surrogate_sampling_from(
    contrasts: &SampledContrasts,
    lambda: f64,
    optimizer: Optimizer,
) -> Result<SurrogateModel, SurrogateError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SurrogateError::InvalidOption(format!("lambda = {lambda}")));
    }
    if contrasts.d.iter().all(|v| v.abs() < DEGENERATE_TOL) {
        return Err(SurrogateError::DegenerateContrasts);
    }
    if contrasts.weights.mean().unwrap_or(0.0) < 1e-8 {
        return Err(SurrogateError::AllZeroWeights);
    }
    let beta = match optimizer {
        Optimizer::ClosedForm => {
            fit_linear_through_origin(contrasts.d.view(), contrasts.c.view(), Some(contrasts.weights.view()), lambda)?
                .coefficients
        }
        Optimizer::Fista { max_iter, tol } => fista(contrasts, lambda, max_iter, tol),
    };
    Ok(SurrogateModel::linear(LinearModel::new(beta, 0.0)))
}

/// Per-unit mean of `βᵀŝ` over the draws of one arm.
fn mean_projection(samples: &Array3<f64>, j: usize, beta: &Array1<f64>) -> f64 {
    let unit = samples.index_axis(Axis(0), j);
    unit.rows().into_iter().map(|r| r.dot(beta)).sum::<f64>() / unit.nrows() as f64
}

/// Gradient of the smooth part, evaluated from the raw draws.
fn raw_gradient(contrasts: &SampledContrasts, beta: &Array1<f64>) -> Array1<f64> {
    let n = contrasts.n();
    let p = beta.len();
    let mut g = Array1::zeros(p);
    for j in 0..n {
        let [s0, s1] = &contrasts.samples;
        let r = contrasts.c[j] - (mean_projection(s1, j, beta) - mean_projection(s0, j, beta));
        let scale = contrasts.weights[j] * r / contrasts.draws() as f64;
        for (t, sign) in [(s1, -1.0), (s0, 1.0)] {
            for row in t.index_axis(Axis(0), j).rows() {
                g.scaled_add(sign * scale, &row);
            }
        }
    }
    g / n as f64
}

/// Largest eigenvalue of `(1/n) Σ w_j d_j d_jᵀ` by power iteration.
fn lipschitz(contrasts: &SampledContrasts) -> f64 {
    let n = contrasts.n() as f64;
    let p = contrasts.d.ncols();
    let mut a = Array2::<f64>::zeros((p, p));
    for (row, w) in contrasts.d.rows().into_iter().zip(contrasts.weights.iter()) {
        for i in 0..p {
            for k in 0..p {
                a[[i, k]] += w * row[i] * row[k] / n;
            }
        }
    }
    let mut v = Array1::from_elem(p, 1.0 / (p as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..500 {
        let av = a.dot(&v);
        let norm = av.dot(&av).sqrt();
        if norm == 0.0 {
            break;
        }
        lam = norm;
        v = av / norm;
    }
    // Power iteration approaches from below; the margin covers the gap. The
    // mean eigenvalue guards against a start vector orthogonal to the top one.
    lam.max(a.diag().sum() / p as f64) * 1.01
}

fn fista(contrasts: &SampledContrasts, lambda: f64, max_iter: usize, tol: f64) -> Array1<f64> {
    let p = contrasts.d.ncols();
    let step = 1.0 / lipschitz(contrasts);
    let mut beta = Array1::<f64>::zeros(p);
    let mut momentum = beta.clone();
    let mut theta: f64 = 1.0;
    for _ in 0..max_iter {
        let g = raw_gradient(contrasts, &momentum);
        let next: Array1<f64> = (&momentum - &(g * step)).mapv(|v| soft_threshold(v, lambda * step));
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let delta = &next - &beta;
        let change = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Restart momentum when it points uphill.
        if (&momentum - &next).dot(&delta) > 0.0 {
            theta = 1.0;
            momentum = next.clone();
        } else {
            momentum = &next + &(delta * ((theta - 1.0) / theta_next));
            theta = theta_next;
        }
        beta = next;
        if change < tol {
            break;
        }
    }
    beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_rng;
    use ndarray::Array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_contrasts(n: usize, draws: usize, d: usize, seed: u64) -> SampledContrasts {
        let mut rng = make_rng(seed, 0).rng();
        let mut g = || rng.sample::<f64, _>(StandardNormal);
        let s0 = Array::from_shape_fn((n, draws, d), |_| g());
        let s1 = Array::from_shape_fn((n, draws, d), |(_, _, j)| g() + j as f64 * 0.5 + 1.0);
        let dmat = s1.mean_axis(Axis(1)).unwrap() - s0.mean_axis(Axis(1)).unwrap();
        let c = Array1::from_shape_fn(n, |j| dmat.row(j).sum() * 0.7 + g() * 0.1);
        SampledContrasts { c, d: dmat, weights: Array1::ones(n), samples: [s0, s1] }
    }

    #[test]
    fn gradient_route_matches_closed_form() {
        let sc = random_contrasts(60, 5, 3, 11);
        for lambda in [0.0, 0.05] {
            let a = fit_surrogate_sampling_from(&sc, lambda, Optimizer::ClosedForm).unwrap();
            let b = fit_surrogate_sampling_from(&sc, lambda, Optimizer::fista()).unwrap();
            let (ba, _) = a.linear_parts().unwrap();
            let (bb, _) = b.linear_parts().unwrap();
            let err = (&ba - &bb).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-4, "lambda {lambda}: {ba} vs {bb}");
        }
    }

    #[test]
    fn risk_is_translation_invariant_and_minimal() {
        let sc = random_contrasts(40, 4, 2, 12);
        let f = fit_surrogate_sampling_from(&sc, 0.0, Optimizer::ClosedForm).unwrap();
        let r = estimate_sampling_risk(&f, &sc).unwrap();
        let shifted = f.clone().with_calibration(super::super::Calibration { scale: 1.0, offset: 3.5 });
        assert!((estimate_sampling_risk(&shifted, &sc).unwrap() - r).abs() < 1e-12);
        let (beta, _) = f.linear_parts().unwrap();
        let mut worse = beta.clone();
        worse[0] += 0.01;
        let g = SurrogateModel::linear(LinearModel::new(worse, 0.0));
        assert!(estimate_sampling_risk(&g, &sc).unwrap() >= r);
    }

    #[test]
    fn huge_lambda_gives_null_surrogate() {
        let sc = random_contrasts(30, 3, 2, 13);
        let f = fit_surrogate_sampling_from(&sc, 1e6, Optimizer::ClosedForm).unwrap();
        assert!(f.linear_parts().unwrap().0.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_contrasts_are_degenerate() {
        let mut sc = random_contrasts(10, 2, 2, 14);
        sc.samples[1] = sc.samples[0].clone();
        sc.d.fill(0.0);
        assert!(matches!(fit_surrogate_sampling_from(&sc, 0.0, Optimizer::ClosedForm), Err(SurrogateError::DegenerateContrasts)));
    }
}
