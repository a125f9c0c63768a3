use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SurrogateError;
use crate::data::{Cohort, RandomSource, StreamRng};
use crate::models::{fit_forest_oob, EnsembleModel, ForestParams, Regressor};

/// Model of `p(S | x, t)`: per-arm forests for `E[S_j | x, T = t]` plus the
/// out-of-bag residual rows of each arm, resampled jointly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSampler {
    /// `mean_models[t][j]` predicts surrogate `j` in arm `t`.
    pub mean_models: [Vec<EnsembleModel>; 2],
    /// `residual_pools[t]` is `n_t × d`.
    pub residual_pools: [Array2<f64>; 2],
    pub k: usize,
    pub d: usize,
}

impl ConditionalSampler {
    /// `m̂_t(x)`.
    pub fn mean(&self, x: &[f64], arm: u8) -> Array1<f64> {
        self.mean_models[arm as usize].iter().map(|m| m.predict_row(x)).collect()
    }

    /// `m̂_t` at every row of `x`, as an `n × d` matrix.
    pub fn means(&self, x: ArrayView2<'_, f64>, arm: u8) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.d));
        for (j, m) in self.mean_models[arm as usize].iter().enumerate() {
            out.column_mut(j).assign(&m.predict_rows(x));
        }
        out
    }

    /// `draws` counterfactual surrogate rows for arm `arm` at `x`.
    pub fn draw(&self, x: &[f64], arm: u8, draws: usize, rng: &mut StreamRng) -> Array2<f64> {
        let mean = self.mean(x, arm);
        self.draw_around(&mean, arm, draws, rng)
    }

    /// Like [`draw`](Self::draw) with a precomputed mean.
    pub fn draw_around(&self, mean: &Array1<f64>, arm: u8, draws: usize, rng: &mut StreamRng) -> Array2<f64> {
        let pool = &self.residual_pools[arm as usize];
        let mut out = Array2::zeros((draws, self.d));
        for mut row in out.rows_mut() {
            let r = pool.row(rng.random_range(0..pool.nrows()));
            for j in 0..self.d {
                row[j] = mean[j] + r[j];
            }
        }
        out
    }
}

/// Fits one forest per arm and surrogate dimension on the treatment data.
/// Residual pools hold out-of-bag residuals, which estimate the noise
/// spread without the shrinkage of in-sample forest residuals.
pub fn fit_conditional_sampler(
    treatment: &Cohort,
    params: &ForestParams,
    source: RandomSource,
) -> Result<ConditionalSampler, SurrogateError> {
    let d = treatment.d();
    let mut models: [Vec<EnsembleModel>; 2] = [Vec::new(), Vec::new()];
    let mut pools = [Array2::zeros((0, d)), Array2::zeros((0, d))];
    for arm in 0..2u8 {
        let idx = treatment.arm_indices(arm)?;
        if idx.len() < 2 {
            return Err(SurrogateError::SingleArmData(arm));
        }
        let x: ArrayView2<'_, f64> = treatment.x.view();
        let xa = x.select(Axis(0), &idx);
        let sa = treatment.s.select(Axis(0), &idx);
        let mut pool = Array2::zeros((idx.len(), d));
        for j in 0..d {
            let fit = fit_forest_oob(xa.view(), sa.column(j), params, source.substream(arm as u64 * 1_000_003 + j as u64))?;
            for i in 0..idx.len() {
                pool[[i, j]] = sa[[i, j]] - fit.oob_predictions[i];
            }
            models[arm as usize].push(fit.model);
        }
        pools[arm as usize] = pool;
    }
    Ok(ConditionalSampler { mean_models: models, residual_pools: pools, k: treatment.k(), d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_rng, Population};
    use ndarray::Array;

    fn noiseless(n: usize) -> Cohort {
        let x = Array::from_shape_fn((n, 1), |(i, _)| (i % 4) as f64);
        let t: Vec<u8> = (0..n).map(|i| ((i / 4) % 2) as u8).collect();
        let s = Array::from_shape_fn((n, 1), |(i, _)| 2.0 * x[[i, 0]] + t[i] as f64);
        Cohort::new(x, Some(t), s, None, Population::Observational).unwrap()
    }

    #[test]
    fn noiseless_surrogates_are_reproduced() {
        let c = noiseless(400);
        let sampler = fit_conditional_sampler(&c, &ForestParams::default(), make_rng(1, 0)).unwrap();
        let mut rng = make_rng(2, 0).rng();
        for arm in 0..2u8 {
            let draws = sampler.draw(&[3.0], arm, 50, &mut rng);
            assert!(draws.iter().all(|v| (v - (6.0 + arm as f64)).abs() < 1e-12));
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let mut c = noiseless(80);
        c.s.mapv_inplace(|v| v + 0.1);
        for (i, v) in c.s.iter_mut().enumerate() {
            *v += ((i * 37) % 11) as f64 / 10.0;
        }
        let a = fit_conditional_sampler(&c, &ForestParams::default(), make_rng(1, 0)).unwrap();
        let b = fit_conditional_sampler(&c, &ForestParams::default(), make_rng(1, 0)).unwrap();
        assert_eq!(a, b);
        let da = a.draw(&[1.0], 1, 20, &mut make_rng(5, 0).rng());
        let db = b.draw(&[1.0], 1, 20, &mut make_rng(5, 0).rng());
        assert_eq!(da, db);
    }

    #[test]
    fn one_arm_is_rejected() {
        let mut c = noiseless(8);
        c.t = Some(vec![0, 0, 0, 0, 0, 0, 0, 1]);
        assert!(matches!(
            fit_conditional_sampler(&c, &ForestParams::default(), make_rng(1, 0)),
            Err(SurrogateError::SingleArmData(1))
        ));
    }
}
