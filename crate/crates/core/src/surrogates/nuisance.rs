use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::sampler::{fit_conditional_sampler, ConditionalSampler};
use super::SurrogateError;
use crate::data::{Cohort, Population, RandomSource};
use crate::models::{
    cross_validate_grid, fit_gbm, fit_linear, fit_logistic, fit_tree, AnyModel, ForestParams, GbmParams, LogisticModel,
    Regressor, TreeGrid, TreeModel,
};

/// Penalty of both logistic nuisances.
pub const LOGISTIC_L2: f64 = 1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFamily {
    Linear,
    Tree,
    #[default]
    Gbm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexOptions {
    pub grid: TreeGrid,
    pub folds: usize,
    pub gbm: GbmParams,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { grid: TreeGrid::standard(), folds: 5, gbm: GbmParams::default() }
    }
}

/// Cross-validates a weighted CART over `grid` and refits the winner on all rows.
pub fn fit_tree_cv(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
    grid: &TreeGrid,
    folds: usize,
    source: RandomSource,
) -> Result<TreeModel, SurrogateError> {
    let points = grid.points();
    let best = if points.len() == 1 {
        0
    } else {
        cross_validate_grid(x, y, weights, &points, folds, source, |xt, yt, wt, p| fit_tree(xt, yt, wt, p))?.0
    };
    Ok(fit_tree(x, y, weights, &points[best])?)
}

/// `ĥ(x, s)`: regression of `y` on `[x | s]`.
pub fn fit_surrogate_index(
    outcome: &Cohort,
    family: IndexFamily,
    options: &IndexOptions,
    source: RandomSource,
) -> Result<AnyModel, SurrogateError> {
    let y = outcome.outcome()?;
    if outcome.n < 2 {
        return Err(crate::models::ModelError::TooFewSamples { needed: 2, found: outcome.n }.into());
    }
    let xs = outcome.xs();
    Ok(match family {
        IndexFamily::Linear => fit_linear(xs.view(), y, None, 0.0)?.into(),
        IndexFamily::Tree => fit_tree_cv(xs.view(), y, None, &options.grid, options.folds, source)?.into(),
        IndexFamily::Gbm => fit_gbm(xs.view(), y, None, &options.gbm, source)?.0.into(),
    })
}

/// `ê(x) = P(T = 1 | X = x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Propensity {
    Logistic(LogisticModel),
    /// Randomized assignment: the empirical treated fraction.
    Constant { p: f64, n_features: usize },
}

impl Propensity {
    pub fn probability(&self, x: &[f64]) -> f64 {
        match self {
            Propensity::Logistic(m) => m.probability(x),
            Propensity::Constant { p, .. } => *p,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Propensity::Logistic(m) => m.coefficients.len(),
            Propensity::Constant { n_features, .. } => *n_features,
        }
    }
}

fn check_arms(t: &[u8]) -> Result<(), SurrogateError> {
    let treated = t.iter().filter(|&&v| v == 1).count();
    if treated < 2 {
        return Err(SurrogateError::SingleArmData(1));
    }
    if t.len() - treated < 2 {
        return Err(SurrogateError::SingleArmData(0));
    }
    Ok(())
}

/// Logistic `ê(x)`, or the treated fraction when the cohort is experimental
/// or has no covariates.
pub fn fit_propensity(treatment: &Cohort, l2: f64) -> Result<Propensity, SurrogateError> {
    let t = treatment.treatment()?;
    check_arms(t)?;
    if treatment.population == Population::Experimental || treatment.k() == 0 {
        let p = t.iter().map(|&v| v as f64).sum::<f64>() / t.len() as f64;
        return Ok(Propensity::Constant { p, n_features: treatment.k() });
    }
    Ok(Propensity::Logistic(fit_logistic(treatment.x.view(), t, l2)?))
}

/// Logistic `ρ̂(x, s) = P(T = 1 | X = x, S = s)`.
pub fn fit_surrogate_score(treatment: &Cohort, l2: f64) -> Result<LogisticModel, SurrogateError> {
    let t = treatment.treatment()?;
    check_arms(t)?;
    Ok(fit_logistic(treatment.xs().view(), t, l2)?)
}

/// Which nuisances [`fit_nuisances`] should fit.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceRequest {
    pub index: Option<(IndexFamily, IndexOptions)>,
    pub propensity: bool,
    pub score: bool,
    pub sampler: Option<ForestParams>,
    pub logistic_l2: f64,
}

impl Default for NuisanceRequest {
    fn default() -> Self {
        NuisanceRequest { index: None, propensity: false, score: false, sampler: None, logistic_l2: LOGISTIC_L2 }
    }
}

impl NuisanceRequest {
    /// Everything: `ĥ` (gbm), `ê`, `ρ̂` and the sampler.
    pub fn all() -> Self {
        NuisanceRequest {
            index: Some((IndexFamily::Gbm, IndexOptions::default())),
            propensity: true,
            score: true,
            sampler: Some(ForestParams::default()),
            logistic_l2: LOGISTIC_L2,
        }
    }
}

/// Fitted nuisances. Fields not requested stay `None`; the accessors turn
/// that into [`SurrogateError::UnfittedNuisance`].
#[derive(Clone, Debug, Default)]
pub struct NuisanceBundle {
    pub h_hat: Option<AnyModel>,
    pub e_hat: Option<Propensity>,
    pub rho_hat: Option<LogisticModel>,
    pub sampler: Option<ConditionalSampler>,
    /// Residual variance of `ĥ` on the outcome data.
    pub sigma2: Option<f64>,
}

impl NuisanceBundle {
    pub fn h(&self) -> Result<&AnyModel, SurrogateError> {
        self.h_hat.as_ref().ok_or(SurrogateError::UnfittedNuisance("h_hat"))
    }

    pub fn e(&self) -> Result<&Propensity, SurrogateError> {
        self.e_hat.as_ref().ok_or(SurrogateError::UnfittedNuisance("e_hat"))
    }

    pub fn rho(&self) -> Result<&LogisticModel, SurrogateError> {
        self.rho_hat.as_ref().ok_or(SurrogateError::UnfittedNuisance("rho_hat"))
    }

    pub fn sampler(&self) -> Result<&ConditionalSampler, SurrogateError> {
        self.sampler.as_ref().ok_or(SurrogateError::UnfittedNuisance("sampler"))
    }

    /// `ĥ(x_i, s_i)` for every unit of `cohort`.
    pub fn h_values(&self, cohort: &Cohort) -> Result<Array1<f64>, SurrogateError> {
        Ok(self.h()?.predict(cohort.xs().view())?)
    }

    /// Fits `ĥ` on `outcome` and stores it with its residual variance.
    pub fn fit_index(
        &mut self,
        outcome: &Cohort,
        family: IndexFamily,
        options: &IndexOptions,
        source: RandomSource,
    ) -> Result<(), SurrogateError> {
        let h = fit_surrogate_index(outcome, family, options, source)?;
        let pred = h.predict(outcome.xs().view())?;
        let y = outcome.outcome()?;
        let sigma2 = y.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / outcome.n as f64;
        self.h_hat = Some(h);
        self.sigma2 = Some(sigma2);
        Ok(())
    }
}

pub(super) const STREAM_INDEX: u64 = 0x1d;
pub(super) const STREAM_SAMPLER: u64 = 0x5a;

/// Fits the requested nuisances: `ĥ` on `outcome`, `ê`, `ρ̂` and the sampler
/// on `treatment`.
pub fn fit_nuisances(
    treatment: &Cohort,
    outcome: &Cohort,
    request: &NuisanceRequest,
    source: RandomSource,
) -> Result<NuisanceBundle, SurrogateError> {
    let mut bundle = NuisanceBundle::default();
    if let Some((family, options)) = &request.index {
        bundle.fit_index(outcome, *family, options, source.with_stream(STREAM_INDEX))?;
    }
    if request.propensity {
        bundle.e_hat = Some(fit_propensity(treatment, request.logistic_l2)?);
    }
    if request.score {
        bundle.rho_hat = Some(fit_surrogate_score(treatment, request.logistic_l2)?);
    }
    if let Some(params) = &request.sampler {
        bundle.sampler = Some(fit_conditional_sampler(treatment, params, source.with_stream(STREAM_SAMPLER))?);
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_rng;
    use ndarray::Array;
    use rand::Rng;

    fn cohort(n: usize, seed: u64) -> Cohort {
        let mut rng = make_rng(seed, 0).rng();
        let x = Array::from_shape_fn((n, 1), |_| rng.random::<f64>());
        let s = Array::from_shape_fn((n, 1), |_| rng.random::<f64>());
        let y = Array1::from_iter((0..n).map(|i| 2.0 * x[[i, 0]] + 3.0 * s[[i, 0]]));
        let t = (0..n).map(|i| (i % 2) as u8).collect();
        Cohort::new(x, Some(t), s, Some(y), Population::Observational).unwrap()
    }

    #[test]
    fn linear_index_recovers_coefficients() {
        let c = cohort(50, 1);
        let h = fit_surrogate_index(&c, IndexFamily::Linear, &IndexOptions::default(), make_rng(0, 0)).unwrap();
        let AnyModel::Linear(m) = h else { panic!("linear family") };
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
        assert!((m.coefficients[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn constant_outcome_gives_constant_index() {
        let mut c = cohort(200, 2);
        c.y = Some(Array1::from_elem(200, 4.0));
        for family in [IndexFamily::Linear, IndexFamily::Tree, IndexFamily::Gbm] {
            let h = fit_surrogate_index(&c, family, &IndexOptions::default(), make_rng(0, 0)).unwrap();
            let pred = h.predict(c.xs().view()).unwrap();
            assert!(pred.iter().all(|p| (p - 4.0).abs() < 1e-9), "{family:?}");
        }
    }

    #[test]
    fn missing_outcome_is_reported() {
        let c = cohort(10, 3).without_outcome();
        assert!(matches!(
            fit_surrogate_index(&c, IndexFamily::Linear, &IndexOptions::default(), make_rng(0, 0)),
            Err(SurrogateError::MissingOutcome)
        ));
    }

    #[test]
    fn experimental_cohort_uses_constant_propensity() {
        let c = cohort(10, 4).with_population(Population::Experimental);
        let e = fit_propensity(&c, 1.0).unwrap();
        assert_eq!(e, Propensity::Constant { p: 0.5, n_features: 1 });
        let one_arm = Cohort { t: Some(vec![1; 10]), ..c };
        assert!(matches!(fit_propensity(&one_arm, 1.0), Err(SurrogateError::SingleArmData(0))));
    }

    #[test]
    fn bundle_reports_unfitted() {
        let b = NuisanceBundle::default();
        assert!(matches!(b.rho(), Err(SurrogateError::UnfittedNuisance("rho_hat"))));
    }
}
