//! Learner identifiers and a uniform entry point for the experiment runner.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::baselines::{fit_outcome_regression, fit_reg_sel_reg, BaselineFamily, BaselineOptions};
use super::bound::{fit_bound_regression, BoundFamily, BoundOptions};
use super::nuisance::{fit_propensity, fit_surrogate_score, IndexFamily, IndexOptions, NuisanceBundle, STREAM_INDEX, STREAM_SAMPLER};
use super::sampler::fit_conditional_sampler;
use super::sampling::{fit_surrogate_sampling, Optimizer};
use super::{SurrogateError, SurrogateModel, DEFAULT_CLIP, DEFAULT_DRAWS, DEFAULT_LAMBDA};
use crate::data::{Cohort, DensityRatio, RandomSource};
use crate::models::{AnyModel, ForestParams, GbmParams, Regressor, TreeGrid};
use crate::oracle::{WeightKind, WeightScheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    OutcomeRegLin,
    OutcomeRegTree,
    RegSelRegLin,
    RegSelRegTree,
    SurrogateIndexLin,
    SurrogateIndexTree,
    SurrogateIndexGbm,
    BoundRegLin,
    BoundRegTree,
    BoundRegBintree,
    SurrogateSamplingLin,
}

impl MethodId {
    pub const ALL: [MethodId; 11] = [
        MethodId::OutcomeRegLin,
        MethodId::OutcomeRegTree,
        MethodId::RegSelRegLin,
        MethodId::RegSelRegTree,
        MethodId::SurrogateIndexLin,
        MethodId::SurrogateIndexTree,
        MethodId::SurrogateIndexGbm,
        MethodId::BoundRegLin,
        MethodId::BoundRegTree,
        MethodId::BoundRegBintree,
        MethodId::SurrogateSamplingLin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::OutcomeRegLin => "outcome_reg_lin",
            MethodId::OutcomeRegTree => "outcome_reg_tree",
            MethodId::RegSelRegLin => "reg_sel_reg_lin",
            MethodId::RegSelRegTree => "reg_sel_reg_tree",
            MethodId::SurrogateIndexLin => "surrogate_index_lin",
            MethodId::SurrogateIndexTree => "surrogate_index_tree",
            MethodId::SurrogateIndexGbm => "surrogate_index_gbm",
            MethodId::BoundRegLin => "bound_reg_lin",
            MethodId::BoundRegTree => "bound_reg_tree",
            MethodId::BoundRegBintree => "bound_reg_bintree",
            MethodId::SurrogateSamplingLin => "surrogate_sampling_lin",
        }
    }

    /// Whether the method yields a plug-in `f(s)` rather than `ĥ(x, s)`.
    pub fn is_plugin(self) -> bool {
        !matches!(self, MethodId::SurrogateIndexLin | MethodId::SurrogateIndexTree | MethodId::SurrogateIndexGbm)
    }

    /// Stable per-method stream id for method-local randomness.
    fn stream(self) -> u64 {
        0x100 + self as u64
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = SurrogateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| SurrogateError::UnknownMethod(s.to_string()))
    }
}

/// Per-method options as they appear in the experiment config. Unset fields
/// take the method's default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodOptions {
    pub lambda: Option<f64>,
    pub clip: Option<(f64, f64)>,
    #[serde(alias = "L")]
    pub draws: Option<usize>,
    pub scheme: Option<WeightKind>,
    pub grid: Option<TreeGrid>,
    pub folds: Option<usize>,
    /// Family of `ĥ` used by bound regression and surrogate sampling.
    pub index_family: Option<IndexFamily>,
    pub forest: Option<ForestParams>,
    pub gbm: Option<GbmParams>,
    pub bins: Option<usize>,
    pub stabilize: Option<bool>,
    pub optimizer: Option<Optimizer>,
    pub logistic_l2: Option<f64>,
}

impl MethodOptions {
    /// Effective Lasso strength of `method`.
    pub fn lambda_for(&self, method: MethodId) -> f64 {
        self.lambda.unwrap_or(match method {
            MethodId::BoundRegLin | MethodId::SurrogateSamplingLin => DEFAULT_LAMBDA,
            _ => 0.0,
        })
    }

    fn index_options(&self) -> IndexOptions {
        let d = IndexOptions::default();
        IndexOptions {
            grid: self.grid.clone().unwrap_or(d.grid),
            folds: self.folds.unwrap_or(d.folds),
            gbm: self.gbm.clone().unwrap_or(d.gbm),
        }
    }

    fn baseline_options(&self, method: MethodId) -> BaselineOptions {
        let d = BaselineOptions::default();
        BaselineOptions {
            lambda: self.lambda_for(method),
            grid: self.grid.clone().unwrap_or(d.grid),
            folds: self.folds.unwrap_or(d.folds),
        }
    }

    fn bound_options(&self, method: MethodId) -> BoundOptions {
        let d = BoundOptions::default();
        BoundOptions {
            lambda: self.lambda_for(method),
            stabilize: self.stabilize.unwrap_or(d.stabilize),
            grid: self.grid.clone().unwrap_or(d.grid),
            folds: self.folds.unwrap_or(d.folds),
            bins: self.bins.unwrap_or(d.bins),
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        if let Some((lo, hi)) = self.clip {
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return Err(SurrogateError::InvalidOption(format!("clip bounds ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(SurrogateError::InvalidOption(format!("lambda = {l}")));
            }
        }
        if self.draws == Some(0) {
            return Err(SurrogateError::InvalidOption("L must be positive".into()));
        }
        if matches!(self.folds, Some(f) if f < 2) {
            return Err(SurrogateError::InvalidOption("folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// What a learner produces: a plug-in surrogate of `s`, or the surrogate
/// index `ĥ(x, s)` for the index baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "endpoint", rename_all = "snake_case")]
pub enum Endpoint {
    Plugin(SurrogateModel),
    Index(AnyModel),
}

impl Endpoint {
    /// Per-unit endpoint values on `cohort`.
    pub fn evaluate(&self, cohort: &Cohort) -> Result<Array1<f64>, SurrogateError> {
        match self {
            Endpoint::Plugin(f) => f.evaluate(cohort.s.view()),
            Endpoint::Index(h) => Ok(h.predict(cohort.xs().view())?),
        }
    }

    pub fn plugin(&self) -> Option<&SurrogateModel> {
        match self {
            Endpoint::Plugin(f) => Some(f),
            Endpoint::Index(_) => None,
        }
    }
}

/// Nuisance fits shared between the methods of one experiment cell, keyed
/// by their options so that e.g. `surrogate_index_gbm` and the learners that
/// use a gbm `ĥ` fit it once.
#[derive(Default)]
pub struct NuisanceCache {
    index: HashMap<String, (AnyModel, Option<f64>)>,
    propensity: HashMap<String, super::Propensity>,
    score: HashMap<String, crate::models::LogisticModel>,
    sampler: HashMap<String, super::ConditionalSampler>,
}

fn key<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("options serialize")
}

impl NuisanceCache {
    fn index(
        &mut self,
        outcome: &Cohort,
        family: IndexFamily,
        options: &IndexOptions,
        source: RandomSource,
    ) -> Result<(AnyModel, Option<f64>), SurrogateError> {
        let k = key(&(family, options));
        if let Some(v) = self.index.get(&k) {
            return Ok(v.clone());
        }
        let mut b = NuisanceBundle::default();
        b.fit_index(outcome, family, options, source.with_stream(STREAM_INDEX))?;
        let v = (b.h_hat.expect("just fitted"), b.sigma2);
        self.index.insert(k, v.clone());
        Ok(v)
    }

    /// Builds a bundle with the nuisances `method` needs.
    fn bundle(
        &mut self,
        method: MethodId,
        options: &MethodOptions,
        treatment: &Cohort,
        outcome: &Cohort,
        source: RandomSource,
    ) -> Result<NuisanceBundle, SurrogateError> {
        let mut bundle = NuisanceBundle::default();
        let family = options.index_family.unwrap_or_default();
        let (h, sigma2) = self.index(outcome, family, &options.index_options(), source)?;
        bundle.h_hat = Some(h);
        bundle.sigma2 = sigma2;
        let l2 = options.logistic_l2.unwrap_or(super::nuisance::LOGISTIC_L2);
        match method {
            MethodId::BoundRegLin | MethodId::BoundRegTree | MethodId::BoundRegBintree => {
                let k = key(&l2);
                if !self.propensity.contains_key(&k) {
                    self.propensity.insert(k.clone(), fit_propensity(treatment, l2)?);
                    self.score.insert(k.clone(), fit_surrogate_score(treatment, l2)?);
                }
                bundle.e_hat = self.propensity.get(&k).cloned();
                bundle.rho_hat = self.score.get(&k).cloned();
            }
            MethodId::SurrogateSamplingLin => {
                let params = options.forest.clone().unwrap_or_default();
                let k = key(&params);
                if !self.sampler.contains_key(&k) {
                    let s = fit_conditional_sampler(treatment, &params, source.with_stream(STREAM_SAMPLER))?;
                    self.sampler.insert(k.clone(), s);
                }
                bundle.sampler = self.sampler.get(&k).cloned();
            }
            _ => {}
        }
        Ok(bundle)
    }
}

/// Inputs shared by every learner call.
pub struct TrainingData<'a> {
    /// `(x, t, s)` units.
    pub treatment: &'a Cohort,
    /// `(x, s, y)` units.
    pub outcome: &'a Cohort,
    pub ratio: &'a DensityRatio,
}

/// Fits `method` on the observational data.
pub fn fit_method(
    method: MethodId,
    options: &MethodOptions,
    data: &TrainingData<'_>,
    cache: &mut NuisanceCache,
    source: RandomSource,
) -> Result<Endpoint, SurrogateError> {
    options.validate()?;
    let local = source.with_stream(method.stream());
    let outcome = data.outcome;
    let plugin = |m| Ok(Endpoint::Plugin(m));
    match method {
        MethodId::OutcomeRegLin => {
            plugin(fit_outcome_regression(outcome, BaselineFamily::Linear, &options.baseline_options(method), local)?)
        }
        MethodId::OutcomeRegTree => {
            plugin(fit_outcome_regression(outcome, BaselineFamily::Tree, &options.baseline_options(method), local)?)
        }
        MethodId::RegSelRegLin => plugin(fit_reg_sel_reg(outcome, BaselineFamily::Linear, &options.baseline_options(method), local)?),
        MethodId::RegSelRegTree => plugin(fit_reg_sel_reg(outcome, BaselineFamily::Tree, &options.baseline_options(method), local)?),
        MethodId::SurrogateIndexLin | MethodId::SurrogateIndexTree | MethodId::SurrogateIndexGbm => {
            let family = match method {
                MethodId::SurrogateIndexLin => IndexFamily::Linear,
                MethodId::SurrogateIndexTree => IndexFamily::Tree,
                _ => IndexFamily::Gbm,
            };
            Ok(Endpoint::Index(cache.index(outcome, family, &options.index_options(), source)?.0))
        }
        MethodId::BoundRegLin | MethodId::BoundRegTree | MethodId::BoundRegBintree => {
            let bundle = cache.bundle(method, options, data.treatment, outcome, source)?;
            let (lo, hi) = options.clip.unwrap_or(DEFAULT_CLIP);
            let scheme = WeightScheme::clipped(options.scheme.unwrap_or(WeightKind::W2), lo, hi);
            let family = match method {
                MethodId::BoundRegLin if options.lambda_for(method) == 0.0 => BoundFamily::LinearOls,
                MethodId::BoundRegLin => BoundFamily::LinearLasso,
                MethodId::BoundRegTree => BoundFamily::Tree,
                _ => BoundFamily::Bintree,
            };
            plugin(fit_bound_regression(data.treatment, &bundle, scheme, family, &options.bound_options(method), data.ratio, local)?)
        }
        MethodId::SurrogateSamplingLin => {
            let bundle = cache.bundle(method, options, data.treatment, outcome, source)?;
            let fit = fit_surrogate_sampling(
                data.treatment,
                &bundle,
                options.draws.unwrap_or(DEFAULT_DRAWS),
                options.lambda_for(method),
                options.optimizer.unwrap_or_default(),
                data.ratio,
                local,
            )?;
            plugin(fit.model)
        }
    }
}
