//! Trial-side effect estimation and scoring.
//!
//! A fitted endpoint is evaluated on trial units. The ATE is the difference
//! in arm means of the endpoint values. The CATE comes either from a linear
//! T-learner on `(x, t, value)` or, when the simulator supplies both
//! surrogate arms, from the potential outcomes `f(s(1)) - f(s(0))`.

use log::warn;
use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{RandomSource, ScenarioTruth};
use crate::models::{fit_linear, Regressor};
use crate::surrogates::{Endpoint, SurrogateError, SurrogateModel};

pub const DEFAULT_REPLICATES: usize = 2000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("arm {arm} has {found} units, at least {needed} required")]
    SingleArmData { arm: u8, needed: usize, found: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("bootstrap needs B >= 2 and nonempty data")]
    InvalidBootstrap,
    #[error("only {0} bootstrap replicates produced a value")]
    InsufficientReplicates(usize),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    DiffInMeans,
    TLearner,
    PotentialOutcomes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub method_id: String,
    pub estimator: Estimator,
    pub ate: f64,
    pub cate: Option<Array1<f64>>,
}

/// Percentile interval with its level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae_ate: f64,
    pub r2_cate: Option<f64>,
    pub pehe: Option<f64>,
    pub ci: Option<Interval>,
    /// Bootstrap standard error of the ATE estimate.
    pub se: Option<f64>,
}

fn arm_sizes(t: &[u8]) -> [usize; 2] {
    let treated = t.iter().filter(|&&v| v == 1).count();
    [t.len() - treated, treated]
}

/// `mean(values | t = 1) - mean(values | t = 0)`.
pub fn ate_diff_in_means(values: ArrayView1<'_, f64>, t: &[u8]) -> Result<f64, EvalError> {
    if values.len() != t.len() {
        return Err(EvalError::ShapeMismatch { expected: format!("{} values", t.len()), found: values.len().to_string() });
    }
    let mut sum = [0.0; 2];
    let mut count = [0usize; 2];
    for (v, &a) in values.iter().zip(t) {
        sum[a as usize] += v;
        count[a as usize] += 1;
    }
    for arm in 0..2u8 {
        if count[arm as usize] == 0 {
            return Err(EvalError::SingleArmData { arm, needed: 1, found: 0 });
        }
    }
    Ok(sum[1] / count[1] as f64 - sum[0] / count[0] as f64)
}

/// Difference-in-means ATE of `f(S)`. The calibration offset is dropped
/// before the contrast, so it cancels exactly rather than up to rounding.
pub fn surrogate_ate(f: &SurrogateModel, s: ArrayView2<'_, f64>, t: &[u8]) -> Result<f64, EvalError> {
    let mut calibration = f.calibration;
    calibration.offset = 0.0;
    let values = f.clone().with_calibration(calibration).evaluate(s)?;
    ate_diff_in_means(values.view(), t)
}

/// Linear T-learner: one least-squares fit per arm, `g₁(eval_x) - g₀(eval_x)`.
pub fn cate_t_learner(
    x: ArrayView2<'_, f64>,
    t: &[u8],
    values: ArrayView1<'_, f64>,
    eval_x: ArrayView2<'_, f64>,
) -> Result<Array1<f64>, EvalError> {
    let k = x.ncols();
    if t.len() != x.nrows() || values.len() != x.nrows() {
        return Err(EvalError::ShapeMismatch { expected: format!("{} rows", x.nrows()), found: format!("{} / {}", t.len(), values.len()) });
    }
    if eval_x.ncols() != k {
        return Err(EvalError::ShapeMismatch { expected: format!("{k} covariates"), found: eval_x.ncols().to_string() });
    }
    let sizes = arm_sizes(t);
    let mut fits = Vec::with_capacity(2);
    for arm in 0..2u8 {
        if sizes[arm as usize] < k + 1 {
            return Err(EvalError::SingleArmData { arm, needed: k + 1, found: sizes[arm as usize] });
        }
        let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] == arm).collect();
        fits.push(fit_linear(x.select(Axis(0), &idx).view(), values.select(Axis(0), &idx).view(), None, 0.0)?);
    }
    let g0 = fits[0].predict(eval_x)?;
    let g1 = fits[1].predict(eval_x)?;
    Ok(g1 - g0)
}

/// `f(s1_i) - f(s0_i)`.
pub fn cate_potential_outcomes(
    f: &SurrogateModel,
    s1: ArrayView2<'_, f64>,
    s0: ArrayView2<'_, f64>,
) -> Result<Array1<f64>, EvalError> {
    if s1.dim() != s0.dim() {
        return Err(EvalError::ShapeMismatch { expected: format!("{:?}", s1.dim()), found: format!("{:?}", s0.dim()) });
    }
    Ok(f.evaluate(s1)? - f.evaluate(s0)?)
}

/// Potential-outcome CATE for any endpoint; a surrogate index reads `x` too.
pub fn endpoint_potential_outcomes(
    endpoint: &Endpoint,
    x: ArrayView2<'_, f64>,
    s1: ArrayView2<'_, f64>,
    s0: ArrayView2<'_, f64>,
) -> Result<Array1<f64>, EvalError> {
    match endpoint {
        Endpoint::Plugin(f) => cate_potential_outcomes(f, s1, s0),
        Endpoint::Index(h) => {
            if s1.dim() != s0.dim() || x.nrows() != s1.nrows() {
                return Err(EvalError::ShapeMismatch { expected: format!("{:?}", s1.dim()), found: format!("{:?}", s0.dim()) });
            }
            let xs = |s: ArrayView2<'_, f64>| ndarray::concatenate(Axis(1), &[x, s]).expect("rows agree");
            Ok(h.predict(xs(s1).view())? - h.predict(xs(s0).view())?)
        }
    }
}

/// The reference the ATE is scored against.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    Truth(&'a ScenarioTruth),
    Ate(f64),
}

impl Reference<'_> {
    /// Population ATE when known in closed form, else the sample ATE.
    pub fn ate(&self) -> f64 {
        match self {
            Reference::Truth(t) => t.population_ate.unwrap_or(t.ate),
            Reference::Ate(a) => *a,
        }
    }
}

/// `1 - SS_res / SS_tot`; absent when the truth is (numerically) constant.
pub fn r_squared(truth: ArrayView1<'_, f64>, estimate: ArrayView1<'_, f64>) -> Option<f64> {
    let n = truth.len() as f64;
    let mean = truth.sum() / n;
    let ss_tot: f64 = truth.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot <= 1e-12 * n * mean.abs().max(1.0).powi(2) {
        return None;
    }
    let ss_res: f64 = truth.iter().zip(estimate.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

/// `(1/n) Σ (τ(x_i) - τ̂(x_i))²`.
pub fn pehe(truth: ArrayView1<'_, f64>, estimate: ArrayView1<'_, f64>) -> f64 {
    truth.iter().zip(estimate.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Scores an estimate. CATE metrics need per-unit truth of matching length.
pub fn score(est: &EffectEstimate, reference: Reference<'_>) -> MetricReport {
    let mae_ate = (est.ate - reference.ate()).abs();
    let (r2_cate, pehe_value) = match (&est.cate, reference) {
        (Some(cate), Reference::Truth(t)) if cate.len() == t.cate.len() => {
            (r_squared(t.cate.view(), cate.view()), Some(pehe(t.cate.view(), cate.view())))
        }
        _ => (None, None),
    };
    MetricReport { mae_ate, r2_cate, pehe: pehe_value, ci: None, se: None }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Mean of the replicates.
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    /// Standard deviation of the replicates.
    pub se: f64,
    /// Replicates whose statistic failed (e.g. a resample with one arm).
    pub failed: usize,
}

impl BootstrapSummary {
    pub fn interval(&self) -> Interval {
        Interval { lo: self.lo, hi: self.hi, level: self.level }
    }
}

/// Percentile bootstrap over `n` units. `statistic` receives the resampled
/// unit indices; replicate `b` draws from `source.substream(b)`.
pub fn bootstrap_ci<F>(n: usize, statistic: F, replicates: usize, level: f64, source: RandomSource) -> Result<BootstrapSummary, EvalError>
where
    F: Fn(&[usize]) -> Result<f64, EvalError> + Sync,
{
    use rand::Rng;
    if replicates < 2 || n == 0 || !(0.0 < level && level < 1.0) {
        return Err(EvalError::InvalidBootstrap);
    }
    let values: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = source.substream(b as u64).rng();
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            statistic(&idx).ok().filter(|v| v.is_finite())
        })
        .collect();
    let mut ok: Vec<f64> = values.into_iter().flatten().collect();
    let failed = replicates - ok.len();
    if ok.len() < 2 {
        return Err(EvalError::InsufficientReplicates(ok.len()));
    }
    if failed > 0 {
        warn!("{failed} of {replicates} bootstrap replicates failed and were dropped");
    }
    let m = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / m;
    let se = (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    ok.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapSummary { mean, lo: percentile(&ok, alpha), hi: percentile(&ok, 1.0 - alpha), level, se, failed })
}

/// Bootstrap of the difference-in-means ATE of fixed endpoint values.
pub fn bootstrap_ate(values: ArrayView1<'_, f64>, t: &[u8], replicates: usize, level: f64, source: RandomSource) -> Result<BootstrapSummary, EvalError> {
    let stat = |idx: &[usize]| {
        let v: Array1<f64> = idx.iter().map(|&i| values[i]).collect();
        let tt: Vec<u8> = idx.iter().map(|&i| t[i]).collect();
        ate_diff_in_means(v.view(), &tt)
    };
    bootstrap_ci(values.len(), stat, replicates, level, source)
}
