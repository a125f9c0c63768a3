use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CaseId, Nonlinearity, ScenarioSpec, ScmError};
use crate::data::{mean_contrast, Cohort, Population, RandomSource, ScenarioTruth, StreamRng};
use crate::models::sigmoid;

const RADIUS_MED: f64 = 0.7;
const RADIUS_LEAF: f64 = 0.5;
const RADIUS_PROXY: f64 = 0.6;
const RADIUS_XY: f64 = 1.0;
const RADIUS_XM: f64 = 0.5;
const INTERCEPT_MEAN: f64 = 0.6;
const INTERCEPT_SD: f64 = 0.5;
const B_T: f64 = -0.1;
const DIRECT_EFFECT: f64 = 1.0;

/// Sampled structural coefficients of one scenario.
///
/// Surrogate maps are stored as `k × d_block` matrices whose columns are the
/// per-surrogate weight vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub spec: ScenarioSpec,
    pub w_xt: Array1<f64>,
    pub b_t: f64,
    pub w_med: Array2<f64>,
    pub w_leaf: Array2<f64>,
    pub w_proxy: Array2<f64>,
    pub b_med: Array1<f64>,
    pub b_leaf: Array1<f64>,
    pub b_proxy: Array1<f64>,
    pub w_xy: Array1<f64>,
    pub b_y: f64,
    /// Coefficient of `T` in the outcome equation (case e).
    pub direct_effect: f64,
    /// `X → M` weights of the latent mediator (case f).
    pub w_xm: Option<Array1<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Observational,
    Trial,
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn hypersphere_columns(rng: &mut StreamRng, k: usize, d: usize, radius: f64) -> Array2<f64> {
    let mut w = Array2::zeros((k, d));
    for j in 0..d {
        let v: Vec<f64> = (0..k).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for i in 0..k {
            w[[i, j]] = radius * v[i] / norm;
        }
    }
    w
}

/// Draws the coefficients of `spec`. Every draw happens regardless of the
/// case so that cases sharing a seed share their unmodified coefficients.
pub fn sample_scenario_params(spec: &ScenarioSpec, source: RandomSource) -> Result<ScenarioParams, ScmError> {
    spec.validate()?;
    let mut rng = source.rng();
    let k = spec.x_dim;
    let scale = spec.scale_overrides;
    let mut w_med = hypersphere_columns(&mut rng, k, spec.dims.med, RADIUS_MED * scale.med);
    let mut w_leaf = hypersphere_columns(&mut rng, k, spec.dims.leaf, RADIUS_LEAF * scale.leaf);
    let mut w_proxy = hypersphere_columns(&mut rng, k, spec.dims.proxy, RADIUS_PROXY * scale.proxy);
    let intercept = Normal::new(INTERCEPT_MEAN, INTERCEPT_SD).expect("valid normal");
    let mut draw = |d: usize| Array1::from_iter((0..d).map(|_| intercept.sample(&mut rng)));
    let b_med = draw(spec.dims.med);
    let b_leaf = draw(spec.dims.leaf);
    let b_proxy = draw(spec.dims.proxy);
    let b_y = draw(1)[0];
    let mut w_xy = hypersphere_columns(&mut rng, k, 1, RADIUS_XY).column(0).to_owned();
    let w_xm = hypersphere_columns(&mut rng, k, 1, RADIUS_XM).column(0).to_owned();

    let mut w_xt = Array1::zeros(k);
    w_xt[0] = 0.8;
    w_xt[1] = -0.6;
    match spec.case_id {
        CaseId::A => w_xy.fill(0.0),
        CaseId::B => {
            w_med.fill(0.0);
            w_leaf.fill(0.0);
            w_proxy.fill(0.0);
        }
        _ => {}
    }
    Ok(ScenarioParams {
        spec: spec.clone(),
        w_xt,
        b_t: B_T,
        w_med,
        w_leaf,
        w_proxy,
        b_med,
        b_leaf,
        b_proxy,
        w_xy,
        b_y,
        direct_effect: if spec.case_id == CaseId::E { DIRECT_EFFECT } else { 0.0 },
        w_xm: (spec.case_id == CaseId::F).then_some(w_xm),
    })
}

/// Structural noise of one unit, shared by both arms.
struct UnitNoise {
    x: Vec<f64>,
    u: f64,
    eps_t: f64,
    eps_s: Vec<f64>,
    eps_m: f64,
    eps_y: f64,
}

impl ScenarioParams {
    pub fn k(&self) -> usize {
        self.spec.x_dim
    }

    pub fn d(&self) -> usize {
        self.spec.dims.total()
    }

    fn draw_unit(&self, rng: &mut StreamRng) -> UnitNoise {
        let x = (0..self.k()).map(|_| normal(rng)).collect();
        let u = normal(rng);
        let eps_t = normal(rng);
        let eps_s = (0..self.d()).map(|_| normal(rng)).collect();
        let eps_m = normal(rng);
        let eps_y = normal(rng);
        let u = if self.spec.unobserved_confounder { u } else { 0.0 };
        UnitNoise { x, u, eps_t, eps_s, eps_m, eps_y }
    }

    fn linear_part(w: &Array2<f64>, b: &Array1<f64>, x: &[f64], j: usize) -> f64 {
        b[j] + w.column(j).iter().zip(x).map(|(a, z)| a * z).sum::<f64>()
    }

    fn mediator_shift(&self, x: &[f64]) -> f64 {
        self.w_xm.as_ref().map_or(0.0, |w| w.iter().zip(x).map(|(a, z)| a * z).sum())
    }

    /// Surrogates and outcome of one unit in arm `t`; writes `s` in place.
    fn arm(&self, noise: &UnitNoise, t: f64, s: &mut [f64]) -> f64 {
        let x = &noise.x;
        let dims = self.spec.dims;
        let treat = match &self.w_xm {
            Some(_) => t + self.mediator_shift(x) + noise.eps_m,
            None => t,
        };
        for j in 0..dims.med {
            let lin = Self::linear_part(&self.w_med, &self.b_med, x, j);
            s[j] = lin + lin * treat + noise.u + noise.eps_s[j];
        }
        for j in 0..dims.leaf {
            let lin = Self::linear_part(&self.w_leaf, &self.b_leaf, x, j);
            s[dims.med + j] = lin + lin * treat + noise.u + noise.eps_s[dims.med + j];
        }
        let off = dims.med + dims.leaf;
        for j in 0..dims.proxy {
            s[off + j] = Self::linear_part(&self.w_proxy, &self.b_proxy, x, j) + noise.u + noise.eps_s[off + j];
        }
        let mut y = self.b_y + self.w_xy.iter().zip(x).map(|(a, z)| a * z).sum::<f64>() + noise.u + noise.eps_y;
        if self.spec.case_id != CaseId::C {
            let phi = self.spec.nonlinearity;
            y += s[..dims.med].iter().map(|&v| phi.phi(v)).sum::<f64>();
            y += s[off..].iter().map(|&v| phi.phi(v)).sum::<f64>();
            y += self.direct_effect * t;
            if self.w_xm.is_some() {
                y += treat;
            }
        }
        y
    }

    /// `E[Y(1) - Y(0) | X = x]`, integrating out every structural noise.
    ///
    /// Both arms of a mediator share their noise, so the arm contrast of
    /// `S_med,j` is `a_j = b_j + W_jᵀx` times `E[M(1) - M(0)] = 1`. For the
    /// square map the arm variances are equal, leaving
    /// `E[S(1)²] - E[S(0)²] = a_j (2 μ_j + a_j)` with `μ_j = E[S_j(0) | x]`.
    pub fn cate(&self, x: &[f64]) -> f64 {
        if self.spec.case_id == CaseId::C {
            return 0.0;
        }
        let m0 = self.mediator_shift(x);
        let mut tau = 0.0;
        for j in 0..self.spec.dims.med {
            let a = Self::linear_part(&self.w_med, &self.b_med, x, j);
            tau += match self.spec.nonlinearity {
                Nonlinearity::Linear => a,
                Nonlinearity::Square => {
                    let mu0 = a + a * m0;
                    a * (2.0 * mu0 + a)
                }
            };
        }
        tau + self.direct_effect + if self.w_xm.is_some() { 1.0 } else { 0.0 }
    }
}

/// Draws `n` units from the scenario in the given regime.
///
/// Unit `i` takes its covariates and structural noise from
/// `source.substream(i)` and its treatment draw from a separate stream, so
/// the two regimes generated from one source share everything but `T`.
pub fn generate_cohort(params: &ScenarioParams, n: usize, regime: Regime, source: RandomSource) -> Result<(Cohort, ScenarioTruth), ScmError> {
    if n == 0 {
        return Err(ScmError::InvalidSpec("n must be at least 1".into()));
    }
    let k = params.k();
    let d = params.d();
    let treat_source = source.with_stream(source.stream_id ^ 0x5452_4541_544d_4e54);
    let mut x = Array2::zeros((n, k));
    let mut s0 = Array2::zeros((n, d));
    let mut s1 = Array2::zeros((n, d));
    let mut y0 = Array1::zeros(n);
    let mut y1 = Array1::zeros(n);
    let mut cate = Array1::zeros(n);
    let mut t = Vec::with_capacity(n);
    let mut buf0 = vec![0.0; d];
    let mut buf1 = vec![0.0; d];
    for i in 0..n {
        let noise = params.draw_unit(&mut source.substream(i as u64).rng());
        y0[i] = params.arm(&noise, 0.0, &mut buf0);
        y1[i] = params.arm(&noise, 1.0, &mut buf1);
        let p = match regime {
            Regime::Trial => 0.5,
            Regime::Observational => {
                let logit = params.b_t + params.w_xt.iter().zip(&noise.x).map(|(a, z)| a * z).sum::<f64>() + noise.eps_t + noise.u;
                sigmoid(logit)
            }
        };
        t.push(u8::from(treat_source.substream(i as u64).rng().random::<f64>() < p));
        cate[i] = params.cate(&noise.x);
        for j in 0..k {
            x[[i, j]] = noise.x[j];
        }
        for j in 0..d {
            s0[[i, j]] = buf0[j];
            s1[[i, j]] = buf1[j];
        }
    }
    Ok(assemble(x, t, s0, s1, y0, y1, cate, regime, params.spec.surrogate_names(), None))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    x: Array2<f64>,
    t: Vec<u8>,
    s0: Array2<f64>,
    s1: Array2<f64>,
    y0: Array1<f64>,
    y1: Array1<f64>,
    cate: Array1<f64>,
    regime: Regime,
    s_names: Vec<String>,
    population_ate: Option<f64>,
) -> (Cohort, ScenarioTruth) {
    let n = t.len();
    let mut s = s0.clone();
    let mut y = y0.clone();
    for i in 0..n {
        if t[i] == 1 {
            s.row_mut(i).assign(&s1.row(i));
            y[i] = y1[i];
        }
    }
    let population = match regime {
        Regime::Observational => Population::Observational,
        Regime::Trial => Population::Experimental,
    };
    let x_names = (0..x.ncols()).map(|j| format!("{j}")).collect();
    let cohort = Cohort::new(x, Some(t), s, Some(y), population)
        .and_then(|c| c.with_names(x_names, s_names))
        .expect("generated cohorts are well formed");
    let ate = mean_contrast(y1.view(), y0.view());
    (cohort, ScenarioTruth { s0, s1, y0, y1, cate, ate, population_ate })
}

/// One-covariate model where a plug-in surrogate is biased for the effect:
/// `X ~ N(0,1)`, `T ~ Bernoulli(0.5)`, `S = XT + T + ε_S`, `Y = γX + S + ε_Y`.
///
/// The population effect is 1 for every `γ`, while the regression of `Y` on
/// `S` picks up `γX` through `S` whenever `γ ≠ 0`.
pub fn confounded_counterexample(n: usize, gamma: f64, source: RandomSource) -> Result<(Cohort, ScenarioTruth), ScmError> {
    if n == 0 {
        return Err(ScmError::InvalidSpec("n must be at least 1".into()));
    }
    if !gamma.is_finite() {
        return Err(ScmError::InvalidSpec("gamma must be finite".into()));
    }
    let mut x = Array2::zeros((n, 1));
    let mut s0 = Array2::zeros((n, 1));
    let mut s1 = Array2::zeros((n, 1));
    let mut y0 = Array1::zeros(n);
    let mut y1 = Array1::zeros(n);
    let mut cate = Array1::zeros(n);
    let mut t = Vec::with_capacity(n);
    let mut rng = source.rng();
    for i in 0..n {
        let xi = normal(&mut rng);
        let eps_s = normal(&mut rng);
        let eps_y = normal(&mut rng);
        let ti = u8::from(rng.random::<f64>() < 0.5);
        x[[i, 0]] = xi;
        s0[[i, 0]] = eps_s;
        s1[[i, 0]] = xi + 1.0 + eps_s;
        y0[i] = gamma * xi + s0[[i, 0]] + eps_y;
        y1[i] = gamma * xi + s1[[i, 0]] + eps_y;
        cate[i] = xi + 1.0;
        t.push(ti);
    }
    Ok(assemble(x, t, s0, s1, y0, y1, cate, Regime::Observational, vec!["0".into()], Some(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::SuiteFamily;

    fn params(case: CaseId, nl: Nonlinearity, seed: u64) -> ScenarioParams {
        sample_scenario_params(&ScenarioSpec::new(case, nl), RandomSource::new(seed, 0)).unwrap()
    }

    #[test]
    fn hypersphere_radii() {
        for seed in 0..20 {
            let p = params(CaseId::D, Nonlinearity::Linear, seed);
            for (w, r) in [(&p.w_med, 0.7), (&p.w_leaf, 0.5), (&p.w_proxy, 0.6)] {
                for col in w.columns() {
                    assert!((col.dot(&col).sqrt() - r).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn case_zeroing() {
        assert!(params(CaseId::A, Nonlinearity::Linear, 1).w_xy.iter().all(|&v| v == 0.0));
        let b = params(CaseId::B, Nonlinearity::Square, 1);
        assert!(b.w_med.iter().chain(b.w_leaf.iter()).chain(b.w_proxy.iter()).all(|&v| v == 0.0));
        assert_eq!(params(CaseId::D, Nonlinearity::Linear, 3), params(CaseId::D, Nonlinearity::Linear, 3));
    }

    #[test]
    fn consistency_and_case_c_null() {
        let p = params(CaseId::C, Nonlinearity::Square, 2);
        let (c, truth) = generate_cohort(&p, 500, Regime::Observational, RandomSource::new(2, 1)).unwrap();
        assert!(truth.cate.iter().all(|&v| v == 0.0));
        assert!(truth.y1.iter().zip(truth.y0.iter()).all(|(a, b)| a == b));
        let t = c.t.as_ref().unwrap();
        let y = c.y.as_ref().unwrap();
        for i in 0..500 {
            let (sa, ya) = if t[i] == 1 { (truth.s1.row(i), truth.y1[i]) } else { (truth.s0.row(i), truth.y0[i]) };
            assert_eq!(c.s.row(i), sa);
            assert_eq!(y[i], ya);
        }
    }

    #[test]
    fn regimes_share_everything_but_treatment() {
        let p = params(CaseId::D, Nonlinearity::Linear, 4);
        let (obs, to) = generate_cohort(&p, 200, Regime::Observational, RandomSource::new(5, 0)).unwrap();
        let (trial, tt) = generate_cohort(&p, 200, Regime::Trial, RandomSource::new(5, 0)).unwrap();
        assert_eq!(obs.x, trial.x);
        assert_eq!(to, tt);
        assert_eq!(trial.population, Population::Experimental);
    }

    #[test]
    fn linear_cate_is_expected_contrast() {
        for spec in crate::scm::scenario_suite(SuiteFamily::Composite, &[6]) {
            let p = sample_scenario_params(&spec, RandomSource::new(spec.seed, 0)).unwrap();
            let (_, truth) = generate_cohort(&p, 4000, Regime::Trial, RandomSource::new(7, 0)).unwrap();
            let diff = &truth.y1 - &truth.y0;
            let resid = &diff - &truth.cate;
            let mean = resid.mean().unwrap();
            let sd = resid.std(1.0);
            assert!(mean.abs() < 4.0 * sd / (4000f64).sqrt() + 1e-12, "{} mean {mean} sd {sd}", spec.label());
        }
    }

    #[test]
    fn counterexample_effect() {
        let (c, truth) = confounded_counterexample(1000, 5.0, RandomSource::new(1, 0)).unwrap();
        assert_eq!(truth.population_ate, Some(1.0));
        assert_eq!(c.d(), 1);
        assert!((truth.ate - 1.0 - c.x.column(0).mean().unwrap()).abs() < 1e-12);
    }
}
