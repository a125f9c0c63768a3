use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{OracleError, WeightScheme};
use crate::data::{mean_contrast, Cohort, Population, RandomSource, ScenarioTruth, StreamRng};
use crate::scm::CaseId;

const NORM_TOL: f64 = 1e-12;
const POSITIVITY_MARGIN: f64 = 0.02;

/// Finite-support causal model over covariate levels `x`, binary `T` and
/// surrogate levels `s`. Each level carries a numeric vector (`x_values`,
/// `s_values`) so that linear functionals such as `E[X|s]` or `βᵀs` are
/// defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteScm {
    pub p_x: Array1<f64>,
    pub x_values: Array2<f64>,
    /// `p(T=1 | x)`.
    pub p_t1: Array1<f64>,
    pub s_values: Array2<f64>,
    /// `p(s | x, t)` indexed `[x, t, s]`.
    pub p_s: Array3<f64>,
    /// `E[Y | x, t, s]` indexed `[x, t, s]`.
    pub y_mean: Array3<f64>,
    /// Whether `y_mean` depends on `t` (a direct effect).
    pub t_dependent: bool,
    /// `p_e(x)/p_o(x)` per covariate level.
    pub density_ratio: Array1<f64>,
    /// `γ` when `E[Y|x,t,s] = γᵀx + g(s)` holds exactly.
    #[serde(default)]
    pub additive_gamma: Option<Array1<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeForm {
    /// Unrestricted table.
    #[default]
    General,
    /// `γᵀx + g(s)` with a free table `g`.
    Additive,
    /// `γᵀx + βᵀs`.
    Linear,
}

/// Recipe for [`DiscreteScm::random`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomModelSpec {
    pub case_id: CaseId,
    pub n_x: usize,
    pub n_s: usize,
    pub k: usize,
    pub d: usize,
    pub outcome: OutcomeForm,
    /// `p(T=1|x) ≡ 0.5`.
    pub randomized: bool,
    /// Draw a non-trivial `p_e/p_o` normalized to observational mean one.
    pub random_ratio: bool,
}

impl RandomModelSpec {
    pub fn new(case_id: CaseId) -> Self {
        RandomModelSpec { case_id, n_x: 4, n_s: 6, k: 2, d: 2, outcome: OutcomeForm::General, randomized: false, random_ratio: false }
    }

    pub fn with_outcome(mut self, outcome: OutcomeForm) -> Self {
        self.outcome = outcome;
        self
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn simplex(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

impl DiscreteScm {
    pub fn n_x(&self) -> usize {
        self.p_x.len()
    }

    pub fn n_s(&self) -> usize {
        self.s_values.nrows()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let (nx, ns) = (self.n_x(), self.n_s());
        let check = |name: &'static str, found: &[usize], expected: Vec<usize>| {
            if found == expected.as_slice() {
                Ok(())
            } else {
                Err(OracleError::Shape { name, expected, found: found.to_vec() })
            }
        };
        check("x_values", &[self.x_values.nrows()], vec![nx])?;
        check("p_t1", self.p_t1.shape(), vec![nx])?;
        check("p_s", self.p_s.shape(), vec![nx, 2, ns])?;
        check("y_mean", self.y_mean.shape(), vec![nx, 2, ns])?;
        check("density_ratio", self.density_ratio.shape(), vec![nx])?;
        let all = self.p_x.iter().chain(self.p_t1.iter()).chain(self.p_s.iter()).chain(self.y_mean.iter());
        if !all.chain(self.density_ratio.iter()).all(|v| v.is_finite()) {
            return Err(OracleError::InvalidArgument("non-finite table entry".into()));
        }
        let sum_x: f64 = self.p_x.sum();
        if (sum_x - 1.0).abs() > NORM_TOL || self.p_x.iter().any(|&p| p < 0.0) {
            return Err(OracleError::NotNormalized("p_x", sum_x));
        }
        for x in 0..nx {
            for t in 0..2 {
                let row = self.p_s.slice(ndarray::s![x, t, ..]);
                let sum = row.sum();
                if (sum - 1.0).abs() > NORM_TOL || row.iter().any(|&p| p < 0.0) {
                    return Err(OracleError::NotNormalized("p_s", sum));
                }
            }
            let e = self.p_t1[x];
            if self.p_x[x] > 0.0 && !(e > 0.0 && e < 1.0) {
                return Err(OracleError::PositivityViolation(x, e));
            }
        }
        Ok(())
    }

    pub fn p_t(&self, x: usize, t: usize) -> f64 {
        if t == 1 {
            self.p_t1[x]
        } else {
            1.0 - self.p_t1[x]
        }
    }

    /// Observational `p(s|x) = Σ_t p(t|x) p(s|x,t)`.
    pub fn p_s_given_x(&self, x: usize, s: usize) -> f64 {
        self.p_t(x, 0) * self.p_s[[x, 0, s]] + self.p_t(x, 1) * self.p_s[[x, 1, s]]
    }

    /// Observational marginal `p(s)`.
    pub fn p_s_marginal(&self, s: usize) -> f64 {
        (0..self.n_x()).map(|x| self.p_x[x] * self.p_s_given_x(x, s)).sum()
    }

    /// `p(x|s)` by Bayes' rule.
    pub fn p_x_given_s(&self, x: usize, s: usize) -> f64 {
        let ps = self.p_s_marginal(s);
        if ps > 0.0 {
            self.p_x[x] * self.p_s_given_x(x, s) / ps
        } else {
            0.0
        }
    }

    /// `p(T=1 | x, s)`.
    pub fn rho(&self, x: usize, s: usize) -> f64 {
        let denom = self.p_s_given_x(x, s);
        if denom > 0.0 {
            self.p_t1[x] * self.p_s[[x, 1, s]] / denom
        } else {
            self.p_t1[x]
        }
    }

    pub fn pi(&self, x: usize, s: usize) -> f64 {
        self.p_s[[x, 1, s]] - self.p_s[[x, 0, s]]
    }

    /// `h(x,s) = E[Y | x, s]` in the observational population.
    pub fn h(&self, x: usize, s: usize) -> f64 {
        if self.t_dependent {
            let r = self.rho(x, s);
            r * self.y_mean[[x, 1, s]] + (1.0 - r) * self.y_mean[[x, 0, s]]
        } else {
            self.y_mean[[x, 0, s]]
        }
    }

    pub fn weight(&self, scheme: &WeightScheme, x: usize, s: usize) -> f64 {
        let pxs = self.p_s_given_x(x, s);
        let ratio = if pxs > 0.0 { self.p_s_marginal(s) / pxs } else { 0.0 };
        scheme.value(self.p_t1[x], self.rho(x, s), ratio)
    }

    /// Evaluates `f` at every surrogate level.
    pub fn tabulate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.s_values.rows().into_iter().map(|r| f(&r.to_vec())).collect()
    }

    /// Draws a model with the independence structure of `spec.case_id`:
    /// a: `E[Y|x,t,s]` depends on `s` only; b: `p(s|x,t) = p(s|t)`;
    /// c: `E[Y|x,t,s]` depends on `x` only; d: unrestricted, no direct
    /// effect; e: adds a `t`-dependent term to the outcome table.
    pub fn random(spec: &RandomModelSpec, source: RandomSource) -> Result<Self, OracleError> {
        if spec.n_x == 0 || spec.n_s < 2 || spec.k == 0 || spec.d == 0 {
            return Err(OracleError::InvalidArgument("model needs n_x ≥ 1, n_s ≥ 2, k ≥ 1, d ≥ 1".into()));
        }
        if spec.case_id == CaseId::F {
            return Err(OracleError::CaseMismatch('f'));
        }
        let mut rng = source.rng();
        let (nx, ns) = (spec.n_x, spec.n_s);
        let p_x = Array1::from(simplex(&mut rng, nx));
        let x_values = Array2::from_shape_fn((nx, spec.k), |_| normal(&mut rng));
        let s_values = Array2::from_shape_fn((ns, spec.d), |_| normal(&mut rng));
        let p_t1 = Array1::from_shape_fn(nx, |_| {
            if spec.randomized {
                0.5
            } else {
                loop {
                    let e: f64 = rng.random();
                    if (POSITIVITY_MARGIN..=1.0 - POSITIVITY_MARGIN).contains(&e) {
                        break e;
                    }
                }
            }
        });
        let mut p_s = Array3::zeros((nx, 2, ns));
        let shared = [simplex(&mut rng, ns), simplex(&mut rng, ns)];
        for x in 0..nx {
            for t in 0..2 {
                let row = if spec.case_id == CaseId::B { shared[t].clone() } else { simplex(&mut rng, ns) };
                for s in 0..ns {
                    p_s[[x, t, s]] = row[s];
                }
            }
        }

        let gamma = Array1::from_shape_fn(spec.k, |_| normal(&mut rng));
        let beta = Array1::from_shape_fn(spec.d, |_| normal(&mut rng));
        let g_table: Vec<f64> = (0..ns).map(|_| normal(&mut rng)).collect();
        let inter = Array2::from_shape_fn((nx, ns), |_| normal(&mut rng));
        let direct = Array2::from_shape_fn((nx, ns), |_| normal(&mut rng));
        let g = |s: usize| match spec.outcome {
            OutcomeForm::Linear => beta.dot(&s_values.row(s)),
            _ => g_table[s],
        };
        let hx = |x: usize| gamma.dot(&x_values.row(x));
        let general = spec.outcome == OutcomeForm::General;
        let mut y_mean = Array3::zeros((nx, 2, ns));
        for x in 0..nx {
            for s in 0..ns {
                let base = match spec.case_id {
                    CaseId::A => g(s),
                    CaseId::C => hx(x),
                    _ => hx(x) + g(s) + if general { inter[[x, s]] } else { 0.0 },
                };
                y_mean[[x, 0, s]] = base;
                y_mean[[x, 1, s]] = base;
                if spec.case_id == CaseId::E {
                    y_mean[[x, 1, s]] += 1.0 + if general { direct[[x, s]] } else { 0.0 };
                }
            }
        }
        let additive_gamma = match spec.case_id {
            CaseId::A => Some(Array1::zeros(spec.k)),
            CaseId::E => None,
            _ if general => None,
            _ => Some(gamma.clone()),
        };

        let density_ratio = if spec.random_ratio {
            let raw = Array1::from_shape_fn(nx, |_| rng.random::<f64>() + 0.1);
            let mean = raw.dot(&p_x);
            raw / mean
        } else {
            Array1::ones(nx)
        };
        let model = DiscreteScm {
            p_x,
            x_values,
            p_t1,
            s_values,
            p_s,
            y_mean,
            t_dependent: spec.case_id == CaseId::E,
            density_ratio,
            additive_gamma,
        };
        model.validate()?;
        Ok(model)
    }

    /// Samples `n` units with potential outcomes. Surrogate arms are coupled
    /// through one uniform per unit (inverse-CDF draws), and `Y(t)` adds a
    /// shared standard normal to `E[Y|x,t,S(t)]`. Surrogate columns hold
    /// `s_values`; `x` holds `x_values`.
    pub fn sample(&self, n: usize, source: RandomSource) -> Result<(Cohort, ScenarioTruth), OracleError> {
        self.validate()?;
        if n == 0 {
            return Err(OracleError::InvalidArgument("n must be at least 1".into()));
        }
        let (k, d) = (self.x_values.ncols(), self.s_values.ncols());
        let cdf_x: Vec<f64> = cumulative(self.p_x.iter().copied());
        let mut rng = source.rng();
        let mut x = Array2::zeros((n, k));
        let mut s = Array2::zeros((n, d));
        let mut s0 = Array2::zeros((n, d));
        let mut s1 = Array2::zeros((n, d));
        let mut y = Array1::zeros(n);
        let mut y0 = Array1::zeros(n);
        let mut y1 = Array1::zeros(n);
        let mut cate = Array1::zeros(n);
        let mut t = Vec::with_capacity(n);
        let tau = super::exact_effects(self)?.tau_y_of_x;
        for i in 0..n {
            let xi = pick(&cdf_x, rng.random());
            let u_s: f64 = rng.random();
            let eps: f64 = normal(&mut rng);
            let ti = usize::from(rng.random::<f64>() < self.p_t1[xi]);
            let arm = |t: usize| pick(&cumulative(self.p_s.slice(ndarray::s![xi, t, ..]).iter().copied()), u_s);
            let (a0, a1) = (arm(0), arm(1));
            x.row_mut(i).assign(&self.x_values.row(xi));
            s0.row_mut(i).assign(&self.s_values.row(a0));
            s1.row_mut(i).assign(&self.s_values.row(a1));
            y0[i] = self.y_mean[[xi, 0, a0]] + eps;
            y1[i] = self.y_mean[[xi, 1, a1]] + eps;
            let (si, yi) = if ti == 1 { (a1, y1[i]) } else { (a0, y0[i]) };
            s.row_mut(i).assign(&self.s_values.row(si));
            y[i] = yi;
            cate[i] = tau[xi];
            t.push(ti as u8);
        }
        let cohort = Cohort::new(x, Some(t), s, Some(y), Population::Observational).expect("sampled cohort is well formed");
        let ate = mean_contrast(y1.view(), y0.view());
        let population_ate = Some(super::exact_effects(self)?.tau_y);
        Ok((cohort, ScenarioTruth { s0, s1, y0, y1, cate, ate, population_ate }))
    }
}

fn cumulative(p: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    p.map(|v| {
        acc += v;
        acc
    })
    .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_models_are_valid_for_every_case() {
        for case in [CaseId::A, CaseId::B, CaseId::C, CaseId::D, CaseId::E] {
            for seed in 0..10 {
                let mut spec = RandomModelSpec::new(case);
                spec.random_ratio = seed % 2 == 0;
                let m = DiscreteScm::random(&spec, RandomSource::new(seed, 0)).unwrap();
                assert!(m.p_t1.iter().all(|&e| (0.02..=0.98).contains(&e)));
                let mean_ratio: f64 = m.density_ratio.dot(&m.p_x);
                assert!((mean_ratio - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn case_b_surrogates_ignore_x() {
        let m = DiscreteScm::random(&RandomModelSpec::new(CaseId::B), RandomSource::new(1, 0)).unwrap();
        for x in 1..m.n_x() {
            for t in 0..2 {
                assert_eq!(m.p_s.slice(ndarray::s![x, t, ..]), m.p_s.slice(ndarray::s![0, t, ..]));
            }
        }
    }

    #[test]
    fn positivity_is_enforced() {
        let mut m = DiscreteScm::random(&RandomModelSpec::new(CaseId::D), RandomSource::new(2, 0)).unwrap();
        m.p_t1[1] = 1.0;
        assert!(matches!(m.validate(), Err(OracleError::PositivityViolation(1, _))));
    }

    #[test]
    fn bayes_quantities_are_consistent() {
        let m = DiscreteScm::random(&RandomModelSpec::new(CaseId::D), RandomSource::new(3, 0)).unwrap();
        for s in 0..m.n_s() {
            let total: f64 = (0..m.n_x()).map(|x| m.p_x_given_s(x, s)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let total: f64 = (0..m.n_s()).map(|s| m.p_s_marginal(s)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
