use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{DiscreteScm, OracleError, WeightKind, WeightScheme};
use crate::data::{Cohort, RandomSource};
use crate::models::fit_linear;
use crate::scm::{confounded_counterexample, CaseId};

const CLAIM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEffects {
    pub tau_y: f64,
    pub tau_y_of_x: Vec<f64>,
    /// `τ_S(x) = E[S(1) - S(0) | x]`, one row per covariate level.
    pub tau_s_of_x: Array2<f64>,
}

pub fn exact_effects(m: &DiscreteScm) -> Result<ExactEffects, OracleError> {
    m.validate()?;
    let (nx, ns, d) = (m.n_x(), m.n_s(), m.s_values.ncols());
    let mut tau_y_of_x = vec![0.0; nx];
    let mut tau_s_of_x = Array2::zeros((nx, d));
    for x in 0..nx {
        for s in 0..ns {
            tau_y_of_x[x] += m.y_mean[[x, 1, s]] * m.p_s[[x, 1, s]] - m.y_mean[[x, 0, s]] * m.p_s[[x, 0, s]];
            let pi = m.pi(x, s);
            for j in 0..d {
                tau_s_of_x[[x, j]] += pi * m.s_values[[s, j]];
            }
        }
    }
    let tau_y = (0..nx).map(|x| m.p_x[x] * tau_y_of_x[x]).sum();
    Ok(ExactEffects { tau_y, tau_y_of_x, tau_s_of_x })
}

fn check_table(m: &DiscreteScm, f: &[f64]) -> Result<(), OracleError> {
    if f.len() != m.n_s() {
        return Err(OracleError::DomainMismatch { expected: m.n_s(), found: f.len() });
    }
    Ok(())
}

fn surrogate_cate(m: &DiscreteScm, f: &[f64], x: usize) -> f64 {
    (0..m.n_s()).map(|s| f[s] * m.pi(x, s)).sum()
}

/// `τ_f = Σ_x p(x) Σ_s f(s) π(x,s)`.
pub fn surrogate_ate(m: &DiscreteScm, f: &[f64]) -> Result<f64, OracleError> {
    check_table(m, f)?;
    Ok((0..m.n_x()).map(|x| m.p_x[x] * surrogate_cate(m, f, x)).sum())
}

/// `f*(s) = Σ_x w(x,s) h(x,s) p(x|s) / Σ_x w(x,s) p(x|s)`.
pub fn exact_weighted_minimizer(m: &DiscreteScm, scheme: &WeightScheme) -> Result<Vec<f64>, OracleError> {
    m.validate()?;
    (0..m.n_s())
        .map(|s| {
            let (mut num, mut den) = (0.0, 0.0);
            for x in 0..m.n_x() {
                let wp = m.weight(scheme, x, s) * m.p_x_given_s(x, s);
                num += wp * m.h(x, s);
                den += wp;
            }
            if den == 0.0 || !den.is_finite() {
                Err(OracleError::ZeroDenominator(s))
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

/// Trial CATE risk `Σ_x r(x) p(x) (τ_Y(x) - τ_f(x))²`.
pub fn exact_risk(m: &DiscreteScm, f: &[f64]) -> Result<f64, OracleError> {
    check_table(m, f)?;
    let eff = exact_effects(m)?;
    Ok((0..m.n_x())
        .map(|x| {
            let gap = eff.tau_y_of_x[x] - surrogate_cate(m, f, x);
            m.density_ratio[x] * m.p_x[x] * gap * gap
        })
        .sum())
}

/// `Σ_x r(x) p(x) |τ_Y(x) - τ_f(x)|`.
pub fn exact_l1_risk(m: &DiscreteScm, f: &[f64]) -> Result<f64, OracleError> {
    check_table(m, f)?;
    let eff = exact_effects(m)?;
    Ok((0..m.n_x()).map(|x| m.density_ratio[x] * m.p_x[x] * (eff.tau_y_of_x[x] - surrogate_cate(m, f, x)).abs()).sum())
}

/// `E[r(X) w(X,S) (h(X,S) - f(S))²]` for `w2` and `wplus`, and
/// `E[r(X) w¹(X,S) |h(X,S) - f(S)|]` for `w1`. The trial risk is at most the
/// `w2` value and at most twice the `wplus` value; the `w1` value bounds
/// [`exact_l1_risk`].
pub fn risk_bound(m: &DiscreteScm, f: &[f64], scheme: &WeightScheme) -> Result<f64, OracleError> {
    check_table(m, f)?;
    m.validate()?;
    if !matches!(scheme.kind, WeightKind::W2 | WeightKind::Wplus | WeightKind::W1) {
        return Err(OracleError::InvalidArgument(format!("no bound is defined for {:?}", scheme.kind)));
    }
    let mut total = 0.0;
    for x in 0..m.n_x() {
        for s in 0..m.n_s() {
            let gap = m.h(x, s) - f[s];
            let loss = if scheme.kind == WeightKind::W1 { gap.abs() } else { gap * gap };
            total += m.density_ratio[x] * m.p_x[x] * m.p_s_given_x(x, s) * m.weight(scheme, x, s) * loss;
        }
    }
    Ok(total)
}

/// Weighted mean over rows of `((β_h - β_f)ᵀ τ_S(x_i))²`, with `weights`
/// the per-row density ratio (mean taken over rows, not over weights).
pub fn linear_risk(
    beta_h: ArrayView1<'_, f64>,
    beta_f: ArrayView1<'_, f64>,
    tau_s: ArrayView2<'_, f64>,
    weights: Option<ArrayView1<'_, f64>>,
) -> Result<f64, OracleError> {
    let d = beta_h.len();
    if beta_f.len() != d || tau_s.ncols() != d {
        return Err(OracleError::DimensionMismatch(format!(
            "beta_h has {d} entries, beta_f {}, tau_s {} columns",
            beta_f.len(),
            tau_s.ncols()
        )));
    }
    if let Some(w) = weights {
        if w.len() != tau_s.nrows() {
            return Err(OracleError::DimensionMismatch(format!("{} weights for {} rows", w.len(), tau_s.nrows())));
        }
    }
    let n = tau_s.nrows();
    if n == 0 {
        return Err(OracleError::DimensionMismatch("no rows".into()));
    }
    let diff = &beta_h - &beta_f;
    let total: f64 = tau_s
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let q = diff.dot(&row);
            weights.map_or(1.0, |w| w[i]) * q * q
        })
        .sum();
    Ok(total / n as f64)
}

/// `δ_j = E[w₁(X) S_j | T=1] - E[w₀(X) S_j | T=0]` with
/// `w_t(x) = p(T=t)/p(T=t|x)`, computed from the model's conditionals.
pub fn weighted_contrasts(m: &DiscreteScm) -> Result<Vec<f64>, OracleError> {
    m.validate()?;
    let d = m.s_values.ncols();
    let mut delta = vec![0.0; d];
    for t in 0..2 {
        let p_t: f64 = (0..m.n_x()).map(|x| m.p_x[x] * m.p_t(x, t)).sum();
        let sign = if t == 1 { 1.0 } else { -1.0 };
        for x in 0..m.n_x() {
            let p_x_given_t = m.p_x[x] * m.p_t(x, t) / p_t;
            let w = p_t / m.p_t(x, t);
            for s in 0..m.n_s() {
                for j in 0..d {
                    delta[j] += sign * p_x_given_t * w * m.p_s[[x, t, s]] * m.s_values[[s, j]];
                }
            }
        }
    }
    Ok(delta)
}

/// Sample version of [`weighted_contrasts`] with fitted propensities
/// `e(x_i)`; `p(T=1)` is the treated share.
pub fn ipw_contrasts(cohort: &Cohort, propensity: &[f64]) -> Result<Vec<f64>, OracleError> {
    let t = cohort.treatment().map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
    if propensity.len() != cohort.n {
        return Err(OracleError::DimensionMismatch(format!("{} propensities for {} units", propensity.len(), cohort.n)));
    }
    let n1 = t.iter().filter(|&&v| v == 1).count();
    let n0 = cohort.n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(OracleError::InvalidArgument("both arms must be present".into()));
    }
    let p1 = n1 as f64 / cohort.n as f64;
    let mut delta = vec![0.0; cohort.d()];
    for i in 0..cohort.n {
        let e = propensity[i];
        let (w, denom, sign) = if t[i] == 1 { (p1 / e, n1 as f64, 1.0) } else { ((1.0 - p1) / (1.0 - e), n0 as f64, -1.0) };
        for j in 0..cohort.d() {
            delta[j] += sign * w * cohort.s[[i, j]] / denom;
        }
    }
    Ok(delta)
}

/// Picks the column with the largest `|δ_j|` (lowest index on ties) and the
/// scale `α = τ_Y / δ_j`, so that `f(S) = α S_j` has effect exactly `τ_Y`.
pub fn ate_matching_surrogate(tau_y: f64, deltas: &[f64], threshold: f64) -> Result<(usize, f64), OracleError> {
    let mut best: Option<usize> = None;
    for (j, d) in deltas.iter().enumerate() {
        if best.is_none_or(|b| d.abs() > deltas[b].abs()) {
            best = Some(j);
        }
    }
    match best {
        Some(j) if deltas[j].abs() >= threshold => Ok((j, tau_y / deltas[j])),
        _ => Err(OracleError::NoAffectedSurrogate(threshold)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    pub true_ate: f64,
    pub plugin_ate: f64,
    /// `γᵀ(E[E[X|S] | S=S(1)] - E[E[X|S] | S=S(0)])`, computed from `γ`
    /// without reference to the plug-in fit.
    pub bias: f64,
}

/// Decomposes the effect of the outcome-regression plug-in `f(s) = E[Y|S=s]`
/// on a model with `E[Y|x,s] = γᵀx + g(s)`.
pub fn outcome_regression_bias(m: &DiscreteScm) -> Result<BiasDecomposition, OracleError> {
    let gamma = m.additive_gamma.as_ref().ok_or_else(|| OracleError::InvalidArgument("model has no additive X → Y block".into()))?;
    let f = exact_weighted_minimizer(m, &WeightScheme::new(WeightKind::Uniform))?;
    let plugin_ate = surrogate_ate(m, &f)?;
    let true_ate = exact_effects(m)?.tau_y;
    let mut bias = 0.0;
    for s in 0..m.n_s() {
        let mut ex = Array1::<f64>::zeros(gamma.len());
        for x in 0..m.n_x() {
            ex.scaled_add(m.p_x_given_s(x, s), &m.x_values.row(x));
        }
        let shift: f64 = (0..m.n_x()).map(|x| m.p_x[x] * m.pi(x, s)).sum();
        bias += gamma.dot(&ex) * shift;
    }
    Ok(BiasDecomposition { true_ate, plugin_ate, bias })
}

/// Monte-Carlo version on the one-covariate counterexample: the plug-in is
/// the least-squares line of `Y` on `S`, the bias replaces `E[X|S]` by its
/// linear projection.
pub fn counterexample_bias(n: usize, gamma: f64, source: RandomSource) -> Result<BiasDecomposition, OracleError> {
    let (cohort, truth) = confounded_counterexample(n, gamma, source).map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
    let y = cohort.outcome().map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
    let fit = fit_linear(cohort.s.view(), y, None, 0.0).map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
    let ds = (&truth.s1.column(0) - &truth.s0.column(0)).mean().unwrap_or(0.0);
    let plugin_ate = fit.coefficients[0] * ds;
    let s = cohort.s.column(0);
    let x = cohort.x.column(0);
    let (ms, mx) = (s.mean().unwrap_or(0.0), x.mean().unwrap_or(0.0));
    let cov_xs = s.iter().zip(x.iter()).map(|(a, b)| (a - ms) * (b - mx)).sum::<f64>();
    let var_s = s.iter().map(|a| (a - ms) * (a - ms)).sum::<f64>();
    let bias = gamma * cov_xs / var_s * ds;
    Ok(BiasDecomposition { true_ate: truth.population_ate.unwrap_or(truth.ate), plugin_ate, bias })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub claim: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Whether the claim must hold on every instance of the case.
    pub required: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: CaseId,
    pub claims: Vec<ClaimCheck>,
}

impl CaseReport {
    /// True when every required claim holds.
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.holds || !c.required)
    }

    pub fn claim(&self, prefix: &str) -> Option<&ClaimCheck> {
        self.claims.iter().find(|c| c.claim.starts_with(prefix))
    }
}

fn equal_claim(claim: &str, lhs: f64, rhs: f64, required: bool) -> ClaimCheck {
    let holds = (lhs - rhs).abs() <= CLAIM_TOL * rhs.abs().max(1.0);
    ClaimCheck { claim: claim.to_string(), lhs, rhs, required, holds }
}

fn structure_matches(case: CaseId, m: &DiscreteScm) -> bool {
    let (nx, ns) = (m.n_x(), m.n_s());
    let all = |pred: &dyn Fn(usize, usize, usize) -> bool| (0..nx).all(|x| (0..2).all(|t| (0..ns).all(|s| pred(x, t, s))));
    match case {
        CaseId::A => all(&|x, t, s| m.y_mean[[x, t, s]] == m.y_mean[[0, 0, s]]),
        CaseId::B => !m.t_dependent && all(&|x, t, s| m.p_s[[x, t, s]] == m.p_s[[0, t, s]]),
        CaseId::C => all(&|x, t, s| m.y_mean[[x, t, s]] == m.y_mean[[x, 0, 0]]),
        CaseId::D => !m.t_dependent && all(&|x, _, s| m.y_mean[[x, 1, s]] == m.y_mean[[x, 0, s]]),
        CaseId::E => true,
        CaseId::F => false,
    }
}

/// Within-arm minimizer `f_t(s) = Σ_x w(x) h_t(x,s) p(x|s,t) / Σ_x w(x) p(x|s,t)`.
fn arm_minimizer(m: &DiscreteScm, t: usize, w: &dyn Fn(usize, usize) -> f64) -> Result<Vec<f64>, OracleError> {
    (0..m.n_s())
        .map(|s| {
            let (mut num, mut den) = (0.0, 0.0);
            for x in 0..m.n_x() {
                // p(x|s,t) ∝ p(x) p(t|x) p(s|x,t); the normalizer cancels.
                let p = m.p_x[x] * m.p_t(x, t) * m.p_s[[x, t, s]];
                num += w(x, s) * p * m.y_mean[[x, t, s]];
                den += w(x, s) * p;
            }
            if den == 0.0 {
                Err(OracleError::ZeroDenominator(s))
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

fn arm_surrogate_ate(m: &DiscreteScm, f1: &[f64], f0: &[f64]) -> f64 {
    (0..m.n_x())
        .map(|x| m.p_x[x] * (0..m.n_s()).map(|s| f1[s] * m.p_s[[x, 1, s]] - f0[s] * m.p_s[[x, 0, s]]).sum::<f64>())
        .sum()
}

/// Evaluates the per-case identities on `m`, which must have the
/// independence structure of `case_id`.
pub fn check_case_properties(case_id: CaseId, m: &DiscreteScm) -> Result<CaseReport, OracleError> {
    m.validate()?;
    if !structure_matches(case_id, m) {
        return Err(OracleError::CaseMismatch(case_id.letter()));
    }
    let eff = exact_effects(m)?;
    let ate_under = |kind: WeightKind| -> Result<f64, OracleError> { surrogate_ate(m, &exact_weighted_minimizer(m, &WeightScheme::new(kind))?) };
    let mut claims = Vec::new();
    match case_id {
        CaseId::A => {
            let f = exact_weighted_minimizer(m, &WeightScheme::new(WeightKind::Uniform))?;
            claims.push(equal_claim("E[Y|S] has zero CATE risk", exact_risk(m, &f)?, 0.0, true));
            let f2 = exact_weighted_minimizer(m, &WeightScheme::new(WeightKind::W2))?;
            claims.push(equal_claim("w2 minimizer has zero CATE risk", exact_risk(m, &f2)?, 0.0, true));
        }
        CaseId::B => {
            claims.push(equal_claim("p(x)/p(x|s) minimizer matches the ATE", ate_under(WeightKind::PxOverPxs)?, eff.tau_y, true));
            claims.push(equal_claim("w+ minimizer matches the ATE", ate_under(WeightKind::Wplus)?, eff.tau_y, true));
            claims.push(equal_claim("w1 minimizer matches the ATE", ate_under(WeightKind::W1)?, eff.tau_y, true));
            let randomized = m.p_t1.iter().all(|&e| e == m.p_t1[0]);
            claims.push(equal_claim("w2 minimizer matches the ATE", ate_under(WeightKind::W2)?, eff.tau_y, randomized));
        }
        CaseId::C => {
            let constant = vec![1.0; m.n_s()];
            claims.push(equal_claim("a constant has zero CATE risk", exact_risk(m, &constant)?, 0.0, true));
            claims.push(equal_claim("the ATE is zero", eff.tau_y, 0.0, true));
        }
        CaseId::D => {
            claims.push(equal_claim("w- minimizer matches the ATE", ate_under(WeightKind::Wminus)?, eff.tau_y, true));
            let scheme = WeightScheme::new(WeightKind::Wminus);
            let min_w = (0..m.n_x())
                .flat_map(|x| (0..m.n_s()).map(move |s| (x, s)))
                .map(|(x, s)| m.weight(&scheme, x, s))
                .fold(f64::INFINITY, f64::min);
            claims.push(ClaimCheck { claim: "w- takes a negative value".into(), lhs: min_w, rhs: 0.0, required: false, holds: min_w < 0.0 });
        }
        CaseId::E => {
            let pi_weight = |x: usize, s: usize| {
                let pxs = m.p_s_given_x(x, s);
                m.pi(x, s) / pxs
            };
            let (f1, f0) = (arm_minimizer(m, 1, &pi_weight)?, arm_minimizer(m, 0, &pi_weight)?);
            claims.push(equal_claim("arm-wise pi/p(s|x) minimizers match the ATE", arm_surrogate_ate(m, &f1, &f0), eff.tau_y, false));
            let ipw = |t: usize| {
                let p_t: f64 = (0..m.n_x()).map(|x| m.p_x[x] * m.p_t(x, t)).sum();
                move |x: usize, _s: usize| p_t / m.p_t(x, t)
            };
            let (g1, g0) = (arm_minimizer(m, 1, &ipw(1))?, arm_minimizer(m, 0, &ipw(0))?);
            claims.push(equal_claim("arm-wise inverse-propensity minimizers match the ATE", arm_surrogate_ate(m, &g1, &g0), eff.tau_y, true));
        }
        CaseId::F => unreachable!("rejected by structure_matches"),
    }
    Ok(CaseReport { case_id, claims })
}
