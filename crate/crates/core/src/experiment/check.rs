//! Self-check of the exact identities on random discrete models.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::make_rng;
use crate::models::fit_linear;
use crate::oracle::{
    ate_matching_surrogate, check_case_properties, exact_effects, exact_risk, exact_weighted_minimizer, linear_risk, risk_bound,
    surrogate_ate, weighted_contrasts, DiscreteScm, OracleError, OutcomeForm, RandomModelSpec, WeightKind, WeightScheme,
};
use crate::scm::CaseId;

/// Outcome of one family of checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Largest violation observed (0 when every instance holds).
    pub worst: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<CheckResult>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

struct Tally {
    result: CheckResult,
}

impl Tally {
    fn new(name: &str) -> Self {
        Tally { result: CheckResult { name: name.into(), instances: 0, failures: 0, worst: 0.0 } }
    }

    /// Records an instance whose violation is `excess` (≤ 0 means it holds).
    fn record(&mut self, excess: f64) {
        self.result.instances += 1;
        if excess > 0.0 || excess.is_nan() {
            self.result.failures += 1;
            self.result.worst = self.result.worst.max(excess);
        }
    }
}

fn random_table(m: &DiscreteScm, rng: &mut impl Rng) -> Vec<f64> {
    (0..m.n_s()).map(|_| StandardNormal.sample(rng)).collect()
}

const CASES: [CaseId; 4] = [CaseId::A, CaseId::B, CaseId::C, CaseId::D];

/// Runs every identity family on `instances` random models each.
pub fn oracle_check(seed: u64, instances: usize) -> Result<OracleReport, OracleError> {
    let mut report = OracleReport::default();
    let model = |case: CaseId, stream: u64, i: usize| {
        let mut spec = RandomModelSpec::new(case);
        spec.random_ratio = i % 2 == 1;
        DiscreteScm::random(&spec, make_rng(seed, stream).substream(i as u64))
    };

    let mut shift = Tally::new("risk is invariant to surrogate offsets");
    let mut bound2 = Tally::new("risk <= w2 bound");
    let mut bound_plus = Tally::new("risk <= 2 x w+ bound");
    let mut rng = make_rng(seed, 1).rng();
    for i in 0..instances {
        let m = model(CASES[i % 4], 2, i)?;
        let f = random_table(&m, &mut rng);
        let c: f64 = StandardNormal.sample(&mut rng);
        let g: Vec<f64> = f.iter().map(|v| v + c).collect();
        let r = exact_risk(&m, &f)?;
        shift.record((r - exact_risk(&m, &g)?).abs() - 1e-12);
        bound2.record(r - risk_bound(&m, &f, &WeightScheme::new(WeightKind::W2))? - 1e-12);
        bound_plus.record(r - 2.0 * risk_bound(&m, &f, &WeightScheme::new(WeightKind::Wplus))? - 1e-12);
    }
    report.checks.extend([shift.result, bound2.result, bound_plus.result]);

    let mut unbiased_b = Tally::new("case b: w+, w1 and p(x)/p(x|s) minimizers match the ATE");
    let mut unbiased_d = Tally::new("case d: w- minimizer matches the ATE");
    for i in 0..instances {
        let m = DiscreteScm::random(&RandomModelSpec::new(CaseId::B), make_rng(seed, 3).substream(i as u64))?;
        let tau = exact_effects(&m)?.tau_y;
        for kind in [WeightKind::Wplus, WeightKind::W1, WeightKind::PxOverPxs] {
            let f = exact_weighted_minimizer(&m, &WeightScheme::new(kind))?;
            unbiased_b.record((surrogate_ate(&m, &f)? - tau).abs() - 1e-9);
        }
        let m = DiscreteScm::random(&RandomModelSpec::new(CaseId::D), make_rng(seed, 4).substream(i as u64))?;
        let f = exact_weighted_minimizer(&m, &WeightScheme::new(WeightKind::Wminus))?;
        unbiased_d.record((surrogate_ate(&m, &f)? - exact_effects(&m)?.tau_y).abs() - 1e-9);
    }
    report.checks.extend([unbiased_b.result, unbiased_d.result]);

    let mut linear = Tally::new("linear risk identity");
    for i in 0..instances {
        let spec = RandomModelSpec::new(CASES[i % 4]).with_outcome(OutcomeForm::Linear);
        let m = DiscreteScm::random(&spec, make_rng(seed, 5).substream(i as u64))?;
        let beta_h = outcome_slope(&m)?;
        let beta_f = Array1::from_iter((0..beta_h.len()).map(|_| StandardNormal.sample(&mut rng)));
        let f = m.tabulate(|s| beta_f.iter().zip(s).map(|(b, v)| b * v).sum());
        let eff = exact_effects(&m)?;
        let nx = m.n_x() as f64;
        let w = Array1::from_iter((0..m.n_x()).map(|x| nx * m.p_x[x] * m.density_ratio[x]));
        let lr = linear_risk(beta_h.view(), beta_f.view(), eff.tau_s_of_x.view(), Some(w.view()))?;
        linear.record((lr - exact_risk(&m, &f)?).abs() - 1e-9);
    }
    report.checks.push(linear.result);

    let mut matching = Tally::new("ATE-matching surrogate reproduces the ATE");
    let mut positive = Tally::new("ATE-matching surrogate keeps positive CATE risk on 95% of models");
    let mut zero_risk = 0;
    let mut drawn = 0;
    let mut i = 0u64;
    while drawn < instances {
        let m = DiscreteScm::random(&RandomModelSpec::new(CASES[i as usize % 4]), make_rng(seed, 6).substream(i))?;
        i += 1;
        let delta = weighted_contrasts(&m)?;
        let tau = exact_effects(&m)?.tau_y;
        let Ok((j, alpha)) = ate_matching_surrogate(tau, &delta, 0.05) else { continue };
        drawn += 1;
        let f = m.tabulate(|s| alpha * s[j]);
        matching.record((surrogate_ate(&m, &f)? - tau).abs() - 1e-12);
        if exact_risk(&m, &f)? <= 0.0 {
            zero_risk += 1;
        }
    }
    positive.record(zero_risk as f64 - 0.05 * instances as f64);
    report.checks.extend([matching.result, positive.result]);

    let mut cases = Tally::new("case-specific identities (a-e)");
    for (c, case) in [CaseId::A, CaseId::B, CaseId::C, CaseId::D, CaseId::E].into_iter().enumerate() {
        for i in 0..instances.div_ceil(5) {
            let m = DiscreteScm::random(&RandomModelSpec::new(case), make_rng(seed, 7 + c as u64).substream(i as u64))?;
            let r = check_case_properties(case, &m)?;
            cases.record(if r.passed() { 0.0 } else { 1.0 });
        }
    }
    report.checks.push(cases.result);
    Ok(report)
}

/// `β` of a linear-outcome model, recovered from `h(x₀, s) - γᵀx₀ = βᵀs`.
fn outcome_slope(m: &DiscreteScm) -> Result<Array1<f64>, OracleError> {
    let gamma = m.additive_gamma.clone().unwrap_or_else(|| Array1::zeros(m.x_values.ncols()));
    let base = gamma.dot(&m.x_values.row(0));
    let target = Array1::from_iter((0..m.n_s()).map(|s| m.y_mean[[0, 0, s]] - base));
    let fit = fit_linear(m.s_values.view(), target.view(), None, 0.0).map_err(|e| OracleError::InvalidArgument(e.to_string()))?;
    Ok(fit.coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let report = oracle_check(0, 12).unwrap();
        for c in &report.checks {
            assert!(c.passed(), "{c:?}");
        }
    }
}
