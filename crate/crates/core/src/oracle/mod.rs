//! Exact enumeration on finite-support causal models.
//!
//! A [`DiscreteScm`] tabulates `p(x)`, `p(T=1|x)`, `p(s|x,t)` and
//! `E[Y|x,t,s]`. With `π(x,s) = p(s|x,1) - p(s|x,0)` every quantity the
//! learners approximate has a closed form here:
//!
//! ```text
//! τ_Y(x)  = Σ_s h₁(x,s) p(s|x,1) - h₀(x,s) p(s|x,0)
//! τ_f(x)  = Σ_s f(s) π(x,s)
//! R(f)    = Σ_x r(x) p(x) (τ_Y(x) - τ_f(x))²
//! f*_w(s) = Σ_x w(x,s) h(x,s) p(x|s) / Σ_x w(x,s) p(x|s)
//! ```
//!
//! where `r = p_e/p_o` is the trial/observational density ratio.

mod discrete;
mod identities;

pub use discrete::{DiscreteScm, OutcomeForm, RandomModelSpec};
pub use identities::{
    ate_matching_surrogate, check_case_properties, counterexample_bias, exact_effects, exact_l1_risk, exact_risk,
    exact_weighted_minimizer, ipw_contrasts, linear_risk, outcome_regression_bias, risk_bound, surrogate_ate, weighted_contrasts,
    BiasDecomposition, CaseReport, ClaimCheck, ExactEffects,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("positivity violated at covariate level {0}: p(T=1|x) = {1}")]
    PositivityViolation(usize, f64),
    #[error("table `{0}` does not sum to one (sum = {1})")]
    NotNormalized(&'static str, f64),
    #[error("table `{name}` has shape {found:?}, expected {expected:?}")]
    Shape { name: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("weighted minimizer undefined at surrogate level {0}: zero denominator")]
    ZeroDenominator(usize),
    #[error("surrogate table has {found} entries, model has {expected} surrogate levels")]
    DomainMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model structure is not consistent with case {0}")]
    CaseMismatch(char),
    #[error("no surrogate column has a weighted contrast above {0}")]
    NoAffectedSurrogate(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// `(ρ/e - (1-ρ)/(1-e))²`
    W2,
    /// `ρ/e + (1-ρ)/(1-e)`
    Wplus,
    /// `|ρ/e - (1-ρ)/(1-e)|`
    W1,
    /// `ρ/e - (1-ρ)/(1-e)`, possibly negative.
    Wminus,
    /// `p(x)/p(x|s)`
    PxOverPxs,
    Uniform,
}

/// A regression weighting `w(x, s)`. `e = p(T=1|x)` and `ρ = p(T=1|x,s)`
/// are clipped to `clip_bounds` first when it is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub kind: WeightKind,
    #[serde(default)]
    pub clip_bounds: Option<(f64, f64)>,
}

impl WeightScheme {
    pub fn new(kind: WeightKind) -> Self {
        WeightScheme { kind, clip_bounds: None }
    }

    pub fn clipped(kind: WeightKind, lo: f64, hi: f64) -> Self {
        WeightScheme { kind, clip_bounds: Some((lo, hi)) }
    }

    /// Weight from propensity-type quantities; `px_over_pxs` is `p(s)/p(s|x)`.
    pub fn value(&self, e: f64, rho: f64, px_over_pxs: f64) -> f64 {
        let (e, rho) = match self.clip_bounds {
            Some((lo, hi)) => (e.clamp(lo, hi), rho.clamp(lo, hi)),
            None => (e, rho),
        };
        let a = rho / e;
        let b = (1.0 - rho) / (1.0 - e);
        match self.kind {
            WeightKind::W2 => (a - b) * (a - b),
            WeightKind::Wplus => a + b,
            WeightKind::W1 => (a - b).abs(),
            WeightKind::Wminus => a - b,
            WeightKind::PxOverPxs => px_over_pxs,
            WeightKind::Uniform => 1.0,
        }
    }
}
