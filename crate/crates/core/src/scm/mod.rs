//! Synthetic structural causal models with known potential outcomes.
//!
//! Covariates `X ~ N(0, I_k)` drive treatment, three surrogate blocks and the
//! outcome:
//!
//! ```text
//! T       ~ Bernoulli(σ(w_xtᵀX + b_t + ε_T))        (trial: Bernoulli(0.5))
//! S_med   = b + WᵀX + (WᵀX + b)·T + ε
//! S_leaf  = b + WᵀX + (WᵀX + b)·T + ε               (no effect on Y)
//! S_proxy = b + WᵀX + ε                              (not affected by T)
//! Y       = b_y + w_xyᵀX + Σφ(S_med) + Σφ(S_proxy) + ε_Y
//! ```
//!
//! The six cases edit this graph:
//!
//! - a: no `X → Y` edge.
//! - b: no `X → S` edges.
//! - c: no `S → Y` edges, so every effect on `Y` is zero.
//! - d: the full graph.
//! - e: an extra direct `T → Y` term.
//! - f: `T` acts through a latent mediator `M = T + w_xmᵀX + ε_M` that replaces
//!   `T` in the surrogate interactions and enters `Y` additively.
//!
//! An optional unobserved confounder `U ~ N(0, 1)` enters the treatment logit,
//! every surrogate and `Y` with unit coefficients.

mod generate;

pub use generate::{confounded_counterexample, generate_cohort, sample_scenario_params, Regime, ScenarioParams};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum ScmError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("unknown case `{0}` (expected one of a-f)")]
    UnknownCase(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl CaseId {
    pub const ALL: [CaseId; 6] = [CaseId::A, CaseId::B, CaseId::C, CaseId::D, CaseId::E, CaseId::F];

    pub fn letter(self) -> char {
        match self {
            CaseId::A => 'a',
            CaseId::B => 'b',
            CaseId::C => 'c',
            CaseId::D => 'd',
            CaseId::E => 'e',
            CaseId::F => 'f',
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for CaseId {
    type Err = ScmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(CaseId::A),
            "b" => Ok(CaseId::B),
            "c" => Ok(CaseId::C),
            "d" => Ok(CaseId::D),
            "e" => Ok(CaseId::E),
            "f" => Ok(CaseId::F),
            other => Err(ScmError::UnknownCase(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Linear,
    Square,
}

impl Nonlinearity {
    pub fn phi(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Linear => z,
            Nonlinearity::Square => z * z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockDims {
    pub med: usize,
    pub leaf: usize,
    pub proxy: usize,
}

impl Default for BlockDims {
    fn default() -> Self {
        BlockDims { med: 3, leaf: 2, proxy: 2 }
    }
}

impl BlockDims {
    pub fn total(&self) -> usize {
        self.med + self.leaf + self.proxy
    }
}

/// Multipliers on the hypersphere radius of each surrogate block's `W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleOverrides {
    pub med: f64,
    pub leaf: f64,
    pub proxy: f64,
}

impl Default for ScaleOverrides {
    fn default() -> Self {
        ScaleOverrides { med: 1.0, leaf: 1.0, proxy: 1.0 }
    }
}

fn default_x_dim() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub case_id: CaseId,
    #[serde(default = "default_x_dim")]
    pub x_dim: usize,
    #[serde(default)]
    pub dims: BlockDims,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub unobserved_confounder: bool,
    #[serde(default)]
    pub scale_overrides: ScaleOverrides,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(case_id: CaseId, nonlinearity: Nonlinearity) -> Self {
        ScenarioSpec {
            case_id,
            x_dim: 2,
            dims: BlockDims::default(),
            nonlinearity,
            unobserved_confounder: false,
            scale_overrides: ScaleOverrides::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ScmError> {
        if self.x_dim < 2 {
            return Err(ScmError::InvalidSpec(format!("x_dim must be at least 2, got {}", self.x_dim)));
        }
        if self.dims.total() == 0 {
            return Err(ScmError::InvalidSpec("no surrogate dimensions".into()));
        }
        let s = self.scale_overrides;
        if ![s.med, s.leaf, s.proxy].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(ScmError::InvalidSpec("scale overrides must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Short identifier such as `d-square-u-med2`.
    pub fn label(&self) -> String {
        let mut out = format!(
            "{}-{}",
            self.case_id,
            match self.nonlinearity {
                Nonlinearity::Linear => "linear",
                Nonlinearity::Square => "square",
            }
        );
        if self.unobserved_confounder {
            out.push_str("-u");
        }
        let s = self.scale_overrides;
        for (name, v) in [("med", s.med), ("leaf", s.leaf), ("proxy", s.proxy)] {
            if v != 1.0 {
                out.push_str(&format!("-{name}{v}"));
            }
        }
        if self.x_dim != 2 {
            out.push_str(&format!("-k{}", self.x_dim));
        }
        out
    }

    /// Column names for the generated surrogate matrix.
    pub fn surrogate_names(&self) -> Vec<String> {
        [("med", self.dims.med), ("leaf", self.dims.leaf), ("proxy", self.dims.proxy)]
            .iter()
            .flat_map(|&(prefix, d)| (0..d).map(move |j| format!("{prefix}{j}")))
            .collect()
    }
}

impl FromStr for ScenarioSpec {
    type Err = ScmError;

    /// Inverse of [`ScenarioSpec::label`]: `d`, `d-square`, `c-linear-u-med2-k3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split('-');
        let case_id: CaseId = parts.next().unwrap_or_default().parse()?;
        let mut spec = ScenarioSpec::new(case_id, Nonlinearity::Linear);
        let bad = |part: &str| ScmError::InvalidSpec(format!("unrecognized scenario component `{part}` in `{s}`"));
        for part in parts {
            let number = |prefix: &str| part.strip_prefix(prefix).and_then(|v| v.parse::<f64>().ok());
            match part {
                "linear" => spec.nonlinearity = Nonlinearity::Linear,
                "square" => spec.nonlinearity = Nonlinearity::Square,
                "u" => spec.unobserved_confounder = true,
                _ if number("med").is_some() => spec.scale_overrides.med = number("med").unwrap(),
                _ if number("leaf").is_some() => spec.scale_overrides.leaf = number("leaf").unwrap(),
                _ if number("proxy").is_some() => spec.scale_overrides.proxy = number("proxy").unwrap(),
                _ => spec.x_dim = part.strip_prefix('k').and_then(|v| v.parse().ok()).ok_or_else(|| bad(part))?,
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteFamily {
    /// Linear and square outcome maps.
    Composite,
    /// Linear outcome maps only.
    Linear,
}

/// The ten sub-scenarios of one case.
///
/// Composite: `{linear, square} × {base, confounded, med×2, proxy×2, med×0.5}`.
/// Linear: `{unconfounded, confounded} × {base, med×2, med×0.5, proxy×2, proxy×0.5}`.
pub fn sub_scenarios(family: SuiteFamily, case_id: CaseId) -> Vec<ScenarioSpec> {
    let scaled = |med: f64, proxy: f64| ScaleOverrides { med, leaf: 1.0, proxy };
    let mut out = Vec::with_capacity(10);
    match family {
        SuiteFamily::Composite => {
            for nl in [Nonlinearity::Linear, Nonlinearity::Square] {
                let variants = [
                    (false, scaled(1.0, 1.0)),
                    (true, scaled(1.0, 1.0)),
                    (false, scaled(2.0, 1.0)),
                    (false, scaled(1.0, 2.0)),
                    (false, scaled(0.5, 1.0)),
                ];
                for (u, scale) in variants {
                    let mut spec = ScenarioSpec::new(case_id, nl);
                    spec.unobserved_confounder = u;
                    spec.scale_overrides = scale;
                    out.push(spec);
                }
            }
        }
        SuiteFamily::Linear => {
            for u in [false, true] {
                for scale in [scaled(1.0, 1.0), scaled(2.0, 1.0), scaled(0.5, 1.0), scaled(1.0, 2.0), scaled(1.0, 0.5)] {
                    let mut spec = ScenarioSpec::new(case_id, Nonlinearity::Linear);
                    spec.unobserved_confounder = u;
                    spec.scale_overrides = scale;
                    out.push(spec);
                }
            }
        }
    }
    out
}

/// Every sub-scenario of every case, crossed with `seeds` (seed varies fastest).
pub fn scenario_suite(family: SuiteFamily, seeds: &[u64]) -> Vec<ScenarioSpec> {
    CaseId::ALL
        .iter()
        .flat_map(|&case| sub_scenarios(family, case))
        .flat_map(|spec| seeds.iter().map(move |&seed| spec.clone().with_seed(seed)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_has_sixty_configurations() {
        assert_eq!(scenario_suite(SuiteFamily::Composite, &[0]).len(), 60);
        assert_eq!(scenario_suite(SuiteFamily::Composite, &[0, 1, 2]).len(), 180);
    }

    #[test]
    fn linear_family_is_linear() {
        assert!(scenario_suite(SuiteFamily::Linear, &[1, 2]).iter().all(|s| s.nonlinearity == Nonlinearity::Linear));
    }

    #[test]
    fn suite_is_deterministic_and_labels_unique() {
        let a = scenario_suite(SuiteFamily::Composite, &[3]);
        assert_eq!(a, scenario_suite(SuiteFamily::Composite, &[3]));
        let labels: std::collections::HashSet<_> = a.iter().map(|s| s.label()).collect();
        assert_eq!(labels.len(), 60);
    }

    #[test]
    fn labels_parse_back() {
        for spec in scenario_suite(SuiteFamily::Composite, &[0]).into_iter().chain(scenario_suite(SuiteFamily::Linear, &[0])) {
            assert_eq!(spec.label().parse::<ScenarioSpec>().unwrap(), spec);
        }
        let mut wide = ScenarioSpec::new(CaseId::E, Nonlinearity::Square);
        wide.x_dim = 5;
        assert_eq!(wide.label().parse::<ScenarioSpec>().unwrap(), wide);
        assert!("d-cubic".parse::<ScenarioSpec>().is_err());
        assert!("d-k1".parse::<ScenarioSpec>().is_err());
    }

    #[test]
    fn case_parses() {
        assert_eq!("D".parse::<CaseId>().unwrap(), CaseId::D);
        assert!("g".parse::<CaseId>().is_err());
    }
}
