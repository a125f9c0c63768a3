//! The JSON experiment document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ingest::RoleMap;
use super::ExperimentError;
use crate::data::{DensityRatio, Population};
use crate::eval::{DEFAULT_LEVEL, DEFAULT_REPLICATES};
use crate::scm::{CaseId, ScenarioSpec, SuiteFamily};
use crate::surrogates::{MethodId, MethodOptions};

/// Fraction of an external cohort used for training.
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.7;
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SURROGATES_OUT_DIR";

fn default_n_obs() -> usize {
    10_000
}

fn default_true() -> bool {
    true
}

/// One experiment: which data, which learners, which seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub scenario: ScenarioBlock,
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    /// Defaults to `n_obs`.
    #[serde(default)]
    pub n_trial: Option<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Trial-over-observational covariate density ratio; identity by default.
    #[serde(default)]
    pub density_ratio: DensityRatio,
}

/// Where the cohorts come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioBlock {
    Synthetic(ScenarioSpec),
    /// The ten sub-scenarios of each listed case.
    Suite {
        family: SuiteFamily,
        #[serde(default = "all_cases")]
        cases: Vec<CaseId>,
    },
    /// One-covariate model where outcome regression is biased.
    Counterexample {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    External(ExternalData),
}

fn all_cases() -> Vec<CaseId> {
    CaseId::ALL.to_vec()
}

fn default_gamma() -> f64 {
    5.0
}

/// A user-supplied cohort, split into a training and an evaluation part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalData {
    pub path: PathBuf,
    /// Column roles; without one the headers must carry `x_`/`s_` prefixes.
    #[serde(default)]
    pub role_map: Option<RoleMapSource>,
    #[serde(default = "default_fraction")]
    pub split_fraction: f64,
    /// Fixed split seed. Without one each run seed also reseeds the split.
    #[serde(default)]
    pub split_seed: Option<u64>,
    #[serde(default = "experimental")]
    pub population: Population,
    /// ATE to score against; defaults to the difference in mean outcomes on
    /// the evaluation part.
    #[serde(default)]
    pub reference_ate: Option<f64>,
}

fn default_fraction() -> f64 {
    DEFAULT_SPLIT_FRACTION
}

fn experimental() -> Population {
    Population::Experimental
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoleMapSource {
    Path(PathBuf),
    Inline(RoleMap),
}

/// A learner and its options. A bare string is accepted for the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodEntry {
    Id(MethodId),
    Full {
        id: MethodId,
        #[serde(default)]
        options: MethodOptions,
    },
}

impl MethodEntry {
    pub fn id(&self) -> MethodId {
        match self {
            MethodEntry::Id(id) | MethodEntry::Full { id, .. } => *id,
        }
    }

    pub fn options(&self) -> MethodOptions {
        match self {
            MethodEntry::Id(_) => MethodOptions::default(),
            MethodEntry::Full { options, .. } => options.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    /// Replicates; 0 disables the bootstrap.
    #[serde(alias = "B")]
    pub replicates: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { replicates: DEFAULT_REPLICATES, level: DEFAULT_LEVEL }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(ExperimentError::Config(format!("unknown output format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
    /// Write a τ̂(x) against τ(x) scatter per method (synthetic data only).
    #[serde(default = "default_true")]
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, formats: vec![OutputFormat::Csv, OutputFormat::Json], plots: true }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative data paths are resolved
    /// against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let ScenarioBlock::External(ext) = &mut self.scenario {
            if ext.path.is_relative() {
                ext.path = base.join(&ext.path);
            }
            if let Some(RoleMapSource::Path(p)) = &mut ext.role_map {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn n_trial(&self) -> usize {
        self.n_trial.unwrap_or(self.n_obs)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.seeds.is_empty() {
            return bad("`seeds` must not be empty".into());
        }
        if self.n_obs == 0 || self.n_trial() == 0 {
            return bad("`n_obs` and `n_trial` must be positive".into());
        }
        let b = self.bootstrap;
        if b.replicates == 1 || !(b.level > 0.0 && b.level < 1.0) {
            return bad("bootstrap needs `replicates` = 0 or >= 2 and `level` in (0, 1)".into());
        }
        for m in &self.methods {
            m.options().validate().map_err(|e| ExperimentError::Config(format!("{}: {e}", m.id())))?;
        }
        match &self.scenario {
            ScenarioBlock::Synthetic(spec) => spec.validate().map_err(|e| ExperimentError::Config(e.to_string()))?,
            ScenarioBlock::Suite { cases, .. } if cases.is_empty() => return bad("suite needs at least one case".into()),
            ScenarioBlock::Counterexample { gamma } if !gamma.is_finite() => return bad("gamma must be finite".into()),
            ScenarioBlock::External(ext) => {
                let f = ext.split_fraction;
                if !(f > 0.0 && f < 1.0) {
                    return bad(format!("split_fraction must be in (0, 1), got {f}"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"scenario": {"kind": "synthetic", "case_id": "c"}, "seeds": [1]}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.n_trial(), 10_000);
        assert_eq!(cfg.bootstrap.replicates, 2000);
        assert_eq!(cfg.output.formats, vec![OutputFormat::Csv, OutputFormat::Json]);
        assert!(cfg.methods.is_empty());
    }

    #[test]
    fn methods_accept_both_forms() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": {"kind": "counterexample"}, "seeds": [0],
                "methods": ["outcome_reg_lin", {"id": "bound_reg_lin", "options": {"lambda": 0.1, "clip": [0.2, 0.8]}}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.methods[0].id(), MethodId::OutcomeRegLin);
        assert_eq!(cfg.methods[1].options().lambda, Some(0.1));
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            r#"{"scenario": {"kind": "synthetic", "case_id": "c"}, "seeds": []}"#,
            r#"{"scenario": {"kind": "synthetic", "case_id": "c"}, "seeds": [1], "methods": ["magic"]}"#,
            r#"{"scenario": {"kind": "external", "path": "a.csv", "split_fraction": 1.0}, "seeds": [1]}"#,
            r#"{"scenario": {"kind": "synthetic", "case_id": "c"}, "seeds": [1], "typo": 3}"#,
            r#"{"scenario": {"kind": "synthetic", "case_id": "c"}, "seeds": [1], "methods": [{"id": "bound_reg_lin", "options": {"clip": [0.7, 0.3]}}]}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(ExperimentError::Config(_))), "{text}");
        }
    }
}
