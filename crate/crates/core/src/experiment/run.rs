//! The sweep over (scenario, seed, method) cells.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodEntry, RoleMapSource, ScenarioBlock};
use super::ingest::{load_cohort_csv, stratified_split, RoleMap, SplitError};
use super::ExperimentError;
use crate::data::{make_rng, Cohort, DataError, ScenarioTruth};
use crate::eval::{
    ate_diff_in_means, bootstrap_ate, cate_t_learner, endpoint_potential_outcomes, pehe, r_squared, surrogate_ate, EvalError,
};
use crate::scm::{confounded_counterexample, generate_cohort, sample_scenario_params, sub_scenarios, Regime, ScenarioSpec, ScmError};
use crate::surrogates::{fit_method, MethodId, MethodOptions, NuisanceCache, SurrogateError, TrainingData, DEFAULT_CLIP, DEFAULT_DRAWS};

const STREAM_PARAMS: u64 = 0;
const STREAM_OBS: u64 = 1;
const STREAM_TRIAL: u64 = 2;
const STREAM_LEARN: u64 = 3;
const STREAM_SPLIT: u64 = 5;
const STREAM_BOOT: u64 = 0x400;

/// Most points kept per scatter plot.
pub const PLOT_POINTS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Error,
}

/// One (scenario, seed, method) result. Metrics a cell cannot produce are
/// empty; error rows carry the error identifier and message instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub seed: u64,
    pub method: MethodId,
    pub status: RowStatus,
    pub error: Option<String>,
    pub ate_hat: Option<f64>,
    pub ate_true: Option<f64>,
    pub mae: Option<f64>,
    /// CATE metrics of the linear T-learner on the endpoint values.
    pub r2: Option<f64>,
    pub pehe: Option<f64>,
    /// CATE metrics of the potential-outcome contrast.
    pub r2_po: Option<f64>,
    pub pehe_po: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub se: Option<f64>,
    pub lambda: Option<f64>,
    pub clip_lo: Option<f64>,
    pub clip_hi: Option<f64>,
    pub draws: Option<usize>,
    pub message: Option<String>,
}

impl ResultRow {
    fn blank(scenario: &str, seed: u64, method: MethodId, options: &MethodOptions) -> Self {
        let bound = matches!(method, MethodId::BoundRegLin | MethodId::BoundRegTree | MethodId::BoundRegBintree);
        let linear = matches!(
            method,
            MethodId::OutcomeRegLin | MethodId::RegSelRegLin | MethodId::BoundRegLin | MethodId::SurrogateSamplingLin
        );
        let clip = bound.then(|| options.clip.unwrap_or(DEFAULT_CLIP));
        ResultRow {
            scenario: scenario.to_owned(),
            seed,
            method,
            status: RowStatus::Ok,
            error: None,
            ate_hat: None,
            ate_true: None,
            mae: None,
            r2: None,
            pehe: None,
            r2_po: None,
            pehe_po: None,
            ci_lo: None,
            ci_hi: None,
            se: None,
            lambda: linear.then(|| options.lambda_for(method)),
            clip_lo: clip.map(|c| c.0),
            clip_hi: clip.map(|c| c.1),
            draws: (method == MethodId::SurrogateSamplingLin).then(|| options.draws.unwrap_or(DEFAULT_DRAWS)),
            message: None,
        }
    }

    fn failed(mut self, err: &CellError) -> Self {
        self.status = RowStatus::Error;
        self.error = Some(err.id());
        self.message = Some(err.to_string());
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    /// Rows of `method` that completed.
    pub fn ok_rows(&self, method: MethodId) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.method == method && r.is_ok())
    }

    /// Mean of `metric` over the completed rows of `method`.
    pub fn mean_of(&self, method: MethodId, metric: impl Fn(&ResultRow) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.ok_rows(method).filter_map(metric).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// `τ̂(x)` against `τ(x)` for one method on the first seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub scenario: String,
    pub method: MethodId,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub scenario: String,
    pub seed: u64,
    pub method: MethodId,
    pub runtime_ms: f64,
}

/// Everything a run produces. Only `timings` varies between reruns.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub table: ResultsTable,
    pub timings: Vec<Timing>,
    pub plots: Vec<PlotSeries>,
}

/// Why a cell failed.
#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("learner panicked: {0}")]
    Panic(String),
}

impl CellError {
    /// Name of the innermost error variant, e.g. `AllZeroWeights`.
    pub fn id(&self) -> String {
        // Walk the Debug form through the wrapping variants.
        const WRAPPERS: [&str; 7] = ["Scm", "Split", "Data", "Surrogate", "Eval", "Model", "Panic"];
        let text = format!("{self:?}");
        let mut rest = text.as_str();
        loop {
            let end = rest.find(|c: char| !c.is_alphanumeric() && c != '_').unwrap_or(rest.len());
            let name = &rest[..end];
            let wraps = WRAPPERS.contains(&name) && rest[end..].starts_with('(');
            if !wraps || name == "Panic" {
                return name.to_owned();
            }
            rest = &rest[end + 1..];
        }
    }
}

/// One data-generating unit of the sweep.
enum Source {
    Synthetic(ScenarioSpec),
    Counterexample(f64),
    External { label: String, cohort: Cohort, fraction: f64, split_seed: Option<u64>, reference_ate: Option<f64> },
}

impl Source {
    fn label(&self) -> String {
        match self {
            Source::Synthetic(spec) => spec.label(),
            Source::Counterexample(g) => format!("counterexample-g{g}"),
            Source::External { label, .. } => label.clone(),
        }
    }
}

/// Cohorts of one (scenario, seed) unit.
struct CellData {
    obs: Cohort,
    trial: Cohort,
    truth: Option<ScenarioTruth>,
    reference_ate: f64,
}

fn sources(cfg: &ExperimentConfig) -> Result<Vec<Source>, ExperimentError> {
    Ok(match &cfg.scenario {
        ScenarioBlock::Synthetic(spec) => vec![Source::Synthetic(spec.clone())],
        ScenarioBlock::Suite { family, cases } => {
            cases.iter().flat_map(|&c| sub_scenarios(*family, c)).map(Source::Synthetic).collect()
        }
        ScenarioBlock::Counterexample { gamma } => vec![Source::Counterexample(*gamma)],
        ScenarioBlock::External(ext) => {
            let roles = match &ext.role_map {
                None => None,
                Some(RoleMapSource::Inline(r)) => Some(r.clone()),
                Some(RoleMapSource::Path(p)) => Some(RoleMap::from_path(p)?),
            };
            let cohort = load_cohort_csv(&ext.path, roles.as_ref(), ext.population)?;
            let label = ext.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "external".into());
            vec![Source::External {
                label,
                cohort,
                fraction: ext.split_fraction,
                split_seed: ext.split_seed,
                reference_ate: ext.reference_ate,
            }]
        }
    })
}

fn prepare(source: &Source, seed: u64, n_obs: usize, n_trial: usize) -> Result<CellData, CellError> {
    match source {
        Source::Synthetic(spec) => {
            let params = sample_scenario_params(&spec.clone().with_seed(seed), make_rng(seed, STREAM_PARAMS))?;
            let (obs, _) = generate_cohort(&params, n_obs, Regime::Observational, make_rng(seed, STREAM_OBS))?;
            let (trial, truth) = generate_cohort(&params, n_trial, Regime::Trial, make_rng(seed, STREAM_TRIAL))?;
            let reference_ate = truth.population_ate.unwrap_or(truth.ate);
            Ok(CellData { obs, trial, truth: Some(truth), reference_ate })
        }
        Source::Counterexample(gamma) => {
            let (obs, _) = confounded_counterexample(n_obs, *gamma, make_rng(seed, STREAM_OBS))?;
            let (trial, truth) = confounded_counterexample(n_trial, *gamma, make_rng(seed, STREAM_TRIAL))?;
            let trial = trial.with_population(crate::data::Population::Experimental);
            let reference_ate = truth.population_ate.unwrap_or(truth.ate);
            Ok(CellData { obs, trial, truth: Some(truth), reference_ate })
        }
        Source::External { cohort, fraction, split_seed, reference_ate, .. } => {
            let split = make_rng(split_seed.unwrap_or(seed), STREAM_SPLIT);
            let (obs, trial) = stratified_split(cohort, *fraction, split)?;
            let reference_ate = match reference_ate {
                Some(a) => *a,
                None => ate_diff_in_means(trial.outcome()?, trial.treatment()?)?,
            };
            Ok(CellData { obs, trial, truth: None, reference_ate })
        }
    }
}

struct Settings<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    keep_plot: bool,
}

fn run_method(
    entry: &MethodEntry,
    data: &CellData,
    cache: &mut NuisanceCache,
    set: &Settings<'_>,
    row: &mut ResultRow,
) -> Result<Option<(Array1<f64>, Array1<f64>)>, CellError> {
    let method = entry.id();
    let training = TrainingData { treatment: &data.obs, outcome: &data.obs, ratio: &set.cfg.density_ratio };
    let endpoint = fit_method(method, &entry.options(), &training, cache, make_rng(set.seed, STREAM_LEARN))?;
    let trial = &data.trial;
    let t = trial.treatment()?;
    let values = endpoint.evaluate(trial)?;
    let ate_hat = match endpoint.plugin() {
        Some(f) => surrogate_ate(f, trial.s.view(), t)?,
        None => ate_diff_in_means(values.view(), t)?,
    };
    row.ate_hat = Some(ate_hat);
    row.ate_true = Some(data.reference_ate);
    row.mae = Some((ate_hat - data.reference_ate).abs());

    let mut plot = None;
    if let Some(truth) = &data.truth {
        let reg = cate_t_learner(trial.x.view(), t, values.view(), trial.x.view())?;
        row.r2 = r_squared(truth.cate.view(), reg.view());
        row.pehe = Some(pehe(truth.cate.view(), reg.view()));
        let po = endpoint_potential_outcomes(&endpoint, trial.x.view(), truth.s1.view(), truth.s0.view())?;
        row.r2_po = r_squared(truth.cate.view(), po.view());
        row.pehe_po = Some(pehe(truth.cate.view(), po.view()));
        if set.keep_plot {
            let m = po.len().min(PLOT_POINTS);
            plot = Some((truth.cate.slice(ndarray::s![..m]).to_owned(), po.slice(ndarray::s![..m]).to_owned()));
        }
    }

    let b = set.cfg.bootstrap;
    if b.replicates > 0 {
        let boot = make_rng(set.seed, STREAM_BOOT + method as u64);
        let summary = bootstrap_ate(values.view(), t, b.replicates, b.level, boot)?;
        row.ci_lo = Some(summary.lo);
        row.ci_hi = Some(summary.hi);
        row.se = Some(summary.se);
    }
    Ok(plot)
}

struct UnitResult {
    rows: Vec<ResultRow>,
    timings: Vec<Timing>,
    plots: Vec<PlotSeries>,
}

fn run_unit(source: &Source, seed: u64, cfg: &ExperimentConfig) -> UnitResult {
    let label = source.label();
    let mut out = UnitResult { rows: Vec::new(), timings: Vec::new(), plots: Vec::new() };
    let blank = |m: &MethodEntry| ResultRow::blank(&label, seed, m.id(), &m.options());
    let data = match prepare(source, seed, cfg.n_obs, cfg.n_trial()) {
        Ok(d) => d,
        Err(e) => {
            out.rows = cfg.methods.iter().map(|m| blank(m).failed(&e)).collect();
            return out;
        }
    };
    let set = Settings { cfg, seed, keep_plot: cfg.output.plots && seed == cfg.seeds[0] };
    let mut cache = NuisanceCache::default();
    for entry in &cfg.methods {
        let mut row = blank(entry);
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| run_method(entry, &data, &mut cache, &set, &mut row)))
            .unwrap_or_else(|p| {
                let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
                Err(CellError::Panic(msg.unwrap_or_default()))
            });
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok(Some((truth, estimate))) => out.plots.push(PlotSeries {
                scenario: label.clone(),
                method: entry.id(),
                truth: truth.to_vec(),
                estimate: estimate.to_vec(),
            }),
            Ok(None) => {}
            Err(e) => {
                log::warn!("{label} seed {seed} {}: {e}", entry.id());
                // A panic may leave the cache half-filled; start afresh.
                if matches!(e, CellError::Panic(_)) {
                    cache = NuisanceCache::default();
                }
                row = blank(entry).failed(&e);
            }
        }
        out.timings.push(Timing { scenario: label.clone(), seed, method: entry.id(), runtime_ms });
        out.rows.push(row);
    }
    out
}

/// Runs every (scenario, seed, method) cell. Cell failures become error
/// rows; only an unusable config or unreadable input data is an error.
///
/// Units of (scenario, seed) run in parallel; the methods of one unit run in
/// order and share their nuisance fits.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let sources = sources(cfg)?;
    let units: Vec<(usize, u64)> = (0..sources.len()).flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s))).collect();
    let results: Vec<UnitResult> = units.par_iter().map(|&(i, seed)| run_unit(&sources[i], seed, cfg)).collect();
    let mut out = ExperimentOutput { config: cfg.clone(), table: ResultsTable::default(), timings: Vec::new(), plots: Vec::new() };
    for r in results {
        out.table.rows.extend(r.rows);
        out.timings.extend(r.timings);
        out.plots.extend(r.plots);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(methods: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{"scenario": {{"kind": "synthetic", "case_id": "c"}}, "seeds": [1, 2], "n_obs": 600,
                "bootstrap": {{"replicates": 50}}, "methods": [{methods}] {extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn error_ids_name_innermost_variant() {
        let e = CellError::Surrogate(SurrogateError::AllZeroWeights);
        assert_eq!(e.id(), "AllZeroWeights");
        let e = CellError::Eval(EvalError::SingleArmData { arm: 0, needed: 1, found: 0 });
        assert_eq!(e.id(), "SingleArmData");
        let e = CellError::Surrogate(SurrogateError::Model(crate::models::ModelError::Separation));
        assert_eq!(e.id(), "Separation");
        assert_eq!(CellError::Panic("boom".into()).id(), "Panic");
    }

    #[test]
    fn zero_methods_give_empty_table() {
        let out = run_experiment(&config("", "")).unwrap();
        assert!(out.table.rows.is_empty());
    }

    #[test]
    fn failing_method_is_isolated() {
        let good = r#""outcome_reg_lin""#;
        let bad = r#"{"id": "bound_reg_lin", "options": {"scheme": "wminus"}}"#;
        let out = run_experiment(&config(&format!("{good}, {bad}, {good}"), "")).unwrap();
        assert_eq!(out.table.rows.len(), 6);
        let alone = run_experiment(&config(good, "")).unwrap();
        for (i, row) in out.table.rows.iter().enumerate() {
            if i % 3 == 1 {
                assert_eq!(row.error.as_deref(), Some("InvalidOption"));
                assert!(row.ate_hat.is_none());
            } else {
                assert_eq!(row, &alone.table.rows[i / 3]);
            }
        }
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = config(r#""outcome_reg_lin", "bound_reg_lin""#, "");
        assert_eq!(run_experiment(&cfg).unwrap().table, run_experiment(&cfg).unwrap().table);
    }

    #[test]
    fn echoes_only_relevant_options() {
        let out = run_experiment(&config(r#""outcome_reg_tree", "bound_reg_lin""#, "")).unwrap();
        let tree = &out.table.rows[0];
        assert!(tree.lambda.is_none() && tree.clip_lo.is_none() && tree.draws.is_none());
        let bound = &out.table.rows[1];
        assert_eq!((bound.lambda, bound.clip_lo, bound.clip_hi), (Some(0.01), Some(0.3), Some(0.7)));
    }
}
