//! Config-driven sweeps: cohort ingestion, stratified splits, the
//! (scenario, seed, method) runner and result files.
//!
//! A run fits every configured learner on observational data and evaluates
//! the resulting endpoint on trial data. Synthetic scenarios generate both
//! cohorts (with ground truth); an external CSV is split 70/30 by treatment
//! arm instead. Per-cell failures become error rows, so a sweep always
//! completes.

mod check;
mod config;
mod emit;
mod ihdp;
mod ingest;
mod run;

use std::path::{Path, PathBuf};

pub use check::{oracle_check, CheckResult, OracleReport};
pub use config::{
    BootstrapConfig, ExperimentConfig, ExternalData, MethodEntry, OutputConfig, OutputFormat, RoleMapSource, ScenarioBlock,
    DEFAULT_SPLIT_FRACTION, OUT_DIR_ENV,
};
pub use emit::{emit_results, read_results_csv, scatter_svg, write_results_csv, write_results_json, CSV_COLUMNS, SCHEMA_VERSION};
pub use ihdp::{ihdp_role_map, ihdp_surrogates, write_ihdp_like_csv, IHDP_BASELINE, IHDP_OUTCOME, IHDP_PLANTED_ATE, IHDP_TREATMENT};
pub use ingest::{load_cohort_csv, read_cohort_with_roles, stratified_split, train_count, RoleMap, SplitError};
pub use run::{run_experiment, CellError, ExperimentOutput, PlotSeries, ResultRow, ResultsTable, RowStatus, Timing, PLOT_POINTS};

use crate::data::DataError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: DataError },
    #[error("malformed results file: {0}")]
    Format(String),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.to_owned(), source }
    }
}

/// Output directory: explicit choice, then the config, then
/// `$SURROGATES_OUT_DIR`, then `results`.
pub fn resolve_out_dir(explicit: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    explicit
        .map(Path::to_owned)
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}
