//! Shared data model: cohorts, potential-outcome truth, random streams and
//! the trial/observational density ratio.

mod cohort;
pub mod csv;
mod density;
mod rng;

pub use cohort::{binary_treatment, validate_cohort, Cohort, Population, ScenarioTruth};
pub(crate) use cohort::mean_contrast;
pub use density::{density_ratio, Comparison, Criterion, DensityRatio, Stratum};
pub use rng::{make_rng, RandomSource, StreamRng};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("column `{column}` has length {found}, expected {expected}")]
    ShapeMismatch { column: &'static str, expected: usize, found: usize },
    #[error("treatment value {value} at unit {index} is not in {{0,1}}")]
    NonBinaryTreatment { index: usize, value: f64 },
    #[error("cohort has no units")]
    EmptyCohort,
    #[error("cohort has no surrogate columns")]
    NoSurrogates,
    #[error("column `{0}` is required but absent")]
    MissingColumn(&'static str),
    #[error("covariate vector has length {found}, ratio is defined on dimension {expected}")]
    DomainMismatch { expected: usize, found: usize },
    #[error("no unit satisfies the inclusion criteria")]
    NoIncludedUnits,
    #[error("density ratio {0} is not a finite nonnegative number")]
    InvalidRatio(f64),
    #[error("no stratum for value {0}")]
    UnknownStratum(f64),
    #[error("row {row} (line {line}), column `{column}`: cannot parse `{value}` as a number")]
    Parse { row: usize, line: u64, column: String, value: String },
    #[error("row {row} (line {line}) is missing a value for `{column}`")]
    MissingCell { row: usize, line: u64, column: String },
    #[error("column `{0}` is only partially filled")]
    PartialColumn(&'static str),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(String),
}
