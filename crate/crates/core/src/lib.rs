//! Plug-in composite surrogate endpoints.
//!
//! A surrogate endpoint is a function `f(S)` of short-term, post-treatment
//! measurements that stands in for a long-term primary outcome `Y` when
//! estimating treatment effects in a trial. This crate learns such functions
//! from observational data by minimizing (an estimate of, or a bound on) the
//! squared error between the surrogate CATE and the outcome CATE.
//!
//! Layout:
//!
//! - [`data`]: role-tagged cohorts, deterministic random streams, density ratios.
//! - [`models`]: weighted linear/Lasso regression, logistic regression, CART,
//!   random forests and gradient boosting.
//! - [`scm`]: synthetic structural causal models with ground-truth potential outcomes.
//! - [`oracle`]: exact enumeration on discrete causal models, used to check the
//!   closed-form identities the learners rely on.
//! - [`surrogates`]: the learners (surrogate sampling, bound regression and baselines).
//! - [`eval`]: trial-side effect estimation, metrics and the percentile bootstrap.
//! - [`experiment`]: config-driven sweeps, CSV ingestion and result emission.

pub mod data;
pub mod eval;
pub mod experiment;
pub mod models;
pub mod oracle;
pub mod scm;
pub mod surrogates;

pub use data::{Cohort, DensityRatio, Population, RandomSource, ScenarioTruth};
pub use surrogates::{Endpoint, MethodId, SurrogateModel};

