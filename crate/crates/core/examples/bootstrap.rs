//! Trial-side evaluation: difference in means of a surrogate, a percentile
//! bootstrap interval and CATE metrics against simulated truth.
//!
//!     cargo run --release --example bootstrap

use ndarray::Array1;
use plugin_surrogates::data::make_rng;
use plugin_surrogates::eval::{ate_diff_in_means, bootstrap_ate, cate_t_learner, pehe, r_squared};
use plugin_surrogates::scm::{generate_cohort, sample_scenario_params, Regime, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec: ScenarioSpec = "a-linear".parse()?;
    let params = sample_scenario_params(&spec, make_rng(0, 0))?;
    let (trial, truth) = generate_cohort(&params, 2_000, Regime::Trial, make_rng(0, 2))?;
    let t = trial.treatment()?;

    // An unweighted sum of the surrogates stands in for a learned endpoint.
    let f: Array1<f64> = trial.s.rows().into_iter().map(|r| r.sum()).collect();
    let ate = ate_diff_in_means(f.view(), t)?;
    let boot = bootstrap_ate(f.view(), t, 1_000, 0.95, make_rng(0, 0x400))?;
    println!("ATE of sum(S): {ate:.3}, 95% interval [{:.3}, {:.3}], se {:.3}", boot.lo, boot.hi, boot.se);
    println!("outcome ATE:   {:.3}", ate_diff_in_means(trial.outcome()?, t)?);

    let cate = cate_t_learner(trial.x.view(), t, trial.outcome()?, trial.x.view())?;
    println!(
        "T-learner on Y: CATE R2 {:.3}, PEHE {:.3}",
        r_squared(truth.cate.view(), cate.view()).unwrap_or(f64::NAN),
        pehe(truth.cate.view(), cate.view())
    );
    Ok(())
}
