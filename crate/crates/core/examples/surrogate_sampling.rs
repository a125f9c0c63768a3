//! Surrogate sampling end to end: fit nuisances on observational data,
//! learn a linear surrogate from sampled contrasts and score it on a trial.
//!
//!     cargo run --release --example surrogate_sampling

use plugin_surrogates::data::{make_rng, DensityRatio};
use plugin_surrogates::eval::{cate_potential_outcomes, r_squared, surrogate_ate};
use plugin_surrogates::scm::{generate_cohort, sample_scenario_params, Regime, ScenarioSpec};
use plugin_surrogates::surrogates::{fit_method, MethodOptions, NuisanceCache, Optimizer, TrainingData};
use plugin_surrogates::MethodId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 0;
    let spec: ScenarioSpec = "d-linear".parse()?;
    let params = sample_scenario_params(&spec.with_seed(seed), make_rng(seed, 0))?;
    let (obs, _) = generate_cohort(&params, 10_000, Regime::Observational, make_rng(seed, 1))?;
    let (trial, truth) = generate_cohort(&params, 10_000, Regime::Trial, make_rng(seed, 2))?;
    let data = TrainingData { treatment: &obs, outcome: &obs, ratio: &DensityRatio::Identity };
    let mut cache = NuisanceCache::default();

    for (label, optimizer) in [("closed form", Optimizer::ClosedForm), ("FISTA", Optimizer::fista())] {
        let options = MethodOptions { optimizer: Some(optimizer), draws: Some(10), ..Default::default() };
        let endpoint = fit_method(MethodId::SurrogateSamplingLin, &options, &data, &mut cache, make_rng(seed, 3))?;
        let f = endpoint.plugin().expect("surrogate sampling is a plug-in");
        let (beta, intercept) = f.linear_parts().expect("linear surrogate");
        let ate = surrogate_ate(f, trial.s.view(), trial.treatment()?)?;
        let cate = cate_potential_outcomes(f, truth.s1.view(), truth.s0.view())?;
        println!("{label}: intercept {intercept:.3}, coefficients {beta:.3}");
        println!("  ATE {ate:.3} (true {:.3}), CATE R2 {:.3}", truth.ate, r_squared(truth.cate.view(), cate.view()).unwrap_or(f64::NAN));
    }
    Ok(())
}
