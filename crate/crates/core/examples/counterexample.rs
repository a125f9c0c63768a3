//! Confounding between surrogate and outcome biases outcome regression even
//! with a million units; a pure-noise `U` drives both `S` and `Y`.
//!
//!     cargo run --release --example counterexample

use plugin_surrogates::data::{make_rng, DensityRatio};
use plugin_surrogates::eval::surrogate_ate;
use plugin_surrogates::scm::confounded_counterexample;
use plugin_surrogates::surrogates::{fit_method, MethodOptions, NuisanceCache, TrainingData};
use plugin_surrogates::MethodId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 1_000_000;
    for gamma in [0.0, 1.0, 5.0] {
        let (obs, _) = confounded_counterexample(n, gamma, make_rng(0, 1))?;
        let (trial, truth) = confounded_counterexample(n, gamma, make_rng(0, 2))?;
        let data = TrainingData { treatment: &obs, outcome: &obs, ratio: &DensityRatio::Identity };
        let endpoint = fit_method(MethodId::OutcomeRegLin, &MethodOptions::default(), &data, &mut NuisanceCache::default(), make_rng(0, 3))?;
        let f = endpoint.plugin().expect("outcome regression is a plug-in");
        let ate = surrogate_ate(f, trial.s.view(), trial.treatment()?)?;
        println!("gamma {gamma:>3}: outcome-regression ATE {ate:.3}, true ATE {:.3}", truth.population_ate.unwrap_or(truth.ate));
    }
    Ok(())
}
