//! Bound regression under each weighting: regress `ĥ(x, s)` on `s` with
//! weights built from the propensity `ê(x)` and the score `ρ̂(x, s)`.
//!
//!     cargo run --release --example bound_regression

use plugin_surrogates::data::{make_rng, DensityRatio};
use plugin_surrogates::eval::surrogate_ate;
use plugin_surrogates::oracle::WeightKind;
use plugin_surrogates::scm::{generate_cohort, sample_scenario_params, Regime, ScenarioSpec};
use plugin_surrogates::surrogates::{fit_method, MethodOptions, NuisanceCache, TrainingData};
use plugin_surrogates::MethodId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 1;
    let spec: ScenarioSpec = "d-linear".parse()?;
    let params = sample_scenario_params(&spec.with_seed(seed), make_rng(seed, 0))?;
    let (obs, _) = generate_cohort(&params, 10_000, Regime::Observational, make_rng(seed, 1))?;
    let (trial, truth) = generate_cohort(&params, 10_000, Regime::Trial, make_rng(seed, 2))?;
    let data = TrainingData { treatment: &obs, outcome: &obs, ratio: &DensityRatio::Identity };
    // The cache shares ĥ, ê and ρ̂ across the fits below.
    let mut cache = NuisanceCache::default();
    println!("true trial ATE {:.3}", truth.ate);

    for (method, kind, clip) in [
        (MethodId::BoundRegLin, WeightKind::W2, (0.3, 0.7)),
        (MethodId::BoundRegLin, WeightKind::W2, (0.05, 0.95)),
        (MethodId::BoundRegLin, WeightKind::Wplus, (0.3, 0.7)),
        (MethodId::BoundRegLin, WeightKind::Uniform, (0.3, 0.7)),
        (MethodId::BoundRegTree, WeightKind::W2, (0.3, 0.7)),
        (MethodId::BoundRegBintree, WeightKind::W2, (0.3, 0.7)),
    ] {
        let options = MethodOptions { scheme: Some(kind), clip: Some(clip), ..Default::default() };
        let endpoint = fit_method(method, &options, &data, &mut cache, make_rng(seed, 3))?;
        let f = endpoint.plugin().expect("bound regression is a plug-in");
        let ate = surrogate_ate(f, trial.s.view(), trial.treatment()?)?;
        println!("{:<18} {kind:<8?} clip {clip:?}: ATE {ate:.3}, error {:+.3}", method.as_str(), ate - truth.ate);
    }
    Ok(())
}
