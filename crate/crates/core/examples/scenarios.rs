//! Synthetic scenarios: draw a parameter set, then observational and trial
//! cohorts that share it. Each cohort comes with its potential outcomes.
//!
//!     cargo run --release --example scenarios -- d-linear-u 7

use plugin_surrogates::data::csv::write_cohort_csv;
use plugin_surrogates::data::make_rng;
use plugin_surrogates::scm::{generate_cohort, sample_scenario_params, sub_scenarios, CaseId, Regime, ScenarioSpec, SuiteFamily};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let spec: ScenarioSpec = args.next().as_deref().unwrap_or("d-linear").parse()?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let params = sample_scenario_params(&spec.clone().with_seed(seed), make_rng(seed, 0))?;
    let (obs, obs_truth) = generate_cohort(&params, 5_000, Regime::Observational, make_rng(seed, 1))?;
    let (trial, trial_truth) = generate_cohort(&params, 5_000, Regime::Trial, make_rng(seed, 2))?;
    let treated = |t: &[u8]| t.iter().filter(|&&v| v == 1).count() as f64 / t.len() as f64;

    println!("{} seed {seed}: k = {}, d = {}", spec.label(), params.k(), params.d());
    println!("observational: treated share {:.3}, sample ATE {:.3}", treated(obs.treatment()?), obs_truth.ate);
    println!("trial:         treated share {:.3}, sample ATE {:.3}", treated(trial.treatment()?), trial_truth.ate);

    println!("\nlinear suite, case d:");
    for sub in sub_scenarios(SuiteFamily::Linear, CaseId::D) {
        println!("  {}", sub.label());
    }

    println!("\nfirst rows of the trial cohort:");
    let mut buf = Vec::new();
    write_cohort_csv(&trial.subset(&[0, 1, 2]), &mut buf)?;
    print!("{}", String::from_utf8(buf)?);
    Ok(())
}
