//! External data through a role map: write an IHDP-shaped CSV with a
//! planted effect, then split it and score every learner against that effect.
//!
//!     cargo run --release --example ihdp_external

use plugin_surrogates::data::make_rng;
use plugin_surrogates::experiment::{ihdp_role_map, run_experiment, write_ihdp_like_csv, ExperimentConfig, IHDP_PLANTED_ATE};
use plugin_surrogates::MethodId;
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("ihdp_like.csv");
    write_ihdp_like_csv(985, 0.05, make_rng(7, 1), std::fs::File::create(&path)?)?;

    let cfg = ExperimentConfig::from_json(
        &json!({
            "scenario": {"kind": "external", "path": path, "role_map": ihdp_role_map(), "reference_ate": IHDP_PLANTED_ATE},
            "methods": MethodId::ALL.map(|m| m.as_str()),
            "seeds": [0, 1, 2],
            "bootstrap": {"replicates": 100},
        })
        .to_string(),
    )?;
    let out = run_experiment(&cfg)?;
    println!("planted ATE {IHDP_PLANTED_ATE}");
    for m in MethodId::ALL {
        for r in out.table.rows.iter().filter(|r| r.method == m) {
            match (r.ate_hat, r.ci_lo, r.ci_hi) {
                (Some(a), Some(lo), Some(hi)) => println!("{:<24} seed {}: {a:6.2}  [{lo:6.2}, {hi:6.2}]", m.as_str(), r.seed),
                _ => println!("{:<24} seed {}: {}", m.as_str(), r.seed, r.error.as_deref().unwrap_or("no estimate")),
            }
        }
    }
    Ok(())
}
