//! A config-driven sweep with per-method summaries and result files.
//!
//!     cargo run --release --example experiment_sweep -- configs/case_d_linear.json
//!
//! Without an argument a small built-in config is used. Files go to
//! `$SURROGATES_OUT_DIR` (or `results/`).

use plugin_surrogates::experiment::{emit_results, resolve_out_dir, run_experiment, ExperimentConfig};
use plugin_surrogates::MethodId;

const BUILT_IN: &str = r#"{
    "name": "sweep-demo",
    "scenario": {"kind": "synthetic", "case_id": "c", "nonlinearity": "square"},
    "methods": ["surrogate_sampling_lin", "bound_reg_lin", "outcome_reg_lin", "outcome_reg_tree", "surrogate_index_lin"],
    "n_obs": 4000,
    "n_trial": 4000,
    "seeds": [0, 1, 2],
    "bootstrap": {"replicates": 100}
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::from_path(path.as_ref())?,
        None => ExperimentConfig::from_json(BUILT_IN)?,
    };
    let out = run_experiment(&cfg)?;

    println!("{:<24} {:>8} {:>8} {:>8}", "method", "MAE", "R2", "rows ok");
    for m in MethodId::ALL {
        let ok = out.table.ok_rows(m).count();
        if ok == 0 && !out.table.rows.iter().any(|r| r.method == m) {
            continue;
        }
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{:<24} {:>8} {:>8} {:>8}", m.as_str(), fmt(out.table.mean_of(m, |r| r.mae)), fmt(out.table.mean_of(m, |r| r.r2)), ok);
    }

    let dir = resolve_out_dir(None, Some(&cfg));
    for path in emit_results(&out, &dir, &cfg.output.formats, cfg.output.plots)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
