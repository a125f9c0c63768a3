//! Command-line front end.
//!
//! Exit codes: 0 success (error rows included), 1 failed oracle check,
//! 2 config or input error, 3 I/O error.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use plugin_surrogates::data::csv::{write_cohort_csv, write_truth_csv};
use plugin_surrogates::data::make_rng;
use plugin_surrogates::experiment::{
    emit_results, oracle_check, resolve_out_dir, run_experiment, write_ihdp_like_csv, ExperimentConfig, ExperimentError, OutputFormat,
    IHDP_PLANTED_ATE,
};
use plugin_surrogates::scm::{confounded_counterexample, generate_cohort, sample_scenario_params, Regime, ScenarioSpec};

#[derive(Parser)]
#[command(name = "surrogates", version, about = "Learn and evaluate plug-in surrogate endpoints")]
struct Cli {
    /// Output directory (default: config `output.dir`, then $SURROGATES_OUT_DIR, then ./results).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Result formats, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<OutputFormat>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Write a synthetic cohort CSV and its potential-outcome sidecar.
    Generate {
        /// Scenario label such as `d-linear`, `c-square-u`, `counterexample`
        /// or `ihdp` (an IHDP-shaped file with a planted effect).
        scenario: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cohort file; the sidecar goes next to it as `<stem>.truth.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = RegimeArg::Observational)]
        regime: RegimeArg,
        /// Share of `ihdp` rows that lose one surrogate cell.
        #[arg(long, default_value_t = 0.05)]
        missing: f64,
    },
    /// Check the exact identities on random discrete models.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Observational,
    Trial,
}

enum Failure {
    Input(String),
    Io(String),
    Check,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli, config: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_path(config)?;
    let out = run_experiment(&cfg)?;
    let errors = out.table.rows.iter().filter(|r| !r.is_ok()).count();
    let dir = resolve_out_dir(cli.out_dir.as_deref(), Some(&cfg));
    let formats = cli.format.clone().unwrap_or_else(|| cfg.output.formats.clone());
    for path in emit_results(&out, &dir, &formats, cfg.output.plots)? {
        println!("wrote {}", path.display());
    }
    println!("{} rows, {errors} error rows", out.table.rows.len());
    Ok(())
}

struct GenerateArgs<'a> {
    scenario: &'a str,
    n: usize,
    seed: u64,
    out: Option<&'a Path>,
    regime: RegimeArg,
    missing: f64,
}

fn default_path(cli: &Cli, scenario: &str, seed: u64, out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => p.to_owned(),
        None => resolve_out_dir(cli.out_dir.as_deref(), None).join(format!("{scenario}-seed{seed}.csv")),
    }
}

fn generate_ihdp(cli: &Cli, args: &GenerateArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.missing) {
        return Err(Failure::Input(format!("--missing must be in [0, 1], got {}", args.missing)));
    }
    let path = default_path(cli, args.scenario, args.seed, args.out);
    write_ihdp_like_csv(args.n, args.missing, make_rng(args.seed, 1), create(&path)?).map_err(|e| Failure::Io(e.to_string()))?;
    println!("wrote {} (planted ATE {IHDP_PLANTED_ATE})", path.display());
    Ok(())
}

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<(), Failure> {
    let GenerateArgs { scenario, n, seed, out, regime, .. } = *args;
    if scenario == "ihdp" {
        return generate_ihdp(cli, args);
    }
    let regime = match regime {
        RegimeArg::Observational => Regime::Observational,
        RegimeArg::Trial => Regime::Trial,
    };
    let stream = match regime {
        Regime::Observational => 1,
        Regime::Trial => 2,
    };
    let (cohort, truth) = if let Some(rest) = scenario.strip_prefix("counterexample") {
        let gamma = match rest.strip_prefix("-g") {
            Some(g) => g.parse().map_err(|_| Failure::Input(format!("bad gamma in `{scenario}`")))?,
            None if rest.is_empty() => 5.0,
            None => return Err(Failure::Input(format!("unknown scenario `{scenario}`"))),
        };
        confounded_counterexample(n, gamma, make_rng(seed, stream)).map_err(|e| Failure::Input(e.to_string()))?
    } else {
        let spec: ScenarioSpec = scenario.parse().map_err(|e: plugin_surrogates::scm::ScmError| Failure::Input(e.to_string()))?;
        let params = sample_scenario_params(&spec.with_seed(seed), make_rng(seed, 0)).map_err(|e| Failure::Input(e.to_string()))?;
        generate_cohort(&params, n, regime, make_rng(seed, stream)).map_err(|e| Failure::Input(e.to_string()))?
    };
    let path = default_path(cli, scenario, seed, out);
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let truth_path = path.with_file_name(format!("{stem}.truth.csv"));
    let io = |e: plugin_surrogates::data::DataError| Failure::Io(e.to_string());
    write_cohort_csv(&cohort, create(&path)?).map_err(io)?;
    write_truth_csv(&truth, &cohort.s_names, create(&truth_path)?).map_err(io)?;
    println!("wrote {} and {}", path.display(), truth_path.display());
    Ok(())
}

fn check(cli: &Cli, seed: u64, instances: usize) -> Result<(), Failure> {
    let report = oracle_check(seed, instances).map_err(|e| Failure::Input(e.to_string()))?;
    for c in &report.checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({} instances, {} failures, worst {:e})", c.name, c.instances, c.failures, c.worst);
    }
    if cli.format.as_ref().is_some_and(|f| f.contains(&OutputFormat::Json)) {
        let path = resolve_out_dir(cli.out_dir.as_deref(), None).join("oracle_check.json");
        serde_json::to_writer_pretty(create(&path)?, &report).map_err(|e| Failure::Io(e.to_string()))?;
        println!("wrote {}", path.display());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Generate { scenario, n, seed, out, regime, missing } => {
            let args = GenerateArgs { scenario, n: *n, seed: *seed, out: out.as_deref(), regime: *regime, missing: *missing };
            generate(&cli, &args)
        }
        Command::OracleCheck { seed, instances } => check(&cli, *seed, *instances),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
