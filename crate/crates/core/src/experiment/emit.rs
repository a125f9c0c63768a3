//! Result files: CSV, JSON and SVG scatter plots.
//!
//! CSV columns, in order: `scenario, seed, method, status, error, ate_hat,
//! ate_true, mae, r2, pehe, r2_po, pehe_po, ci_lo, ci_hi, se, lambda, clip_lo,
//! clip_hi, draws, message`. Empty cells are absent values.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::{ExperimentConfig, OutputFormat};
use super::run::{ExperimentOutput, PlotSeries, ResultRow, ResultsTable, Timing};
use super::ExperimentError;

pub const SCHEMA_VERSION: &str = "1";

pub const CSV_COLUMNS: [&str; 20] = [
    "scenario", "seed", "method", "status", "error", "ate_hat", "ate_true", "mae", "r2", "pehe", "r2_po", "pehe_po", "ci_lo",
    "ci_hi", "se", "lambda", "clip_lo", "clip_hi", "draws", "message",
];

fn csv_err(e: csv::Error) -> ExperimentError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => ExperimentError::Io { path: PathBuf::new(), source: e },
        other => ExperimentError::Format(format!("{other:?}")),
    }
}

pub fn write_results_csv<W: Write>(table: &ResultsTable, writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    if table.rows.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    }
    for row in &table.rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ExperimentError::Io { path: PathBuf::new(), source: e })
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<ResultsTable, ExperimentError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(csv_err)?;
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(ExperimentError::Format(format!("unexpected results header: {headers:?}")));
    }
    let rows = r.deserialize::<ResultRow>().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
    Ok(ResultsTable { rows })
}

#[derive(Serialize)]
struct Metadata<'a> {
    generated_at_unix_s: u64,
    crate_version: &'static str,
    timings: &'a [Timing],
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    schema_version: &'static str,
    config: &'a ExperimentConfig,
    rows: &'a [ResultRow],
    /// Everything that changes between identical reruns lives here.
    metadata: Metadata<'a>,
}

pub fn write_results_json<W: Write>(output: &ExperimentOutput, writer: W) -> Result<(), ExperimentError> {
    let doc = JsonDocument {
        schema_version: SCHEMA_VERSION,
        config: &output.config,
        rows: &output.table.rows,
        metadata: Metadata {
            generated_at_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            crate_version: env!("CARGO_PKG_VERSION"),
            timings: &output.timings,
        },
    };
    serde_json::to_writer_pretty(writer, &doc).map_err(|e| ExperimentError::Format(e.to_string()))
}

/// A square scatter of `estimate` against `truth` with the identity line.
pub fn scatter_svg(series: &PlotSeries) -> String {
    const SIZE: f64 = 420.0;
    const PAD: f64 = 56.0;
    let all = series.truth.iter().chain(&series.estimate).copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let margin = 0.04 * (hi - lo);
    let (lo, hi) = (lo - margin, hi + margin);
    let span = SIZE - 2.0 * PAD;
    let px = |v: f64| PAD + (v - lo) / (hi - lo) * span;
    let py = |v: f64| SIZE - PAD - (v - lo) / (hi - lo) * span;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{span}" height="{span}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        px(lo),
        py(lo),
        px(hi),
        py(hi)
    );
    for (t, e) in series.truth.iter().zip(&series.estimate) {
        if t.is_finite() && e.is_finite() {
            let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#1f5fa8" fill-opacity="0.5"/>"##, px(*t), py(*e));
        }
    }
    let font = r#"font-family="sans-serif" font-size="12""#;
    for (v, anchor) in [(lo, "start"), (hi, "end")] {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" {font} text-anchor="{anchor}">{v:.2}</text>"#, px(v), SIZE - PAD + 16.0);
    }
    for v in [lo, hi] {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" {font} text-anchor="end">{v:.2}</text>"#, PAD - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" {font} text-anchor="middle">true CATE τ(x)</text>"#, SIZE / 2.0, SIZE - 14.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" {font} text-anchor="middle" transform="rotate(-90 16 {:.2})">estimated CATE τ̂(x)</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    let title = format!("{} / {}", series.scenario, series.method);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="30" {font} text-anchor="middle">{}</text>"#, SIZE / 2.0, escape(&title));
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_file(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<(), ExperimentError>) -> Result<(), ExperimentError> {
    let mut file = fs::File::create(path).map_err(|e| ExperimentError::io(path, e))?;
    write(&mut file).map_err(|e| match e {
        ExperimentError::Io { source, .. } => ExperimentError::io(path, source),
        other => other,
    })
}

/// Writes the requested formats (and plots) into `dir`, returning the paths.
pub fn emit_results(output: &ExperimentOutput, dir: &Path, formats: &[OutputFormat], plots: bool) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        let path = match format {
            OutputFormat::Csv => dir.join("results.csv"),
            OutputFormat::Json => dir.join("results.json"),
        };
        write_file(&path, |f| match format {
            OutputFormat::Csv => write_results_csv(&output.table, f),
            OutputFormat::Json => write_results_json(output, f),
        })?;
        written.push(path);
    }
    if plots && !output.plots.is_empty() {
        let plot_dir = dir.join("plots");
        fs::create_dir_all(&plot_dir).map_err(|e| ExperimentError::io(&plot_dir, e))?;
        for series in &output.plots {
            let path = plot_dir.join(format!("{}-{}.svg", series.scenario, series.method));
            fs::write(&path, scatter_svg(series)).map_err(|e| ExperimentError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
