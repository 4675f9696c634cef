//! `ssqp report <dir>`: turns the JSON/CSV outputs found in a directory into
//! flat, plot-ready CSV tables.
//!
//! - `rate_report.json` → `rate_plot.csv`
//! - `*trace.csv` → `*trace_plot.csv` (per-iteration scalars only)
//! - `verify.json` → `verify_plot.csv`

use std::path::{Path, PathBuf};

use crate::config::load_json;
use crate::error::HarnessError;
use crate::experiment::{RateReport, REPORT_FILE as RATE_FILE};
use crate::trace::{fmt_f64, read_trace, write_atomic};
use crate::verify::{VerifyReport, REPORT_FILE as VERIFY_FILE};

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn rate_table(report: &RateReport) -> Vec<u8> {
    csv_bytes(
        &["k_max", "sqrt_k_max_plus_1", "mean", "std_error", "succeeded", "failed"],
        report.cells.iter().map(|c| {
            vec![
                c.k_max.to_string(),
                fmt_f64(((c.k_max + 1) as f64).sqrt()),
                fmt_f64(c.mean),
                fmt_f64(c.std_error),
                c.succeeded.to_string(),
                c.failed.len().to_string(),
            ]
        }),
    )
}

fn trace_table(path: &Path) -> Result<Vec<u8>, HarnessError> {
    let trace = read_trace(path)?;
    Ok(csv_bytes(
        &[
            "k",
            "stationarity",
            "c_norm1",
            "f",
            "tau",
            "xi",
            "alpha",
            "delta_q_stoch",
            "delta_q_true",
            "phi_before",
            "phi_after",
        ],
        trace.iter().map(|r| {
            let mut row = vec![r.k.to_string()];
            row.extend(
                [
                    r.stationarity,
                    r.c_norm1,
                    r.f,
                    r.tau,
                    r.xi,
                    r.alpha,
                    r.delta_q_stoch,
                    r.delta_q_true,
                    r.phi_before,
                    r.phi_after,
                ]
                .map(fmt_f64),
            );
            row
        }),
    ))
}

fn verify_table(report: &VerifyReport) -> Vec<u8> {
    csv_bytes(
        &["check", "statistic", "threshold", "pass", "status"],
        report.verdicts.iter().map(|v| {
            vec![
                v.check.clone(),
                fmt_f64(v.statistic),
                fmt_f64(v.threshold),
                v.pass.to_string(),
                serde_json::to_value(v.status)
                    .ok()
                    .and_then(|s| s.as_str().map(str::to_string))
                    .unwrap_or_default(),
            ]
        }),
    )
}

/// Writes every table it can derive from `dir` and returns their paths.
/// Fails if `dir` holds nothing it recognizes.
pub fn run_report(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut written = Vec::new();
    let rate = dir.join(RATE_FILE);
    if rate.is_file() {
        let report: RateReport = load_json(&rate)?;
        let out = dir.join("rate_plot.csv");
        write_atomic(&out, &rate_table(&report))?;
        written.push(out);
    }
    let verify = dir.join(VERIFY_FILE);
    if verify.is_file() {
        let report: VerifyReport = load_json(&verify)?;
        let out = dir.join("verify_plot.csv");
        write_atomic(&out, &verify_table(&report))?;
        written.push(out);
    }
    let mut traces: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("trace.csv"))
        })
        .collect();
    traces.sort();
    for t in traces {
        let name = t.file_name().and_then(|n| n.to_str()).unwrap_or("trace.csv");
        let out = dir.join(name.replace("trace.csv", "trace_plot.csv"));
        write_atomic(&out, &trace_table(&t)?)?;
        written.push(out);
    }
    if written.is_empty() {
        return Err(HarnessError::Format {
            path: dir.to_path_buf(),
            message: format!("no {RATE_FILE}, {VERIFY_FILE} or *trace.csv found"),
        });
    }
    Ok(written)
}
