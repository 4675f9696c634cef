//! Seed sweeps measuring how the stationarity statistic at `k*` decays with
//! the iteration budget.
//!
//! For each `k_max` in the sweep and each seed, a run uses `β = γ/√(k_max+1)`
//! with `γ` held fixed, and reports
//! `‖∇f(x_{k*}) + J(x_{k*})ᵀ y_true‖² + ‖c(x_{k*})‖₁`. The report gives the
//! mean and standard error per `k_max` and the least-squares slope of
//! `log mean` against `log √(k_max+1)` (about −1 at the expected rate).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssqp_core::sqp::run;

use crate::config::{check_schema, load_json, resolve_output_dir, AlgoSpec, BetaSpec, ProblemSpec, SCHEMA_VERSION};
use crate::error::HarnessError;
use crate::solve::{write_json, SummaryJson};

pub const REPORT_FILE: &str = "rate_report.json";

/// Fraction of runs per cell that must succeed for the report to be emitted.
pub const MIN_SUCCESS_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    /// Template; `k_max` comes from the sweep and `seed` from `seeds`.
    pub algorithm: AlgoSpec,
    pub k_max: Vec<usize>,
    pub replications: usize,
    /// Defaults to `0..replications`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Write one summary JSON per run under `runs/`.
    #[serde(default = "yes")]
    pub write_run_summaries: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        check_schema(self.schema_version)?;
        if self.replications == 0 {
            return Err(HarnessError::config("replications", "must be at least 1"));
        }
        if self.k_max.is_empty() {
            return Err(HarnessError::config("k_max", "must list at least one value"));
        }
        if self.k_max.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::config("k_max", "must be strictly increasing"));
        }
        if self.algorithm.k_max.is_some() {
            return Err(HarnessError::config("algorithm.k_max", "set by the sweep; remove it"));
        }
        if matches!(self.algorithm.beta, BetaSpec::Explicit { .. }) {
            return Err(HarnessError::config(
                "algorithm.beta",
                "explicit schedules cannot follow a k_max sweep",
            ));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.replications {
                return Err(HarnessError::config("seeds", "length must equal replications"));
            }
        }
        if self.workers == Some(0) {
            return Err(HarnessError::config("workers", "must be at least 1"));
        }
        for &k in &self.k_max {
            self.algorithm.to_config(k, 0, "algorithm")?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| (0..self.replications as u64).collect())
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.algorithm.beta {
            BetaSpec::Constant { gamma } => Some(gamma),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FailedRun {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateCell {
    pub k_max: usize,
    pub mean: f64,
    /// Sample standard deviation over `√R`.
    pub std_error: f64,
    pub succeeded: usize,
    pub failed: Vec<FailedRun>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateReport {
    pub schema_version: u32,
    pub problem: String,
    pub gamma: Option<f64>,
    pub replications: usize,
    pub cells: Vec<RateCell>,
    /// Slope of `log mean` against `log √(k_max+1)`; needs two cells.
    pub slope: Option<f64>,
}

impl RateReport {
    pub fn cell(&self, k_max: usize) -> Option<&RateCell> {
        self.cells.iter().find(|c| c.k_max == k_max)
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Worker count: `SSQP_WORKERS` if set, else the experiment file's, else rayon's default.
pub fn resolve_workers(configured: Option<usize>) -> Result<Option<usize>, HarnessError> {
    match std::env::var(crate::ENV_WORKERS) {
        Ok(v) if !v.is_empty() => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(HarnessError::config(
                crate::ENV_WORKERS,
                format!("expected a positive integer, got {v:?}"),
            )),
        },
        _ => Ok(configured),
    }
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub report: RateReport,
    pub report_path: Option<PathBuf>,
    pub complete: bool,
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    let spec: ExperimentSpec = load_json(path)?;
    spec.validate()?;
    Ok(spec)
}

/// Runs the sweep on a bounded worker pool. The report is written only when
/// every cell reaches [`MIN_SUCCESS_FRACTION`]; `complete` says whether it was.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let problem = spec.problem.build()?;
    let seeds = spec.seeds();
    let out_dir = resolve_output_dir(spec.output_dir.as_deref());
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = resolve_workers(spec.workers)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Experiment(format!("worker pool: {e}")))?;

    let jobs: Vec<(usize, u64)> = spec
        .k_max
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let outcomes: Vec<Result<SummaryJson, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k_max, seed)| {
                let cfg = spec
                    .algorithm
                    .to_config(k_max, seed, "algorithm")
                    .map_err(|e| e.to_string())?;
                let result = run(&problem, &cfg).map_err(|e| e.to_string())?;
                Ok(SummaryJson::new(&result, seed, k_max))
            })
            .collect()
    });

    let mut cells = Vec::with_capacity(spec.k_max.len());
    let mut complete = true;
    for &k_max in &spec.k_max {
        let mut stats = Vec::new();
        let mut failed = Vec::new();
        for ((k, seed), outcome) in jobs.iter().zip(&outcomes) {
            if *k != k_max {
                continue;
            }
            match outcome {
                Ok(s) => {
                    stats.push(s.kstar_statistic);
                    if spec.write_run_summaries {
                        write_json(&out_dir.join("runs").join(format!("kmax_{k_max}_seed_{seed}.json")), s)?;
                    }
                }
                Err(error) => {
                    log::warn!("k_max = {k_max}, seed = {seed} failed: {error}");
                    failed.push(FailedRun {
                        seed: *seed,
                        error: error.clone(),
                    });
                }
            }
        }
        if (stats.len() as f64) < MIN_SUCCESS_FRACTION * seeds.len() as f64 {
            complete = false;
        }
        let (mean, std_error) = mean_and_se(&stats);
        cells.push(RateCell {
            k_max,
            mean,
            std_error,
            succeeded: stats.len(),
            failed,
        });
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter(|c| c.mean > 0.0 && c.mean.is_finite())
        .map(|c| (((c.k_max + 1) as f64).sqrt().ln(), c.mean.ln()))
        .unzip();
    let report = RateReport {
        schema_version: SCHEMA_VERSION,
        problem: problem.name().to_string(),
        gamma: spec.gamma(),
        replications: seeds.len(),
        cells,
        slope: fit_slope(&xs, &ys),
    };
    let report_path = if complete {
        let p = out_dir.join(REPORT_FILE);
        write_json(&p, &report)?;
        Some(p)
    } else {
        None
    };
    Ok(ExperimentOutput {
        report,
        report_path,
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_error_is_sample_std_over_root_n() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((se - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| (5.0 / v).ln()).collect();
        assert!((fit_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(fit_slope(&xs[..1], &ys[..1]), None);
    }
}
