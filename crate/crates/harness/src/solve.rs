use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssqp_core::sqp::run;
use ssqp_core::{RunResult, RunSummary};

use crate::config::{load_json, resolve_output_dir, SolveConfig, SCHEMA_VERSION};
use crate::error::HarnessError;
use crate::trace::{write_atomic, write_trace};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// JSON form of a run summary.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SummaryJson {
    pub schema_version: u32,
    pub problem: String,
    pub seed: u64,
    pub k_max: usize,
    pub iterations: usize,
    pub k_star: usize,
    pub x_at_kstar: Vec<f64>,
    pub kstar_statistic: f64,
    pub final_tau: f64,
    pub final_xi: f64,
    pub s_count: usize,
    pub r_count: usize,
    pub min_stationarity: f64,
    pub final_stationarity: f64,
    pub final_c_norm1: f64,
    pub tau_min_observed: f64,
    pub xi_min_observed: f64,
    pub min_tau_trial_true: Option<f64>,
    pub a_max: f64,
    pub a_min_observed: f64,
    pub gamma_bound: f64,
    pub gamma_exceeds_bound: bool,
    pub stopped_early: bool,
    pub box_exits: usize,
}

impl SummaryJson {
    pub fn new(result: &RunResult, seed: u64, k_max: usize) -> Self {
        let RunSummary {
            problem,
            iterations,
            k_star,
            final_tau,
            final_xi,
            s_count,
            r_count,
            min_stationarity,
            final_stationarity,
            final_c_norm1,
            tau_min_observed,
            xi_min_observed,
            min_tau_trial_true,
            a_max,
            a_min_observed,
            gamma_bound,
            gamma_exceeds_bound,
            stopped_early,
            box_exits,
            kstar_statistic,
        } = result.summary.clone();
        SummaryJson {
            schema_version: SCHEMA_VERSION,
            problem,
            seed,
            k_max,
            iterations,
            k_star,
            x_at_kstar: result.x_at_kstar.clone(),
            kstar_statistic,
            final_tau,
            final_xi,
            s_count,
            r_count,
            min_stationarity,
            final_stationarity,
            final_c_norm1,
            tau_min_observed,
            xi_min_observed,
            min_tau_trial_true,
            a_max,
            a_min_observed,
            gamma_bound,
            gamma_exceeds_bound,
            stopped_early,
            box_exits,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[derive(Debug)]
pub struct SolveOutput {
    pub result: RunResult,
    pub summary: SummaryJson,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Stage one of `ssqp solve`: everything that can fail as a config error.
pub fn prepare(config_path: &Path) -> Result<(SolveConfig, ssqp_core::AlgoConfig), HarnessError> {
    let cfg: SolveConfig = load_json(config_path)?;
    let algo = cfg.algo_config()?;
    Ok((cfg, algo))
}

/// Stage two: build the problem, run, and write `trace.csv` + `summary.json`.
pub fn execute(cfg: &SolveConfig, algo: &ssqp_core::AlgoConfig) -> Result<SolveOutput, HarnessError> {
    let problem = cfg.problem.build()?;
    let result = run(&problem, algo)?;
    let out = resolve_output_dir(cfg.output_dir.as_deref());
    let trace_path = out.join(TRACE_FILE);
    let summary_path = out.join(SUMMARY_FILE);
    write_trace(&trace_path, &result.trace)?;
    let summary = SummaryJson::new(&result, algo.seed, algo.k_max);
    write_json(&summary_path, &summary)?;
    Ok(SolveOutput {
        result,
        summary,
        trace_path,
        summary_path,
    })
}
