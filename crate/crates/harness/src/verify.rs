//! `ssqp verify`: Monte Carlo checks of the concentration results, emitted
//! as JSON verdicts.
//!
//! Trials are split into a fixed number of partitions, each with its own
//! substream derived from the check seed, so results do not depend on the
//! worker count. A check whose precondition does not hold still runs, but is
//! marked `informational` and cannot fail the battery.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use ssqp_core::rng::{child_seed, substream, ChaCha8Rng};
use ssqp_core::tail::{
    chernoff_precondition, ell, eval_tau_min_formula, mc_chernoff_check, mc_ptau_symmetric, mc_subgaussian_max,
    simulate_capped_process, subgaussian_max_threshold, FrequencyEstimate, TauMinConstants,
};
use ssqp_core::{Matrix, NoiseModel};

use crate::config::{check_schema, NoiseSpec, ProblemSpec, SCHEMA_VERSION};
use crate::error::HarnessError;

pub const REPORT_FILE: &str = "verify.json";
pub const PARTITIONS: usize = 16;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    /// `terms` independent Bernoulli variables with equal `p = mu/terms`;
    /// `mu` defaults to `ℓ(s, δ)`.
    Chernoff {
        s: usize,
        delta: f64,
        terms: usize,
        #[serde(default)]
        mu: Option<f64>,
        trials: usize,
    },
    /// Capped process with a constant success probability.
    CappedProcess {
        p: f64,
        s_max: usize,
        k_max: usize,
        delta: f64,
        trials: usize,
    },
    /// Single-step probability `p_τ ≥ ½` at `point` (default `x0`) with `H = I`.
    Ptau {
        problem: ProblemSpec,
        noise: NoiseSpec,
        trials: usize,
        #[serde(default)]
        point: Option<Vec<f64>>,
    },
    /// Maximum of `k_max + 1` noise norms against the sub-Gaussian threshold.
    /// `m` defaults to the smallest parameter valid for `noise`.
    SubgaussianMax {
        dim: usize,
        noise: NoiseSpec,
        #[serde(default)]
        m: Option<f64>,
        k_max: usize,
        delta: f64,
        trials: usize,
    },
    /// Evaluates the `τ_min`, `s_max` formula for user-supplied constants.
    TauMinFormula {
        kappa_v: f64,
        kappa_g: f64,
        kappa_h: f64,
        zeta: f64,
        kappa_c: f64,
        m: f64,
        k_max: usize,
        delta: f64,
        sigma: f64,
        eps_tau: f64,
        tau_init: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Omitted: the default battery. Empty: nothing to run.
    #[serde(default)]
    pub checks: Option<Vec<CheckSpec>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Informational,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Verdict {
    pub check: String,
    pub params: serde_json::Value,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub status: Status,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub seed: u64,
    pub verdicts: Vec<Verdict>,
    pub all_pass: bool,
}

pub fn default_battery() -> Vec<CheckSpec> {
    vec![
        CheckSpec::Chernoff {
            s: 3,
            delta: 0.1,
            terms: 100,
            mu: None,
            trials: 100_000,
        },
        CheckSpec::CappedProcess {
            p: 0.05,
            s_max: 3,
            k_max: 200,
            delta: 0.1,
            trials: 10_000,
        },
        CheckSpec::Ptau {
            problem: ProblemSpec::Quadratic {
                n: 10,
                m: 3,
                seed: 1,
                components: None,
            },
            noise: NoiseSpec::Gaussian { variance: 1.0 },
            trials: 10_000,
            point: None,
        },
        CheckSpec::SubgaussianMax {
            dim: 10,
            noise: NoiseSpec::Gaussian { variance: 1.0 },
            m: None,
            k_max: 100,
            delta: 0.1,
            trials: 1_000,
        },
    ]
}

impl VerifyParams {
    pub fn checks(&self) -> Vec<CheckSpec> {
        self.checks.clone().unwrap_or_else(default_battery)
    }
}

/// Sizes of the `PARTITIONS` trial blocks.
fn partition_sizes(trials: usize) -> Vec<usize> {
    (0..PARTITIONS)
        .map(|i| trials / PARTITIONS + usize::from(i < trials % PARTITIONS))
        .collect()
}

/// Runs `f(trials_in_block, rng)` on every block in parallel and sums.
fn partitioned<F>(seed: u64, trials: usize, f: F) -> Result<FrequencyEstimate, HarnessError>
where
    F: Fn(usize, &mut ChaCha8Rng) -> ssqp_core::Result<FrequencyEstimate> + Sync,
{
    let parts: Vec<ssqp_core::Result<FrequencyEstimate>> = partition_sizes(trials)
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| f(n, &mut substream(child_seed(seed, i as u64), 0)))
        .collect();
    let mut total = FrequencyEstimate {
        trials: 0,
        successes: 0,
    };
    for p in parts {
        let p = p?;
        total.trials += p.trials;
        total.successes += p.successes;
    }
    Ok(total)
}

fn three_se(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials.max(1) as f64).sqrt()
}

fn status(pass: bool, precondition: bool) -> Status {
    match (precondition, pass) {
        (false, _) => Status::Informational,
        (true, true) => Status::Pass,
        (true, false) => Status::Fail,
    }
}

fn field(index: usize, name: &str) -> String {
    format!("checks[{index}].{name}")
}

pub fn run_check(spec: &CheckSpec, seed: u64, index: usize) -> Result<Verdict, HarnessError> {
    let params = serde_json::to_value(spec).expect("check specs serialize");
    let cfg_err = |name: &str, e: ssqp_core::Error| HarnessError::config(&field(index, name), e.to_string());
    match spec {
        &CheckSpec::Chernoff {
            s,
            delta,
            terms,
            mu,
            trials,
        } => {
            let ell = ell(s, delta).map_err(|e| cfg_err("delta", e))?;
            let mu = mu.unwrap_or(ell);
            if terms == 0 || !(mu >= 0.0) || mu > terms as f64 {
                return Err(HarnessError::config(&field(index, "mu"), "need 0 <= mu <= terms"));
            }
            let probs = vec![mu / terms as f64; terms];
            let precondition = chernoff_precondition(probs.iter().sum(), ell);
            let tail = partitioned(seed, trials, |n, rng| {
                mc_chernoff_check(&probs, s, delta, n, rng).map(|c| c.tail)
            })?;
            let threshold = delta + three_se(delta, trials);
            let pass = tail.frequency() <= threshold;
            Ok(Verdict {
                check: "chernoff".into(),
                params,
                statistic: tail.frequency(),
                threshold,
                pass,
                status: status(pass, precondition),
                details: json!({"mu": mu, "ell": ell, "precondition_met": precondition}),
            })
        }
        &CheckSpec::CappedProcess {
            p,
            s_max,
            k_max,
            delta,
            trials,
        } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(HarnessError::config(&field(index, "p"), "must lie in [0, 1]"));
            }
            if s_max > k_max + 1 {
                return Err(HarnessError::config(
                    &field(index, "s_max"),
                    "must not exceed k_max + 1",
                ));
            }
            let mut exceeds = 0usize;
            let mut bound = 0.0;
            let parts: Vec<_> = partition_sizes(trials)
                .into_par_iter()
                .enumerate()
                .map(|(i, n)| {
                    simulate_capped_process(
                        |_| p,
                        s_max,
                        k_max,
                        delta,
                        n,
                        &mut substream(child_seed(seed, i as u64), 0),
                    )
                })
                .collect();
            let mut holds = 0usize;
            for r in parts {
                let r = r.map_err(|e| cfg_err("delta", e))?;
                holds += r.bound_holds;
                exceeds += r.count_exceeds;
                bound = r.bound;
            }
            let freq = holds as f64 / trials.max(1) as f64;
            let threshold = 1.0 - delta;
            let pass = freq >= threshold && exceeds == 0;
            Ok(Verdict {
                check: "capped_process".into(),
                params,
                statistic: freq,
                threshold,
                pass,
                status: status(pass, true),
                details: json!({"bound": bound, "freq_count_exceeds": exceeds as f64 / trials.max(1) as f64}),
            })
        }
        CheckSpec::Ptau {
            problem,
            noise,
            trials,
            point,
        } => {
            let problem = problem.build()?;
            let noise: NoiseModel = noise.into();
            noise.validate().map_err(|e| cfg_err("noise", e))?;
            let x = point.clone().unwrap_or_else(|| problem.initial_point());
            if x.len() != problem.dim() {
                return Err(HarnessError::config(&field(index, "point"), "wrong dimension"));
            }
            let h = Matrix::identity(problem.dim());
            let est = partitioned(seed, *trials, |n, rng| {
                mc_ptau_symmetric(&problem, &x, &h, &noise, n, rng)
            })?;
            let threshold = 0.5 - three_se(0.5, *trials);
            let pass = est.frequency() >= threshold;
            Ok(Verdict {
                check: "ptau".into(),
                params,
                statistic: est.frequency(),
                threshold,
                pass,
                status: status(pass, noise.is_symmetric()),
                details: serde_json::Value::Null,
            })
        }
        CheckSpec::SubgaussianMax {
            dim,
            noise,
            m,
            k_max,
            delta,
            trials,
        } => {
            let noise: NoiseModel = noise.into();
            noise.validate().map_err(|e| cfg_err("noise", e))?;
            if *dim == 0 {
                return Err(HarnessError::config(&field(index, "dim"), "must be at least 1"));
            }
            let matched = noise.subgaussian_parameter(*dim).ok_or_else(|| {
                HarnessError::config(&field(index, "noise"), "needs gaussian or symmetric_bounded noise")
            })?;
            let m = m.unwrap_or(matched);
            let bound = subgaussian_max_threshold(m, *k_max, *delta).map_err(|e| cfg_err("m", e))?;
            let est = partitioned(seed, *trials, |n, rng| {
                mc_subgaussian_max(&noise, *dim, m, *k_max, *delta, n, rng)
            })?;
            let threshold = 1.0 - delta - three_se(*delta, *trials);
            let pass = est.frequency() >= threshold;
            Ok(Verdict {
                check: "subgaussian_max".into(),
                params,
                statistic: est.frequency(),
                threshold,
                pass,
                status: status(pass, m >= matched),
                details: json!({"m": m, "matched_m": matched, "norm_threshold": bound}),
            })
        }
        &CheckSpec::TauMinFormula {
            kappa_v,
            kappa_g,
            kappa_h,
            zeta,
            kappa_c,
            m,
            k_max,
            delta,
            sigma,
            eps_tau,
            tau_init,
        } => {
            let b = eval_tau_min_formula(&TauMinConstants {
                kappa_v,
                kappa_g,
                kappa_h,
                zeta,
                kappa_c,
                m,
                k_max,
                delta,
                sigma,
                eps_tau,
                tau_init,
            })
            .map_err(|e| HarnessError::config(&format!("checks[{index}]"), e.to_string()))?;
            Ok(Verdict {
                check: "tau_min_formula".into(),
                params,
                statistic: b.tau_min,
                threshold: 0.0,
                pass: b.tau_min > 0.0,
                status: Status::Informational,
                details: json!({"kappa_tau_min": b.kappa_tau_min, "m_tau": b.m_tau, "s_max": b.s_max}),
            })
        }
    }
}

pub fn run_verify(params: &VerifyParams) -> Result<VerifyReport, HarnessError> {
    check_schema(params.schema_version)?;
    let checks = params.checks();
    let verdicts = checks
        .iter()
        .enumerate()
        .map(|(i, c)| run_check(c, child_seed(params.seed, 1000 + i as u64), i))
        .collect::<Result<Vec<_>, _>>()?;
    let all_pass = verdicts.iter().all(|v| v.status != Status::Fail);
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        seed: params.seed,
        verdicts,
        all_pass,
    })
}
