use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssqp_harness::config::{load_json, resolve_output_dir};
use ssqp_harness::solve::write_json;
use ssqp_harness::verify::{run_verify, VerifyParams, REPORT_FILE};
use ssqp_harness::{experiment, report, solve, HarnessError};

#[derive(Parser)]
#[command(name = "ssqp", version, about = "Stochastic SQP solver, experiments and verifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver once. Exit 0 on success, 1 on config errors, 2 on solver errors.
    Solve { config: PathBuf },
    /// Sweep k_max over seeds and write a rate report. Exit 0, 1 (config) or 2 (too many failed runs).
    Experiment { spec: PathBuf },
    /// Run the Monte Carlo checks. Exit 0 if all pass, 1 on config errors, 3 if any check fails.
    Verify { params: PathBuf },
    /// Write plot-ready CSV for the outputs in a directory.
    Report { dir: PathBuf },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

fn fail(e: &HarnessError, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn runtime_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn cmd_solve(path: &Path) -> ExitCode {
    let (cfg, algo) = match solve::prepare(path) {
        Ok(v) => v,
        Err(e) => return fail(&e, EXIT_CONFIG),
    };
    match solve::execute(&cfg, &algo) {
        Ok(out) => {
            println!(
                "{}: {} iterations, k* = {}, statistic {:.6e}; wrote {} and {}",
                out.summary.problem,
                out.summary.iterations,
                out.summary.k_star,
                out.summary.kstar_statistic,
                out.trace_path.display(),
                out.summary_path.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, runtime_code(&e)),
    }
}

fn cmd_experiment(path: &Path) -> ExitCode {
    let spec = match experiment::load_spec(path) {
        Ok(s) => s,
        Err(e) => return fail(&e, EXIT_CONFIG),
    };
    match experiment::run_experiment(&spec) {
        Ok(out) => {
            for c in &out.report.cells {
                println!(
                    "k_max {:>8}: mean {:.6e} ± {:.2e} ({} ok, {} failed)",
                    c.k_max,
                    c.mean,
                    c.std_error,
                    c.succeeded,
                    c.failed.len()
                );
            }
            if let Some(slope) = out.report.slope {
                println!("log-log slope vs sqrt(k_max+1): {slope:.3}");
            }
            match out.report_path {
                Some(p) => {
                    println!("wrote {}", p.display());
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!(
                        "error: fewer than {:.0}% of runs succeeded in some cell; no report written",
                        experiment::MIN_SUCCESS_FRACTION * 100.0
                    );
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Err(e) => fail(&e, runtime_code(&e)),
    }
}

fn cmd_verify(path: &Path) -> ExitCode {
    let params: VerifyParams = match load_json(path) {
        Ok(p) => p,
        Err(e) => return fail(&e, EXIT_CONFIG),
    };
    let report = match run_verify(&params) {
        Ok(r) => r,
        Err(e) => return fail(&e, runtime_code(&e)),
    };
    let out = resolve_output_dir(params.output_dir.as_deref()).join(REPORT_FILE);
    if let Err(e) = write_json(&out, &report) {
        return fail(&e, EXIT_RUNTIME);
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn cmd_report(dir: &Path) -> ExitCode {
    match report::run_report(dir) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, EXIT_CONFIG),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve { config } => cmd_solve(config),
        Command::Experiment { spec } => cmd_experiment(spec),
        Command::Verify { params } => cmd_verify(params),
        Command::Report { dir } => cmd_report(dir),
    }
}
