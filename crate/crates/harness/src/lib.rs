//! File formats, configuration, experiment sweeps and the `ssqp` command line
//! for [`ssqp_core`].
//!
//! Subcommands:
//!
//! - `ssqp solve <config.json>`: one run; writes `trace.csv` and `summary.json`
//! - `ssqp experiment <spec.json>`: seed sweep over `k_max`; writes
//!   `rate_report.json` and per-run summaries
//! - `ssqp verify <params.json>`: Monte Carlo checks; writes `verify.json`
//! - `ssqp report <dir>`: plot-ready CSV from the files above
//!
//! `SSQP_OUTPUT_DIR` overrides the output directory of any config and
//! `SSQP_WORKERS` the experiment worker count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod solve;
pub mod trace;
pub mod verify;

pub use error::HarnessError;

pub const ENV_OUTPUT_DIR: &str = "SSQP_OUTPUT_DIR";
pub const ENV_WORKERS: &str = "SSQP_WORKERS";
