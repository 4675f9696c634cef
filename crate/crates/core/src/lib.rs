//! Stochastic sequential quadratic programming for equality-constrained
//! optimization with an adaptive exact-penalty merit parameter.
//!
//! ```text
//!     minimize    f(x)
//!     subject to  c(x) = 0
//! ```
//!
//! where only unbiased estimates of `∇f` are available. Each iteration solves
//! the Newton-KKT system built from a stochastic gradient, adapts the merit
//! parameter `τ` and the ratio parameter `ξ`, and takes a step whose length is
//! projected onto an interval controlled by `β_k`. Alongside the iterates the
//! driver records the quantities the method *would* have produced with the
//! exact gradient, which is what the Monte Carlo checks in [`tail`] and the
//! experiment harness consume.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command line
//! and parallel experiment dispatch live in the companion `ssqp-harness` crate.
//!
//! Layout:
//! - [`linalg`]: small dense kernels (LU, Householder QR, Jacobi eigen/SVD)
//! - [`kkt`]: KKT solve, tangential/normal decomposition, reduced curvature
//! - [`problem`], [`problems`], [`noise`]: test problems and gradient oracles
//! - [`merit`]: `φ`, `Δq`, and the `τ`/`ξ` updates
//! - [`sqp`]: the iteration, stepsize rule, `k*` sampling and run traces
//! - [`tail`]: concentration-bound formulas and their Monte Carlo verifiers

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod kkt;
pub mod linalg;
pub mod merit;
pub mod noise;
pub mod problem;
pub mod problems;
pub mod rng;
pub mod sqp;
pub mod tail;

pub use error::{Error, Result};
pub use kkt::{KktSolution, KktSystem, StepDecomposition};
pub use linalg::Matrix;
pub use merit::{ExtendedReal, MeritParams, MeritState};
pub use noise::NoiseModel;
pub use problem::Problem;
pub use sqp::{AlgoConfig, BetaSchedule, HessianPolicy, IterationRecord, Mode, RunResult, RunSummary};
