//! Built-in test problems.
//!
//! - [`quadratic::make_quadratic`]: strongly convex quadratic with linear
//!   equality constraints, exact `L` and `Γ = 0`, and a known KKT point.
//! - [`rosenbrock::make_rosenbrock_sphere`]: 2-D Rosenbrock on the unit circle.
//! - [`random_licq::make_random_licq`]: randomized nonconvex-in-`f` instance
//!   with curved constraints and a full-rank Jacobian at `x0`.
//!
//! Generators are deterministic in their `seed`.

pub mod quadratic;
pub mod random_licq;
pub mod rosenbrock;

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{householder_qr, Matrix};

pub use quadratic::{make_quadratic, QuadraticProblem};
pub use random_licq::{make_random_licq, RandomLicqProblem};
pub use rosenbrock::{make_rosenbrock_sphere, RosenbrockSphere};

pub(crate) fn check_dims(n: usize, m: usize) -> Result<()> {
    if m >= 1 && m < n {
        Ok(())
    } else {
        Err(Error::InvalidDimension { n, m })
    }
}

pub(crate) fn normal_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub(crate) fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `U diag(λ) Uᵀ` with `U` a random orthogonal matrix and `λᵢ ~ U[lo, hi]`.
pub(crate) fn random_spd<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Matrix {
    let u = householder_qr(&normal_matrix(n, n, rng)).q;
    let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    let mut q = Matrix::from_fn(n, n, |i, j| (0..n).map(|k| u[(i, k)] * lambda[k] * u[(j, k)]).sum());
    symmetrize(&mut q);
    q
}

/// Random symmetric matrix with standard normal entries on and above the diagonal.
pub(crate) fn random_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    let mut a = normal_matrix(n, n, rng);
    symmetrize(&mut a);
    a
}

fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    *a = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
}
