//! Newton-KKT system for the SQP subproblem
//!
//! ```text
//!     [ H  Jᵀ ] [ d ]     [ g ]
//!     [ J  0  ] [ y ] = - [ c ]
//! ```
//!
//! solved directly with a pivoted dense LU of the full `(n+m)` block matrix,
//! plus the orthogonal split `d = u + v` with `u ∈ Null(J)`, `v ∈ Range(Jᵀ)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, householder_qr, lu_factor, norm_inf, Lu, Matrix};

/// Full-row-rank threshold relative to the largest singular value of `J`.
pub const RANK_RTOL: f64 = 1e-10;
/// Symmetry tolerance for `H`, relative to `max(1, max|h_ij|)`.
pub const SYMMETRY_RTOL: f64 = 1e-12;
const PIVOT_RTOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct KktSystem {
    hessian: Matrix,
    jacobian: Matrix,
    gradient: Vec<f64>,
    constraints: Vec<f64>,
}

impl KktSystem {
    /// Validates shapes (`m ≤ n`) and symmetry of `H`. Rank of `J` is not
    /// checked here; a rank-deficient `J` surfaces as a singular pivot.
    pub fn new(hessian: Matrix, jacobian: Matrix, gradient: Vec<f64>, constraints: Vec<f64>) -> Result<Self> {
        let n = gradient.len();
        let m = constraints.len();
        check_dims(&hessian, &jacobian, n, m)?;
        Ok(KktSystem {
            hessian,
            jacobian,
            gradient,
            constraints,
        })
    }

    pub fn n(&self) -> usize {
        self.gradient.len()
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn jacobian(&self) -> &Matrix {
        &self.jacobian
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn constraints(&self) -> &[f64] {
        &self.constraints
    }
}

fn check_dims(h: &Matrix, j: &Matrix, n: usize, m: usize) -> Result<()> {
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "hessian",
            expected: n,
            found: if h.nrows() != n { h.nrows() } else { h.ncols() },
        });
    }
    if j.nrows() != m {
        return Err(Error::DimensionMismatch {
            what: "jacobian rows",
            expected: m,
            found: j.nrows(),
        });
    }
    if j.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "jacobian columns",
            expected: n,
            found: j.ncols(),
        });
    }
    if m > n {
        return Err(Error::InvalidDimension { n, m });
    }
    let asym = h.asymmetry();
    if asym > SYMMETRY_RTOL * h.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktSolution {
    pub d: Vec<f64>,
    pub y: Vec<f64>,
    /// ∞-norm of the block-system residual.
    pub residual: f64,
}

/// Factored KKT matrix; reusable for many right-hand sides with the same
/// `(H, J)`, which is what the Monte Carlo single-step checks rely on.
#[derive(Clone, Debug)]
pub struct KktFactorization {
    n: usize,
    m: usize,
    matrix: Matrix,
    lu: Lu,
}

impl KktFactorization {
    pub fn new(hessian: &Matrix, jacobian: &Matrix) -> Result<Self> {
        let n = hessian.nrows();
        let m = jacobian.nrows();
        check_dims(hessian, jacobian, n, m)?;
        let size = n + m;
        let matrix = Matrix::from_fn(size, size, |i, j| match (i < n, j < n) {
            (true, true) => hessian[(i, j)],
            (true, false) => jacobian[(j - n, i)],
            (false, true) => jacobian[(i - n, j)],
            (false, false) => 0.0,
        });
        let lu = lu_factor(&matrix, PIVOT_RTOL, "KKT matrix")?;
        Ok(KktFactorization { n, m, matrix, lu })
    }

    pub fn solve(&self, gradient: &[f64], constraints: &[f64], tol: f64) -> Result<KktSolution> {
        if gradient.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "gradient",
                expected: self.n,
                found: gradient.len(),
            });
        }
        if constraints.len() != self.m {
            return Err(Error::DimensionMismatch {
                what: "constraints",
                expected: self.m,
                found: constraints.len(),
            });
        }
        let rhs: Vec<f64> = gradient.iter().chain(constraints).map(|v| -v).collect();
        let mut sol = self.lu.solve(&rhs);
        // one sweep of iterative refinement
        let r = linalg::sub(&rhs, &self.matrix.mul_vec(&sol));
        if norm_inf(&r) > 0.0 {
            let corr = self.lu.solve(&r);
            linalg::axpy(1.0, &corr, &mut sol);
        }
        let residual = norm_inf(&linalg::sub(&self.matrix.mul_vec(&sol), &rhs));
        if !residual.is_finite() {
            return Err(Error::NonFinite { what: "KKT solution" });
        }
        if residual > tol {
            return Err(Error::InaccurateSolve { residual, tol });
        }
        let y = sol.split_off(self.n);
        Ok(KktSolution { d: sol, y, residual })
    }
}

pub fn solve_kkt(sys: &KktSystem, tol: f64) -> Result<KktSolution> {
    KktFactorization::new(&sys.hessian, &sys.jacobian)?.solve(&sys.gradient, &sys.constraints, tol)
}

/// True when the smallest singular value of `J` exceeds [`RANK_RTOL`] times the
/// largest. An empty `J` (no constraints) counts as full row rank.
pub fn has_full_row_rank(jacobian: &Matrix) -> bool {
    if jacobian.nrows() == 0 {
        return true;
    }
    if jacobian.nrows() > jacobian.ncols() {
        return false;
    }
    let sv = linalg::singular_values(jacobian);
    let largest = sv[0];
    let smallest = sv[sv.len() - 1];
    largest > 0.0 && smallest > RANK_RTOL * largest
}

fn require_full_row_rank(jacobian: &Matrix, what: &'static str) -> Result<()> {
    if has_full_row_rank(jacobian) {
        Ok(())
    } else {
        Err(Error::SingularSystem { what })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDecomposition {
    /// `u ∈ Null(J)`
    pub tangential: Vec<f64>,
    /// `v ∈ Range(Jᵀ)`
    pub normal: Vec<f64>,
}

/// `v = Jᵀ(JJᵀ)⁻¹J d`, `u = d − v`, computed through an orthonormal basis of
/// `Range(Jᵀ)` rather than by forming `JJᵀ`.
pub fn decompose_step(d: &[f64], jacobian: &Matrix) -> Result<StepDecomposition> {
    if jacobian.ncols() != d.len() {
        return Err(Error::DimensionMismatch {
            what: "jacobian columns",
            expected: d.len(),
            found: jacobian.ncols(),
        });
    }
    let m = jacobian.nrows();
    if m == 0 {
        return Ok(StepDecomposition {
            tangential: d.to_vec(),
            normal: alloc::vec![0.0; d.len()],
        });
    }
    require_full_row_rank(jacobian, "J Jᵀ")?;
    let q = householder_qr(&jacobian.transpose()).q;
    let range = q.columns(0, m);
    let coeff = range.tr_mul_vec(d);
    let normal = range.mul_vec(&coeff);
    let tangential = linalg::sub(d, &normal);
    Ok(StepDecomposition { tangential, normal })
}

/// Orthonormal basis `Z` (`n × (n−m)`) of `Null(J)` from a Householder QR of `Jᵀ`.
pub fn null_space_basis(jacobian: &Matrix) -> Result<Matrix> {
    let (m, n) = (jacobian.nrows(), jacobian.ncols());
    if m > n {
        return Err(Error::InvalidDimension { n, m });
    }
    if m == 0 {
        return Ok(Matrix::identity(n));
    }
    require_full_row_rank(jacobian, "null-space basis")?;
    let q = householder_qr(&jacobian.transpose()).q;
    Ok(q.columns(m, n))
}

/// `Zᵀ H Z` for a given null-space basis.
pub fn reduced_hessian_with_basis(hessian: &Matrix, basis: &Matrix) -> Matrix {
    basis.transpose().matmul(&hessian.matmul(basis))
}

/// Smallest eigenvalue of the reduced Hessian, or `None` when `Null(J) = {0}`.
pub fn reduced_min_eigenvalue(hessian: &Matrix, jacobian: &Matrix) -> Result<Option<f64>> {
    let z = null_space_basis(jacobian)?;
    if z.ncols() == 0 {
        return Ok(None);
    }
    let reduced = reduced_hessian_with_basis(hessian, &z);
    Ok(linalg::symmetric_eigenvalues(&reduced).first().copied())
}

/// Whether `uᵀHu ≥ ζ‖u‖²` on `Null(J)`; vacuously true when `m = n`.
pub fn check_reduced_curvature(hessian: &Matrix, jacobian: &Matrix, zeta: f64) -> Result<bool> {
    Ok(reduced_min_eigenvalue(hessian, jacobian)?.is_none_or(|e| e >= zeta))
}
