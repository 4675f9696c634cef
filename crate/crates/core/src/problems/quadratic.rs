use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kkt::{has_full_row_rank, KktFactorization};
use crate::linalg::{dot, symmetric_eigenvalues, Matrix};
use crate::problem::Problem;
use crate::rng::{substream, PROBLEM_STREAM};

use super::{check_dims, normal_matrix, normal_vec, random_spd};

/// `f(x) = ½xᵀQx + qᵀx` subject to `Ax = b`, with `Q ≻ 0`.
///
/// Optionally carries a finite-sum split `f = (1/N) Σ fᵢ` where
/// `fᵢ(x) = ½xᵀQx + (q + δᵢ)ᵀx` and `Σ δᵢ = 0`, for mini-batch noise.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    name: String,
    hessian: Matrix,
    linear: Vec<f64>,
    a: Matrix,
    b: Vec<f64>,
    x0: Vec<f64>,
    lipschitz: f64,
    f_low: f64,
    x_star: Vec<f64>,
    y_star: Vec<f64>,
    offsets: Vec<Vec<f64>>,
}

impl QuadraticProblem {
    pub fn new(hessian: Matrix, linear: Vec<f64>, a: Matrix, b: Vec<f64>, x0: Vec<f64>) -> Result<Self> {
        let n = hessian.nrows();
        let m = a.nrows();
        for (what, expected, found) in [
            ("hessian columns", n, hessian.ncols()),
            ("linear term", n, linear.len()),
            ("constraint matrix columns", n, a.ncols()),
            ("constraint right-hand side", m, b.len()),
            ("initial point", n, x0.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { what, expected, found });
            }
        }
        if m > n {
            return Err(Error::InvalidDimension { n, m });
        }
        let eig = symmetric_eigenvalues(&hessian);
        if eig.first().is_none_or(|&e| e <= 0.0) {
            return Err(Error::SingularSystem {
                what: "quadratic Hessian (must be positive definite)",
            });
        }
        if !has_full_row_rank(&a) {
            return Err(Error::SingularSystem {
                what: "constraint matrix",
            });
        }
        let lipschitz = eig[eig.len() - 1];
        // KKT point: [[Q, Aᵀ], [A, 0]] (x; y) = (−q; b)
        let neg_b: Vec<f64> = b.iter().map(|v| -v).collect();
        let kkt = KktFactorization::new(&hessian, &a)?;
        let sol = kkt.solve(&linear, &neg_b, 1e-9 * (1.0 + crate::linalg::norm_inf(&linear)))?;
        // unconstrained minimum −½ qᵀQ⁻¹q is a global lower bound
        let unconstrained = crate::linalg::lu_factor(&hessian, 1e-14, "quadratic Hessian")?.solve(&linear);
        let f_low = -0.5 * dot(&linear, &unconstrained);
        Ok(QuadraticProblem {
            name: alloc::format!("quadratic(n={n},m={m})"),
            hessian,
            linear,
            a,
            b,
            x0,
            lipschitz,
            f_low,
            x_star: sol.d,
            y_star: sol.y,
            offsets: Vec::new(),
        })
    }

    /// Splits `f` into `components` terms with random zero-mean linear offsets.
    pub fn with_components(mut self, components: usize, seed: u64) -> Self {
        let n = self.dim();
        let mut rng = substream(seed, PROBLEM_STREAM);
        let mut offsets: Vec<Vec<f64>> = (0..components).map(|_| normal_vec(n, &mut rng)).collect();
        let mut mean = alloc::vec![0.0; n];
        for o in &offsets {
            crate::linalg::axpy(1.0 / components as f64, o, &mut mean);
        }
        for o in &mut offsets {
            crate::linalg::axpy(-1.0, &mean, o);
        }
        self.offsets = offsets;
        self
    }

    /// Analytic KKT point `(x*, y*)`.
    pub fn kkt_point(&self) -> (&[f64], &[f64]) {
        (&self.x_star, &self.y_star)
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constraint_matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }
}

/// Random instance: `Q = U diag(λ) Uᵀ` with `λ ∈ [1, 4]`, Gaussian `q`, `A`,
/// `b`, and `x0 = 3·N(0, I)`.
pub fn make_quadratic(n: usize, m: usize, seed: u64) -> Result<QuadraticProblem> {
    check_dims(n, m)?;
    let mut rng = substream(seed, PROBLEM_STREAM);
    let q = random_spd(n, 1.0, 4.0, &mut rng);
    let linear = normal_vec(n, &mut rng);
    let mut a = normal_matrix(m, n, &mut rng);
    while !has_full_row_rank(&a) {
        a = normal_matrix(m, n, &mut rng);
    }
    let b = normal_vec(m, &mut rng);
    let x0 = normal_vec(n, &mut rng).into_iter().map(|v| 3.0 * v).collect();
    QuadraticProblem::new(q, linear, a, b, x0)
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.hessian.quad_form(x) + dot(&self.linear, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.hessian.mul_vec(x);
        crate::linalg::axpy(1.0, &self.linear, &mut g);
        g
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        crate::linalg::sub(&self.a.mul_vec(x), &self.b)
    }

    fn jacobian(&self, _x: &[f64]) -> Matrix {
        self.a.clone()
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn gamma(&self) -> f64 {
        0.0
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn f_low(&self) -> Option<f64> {
        Some(self.f_low)
    }

    fn lagrangian_hessian(&self, _x: &[f64], _y: &[f64]) -> Option<Matrix> {
        Some(self.hessian.clone())
    }

    fn num_components(&self) -> Option<usize> {
        (!self.offsets.is_empty()).then_some(self.offsets.len())
    }

    fn component_gradient(&self, index: usize, x: &[f64]) -> Option<Vec<f64>> {
        let offset = self.offsets.get(index)?;
        let mut g = self.gradient(x);
        crate::linalg::axpy(1.0, offset, &mut g);
        Some(g)
    }
}
