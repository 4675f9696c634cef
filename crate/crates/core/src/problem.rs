//! Smooth equality-constrained problems `min f(x) s.t. c(x) = 0`.

use alloc::vec::Vec;

use crate::linalg::{norm_inf, Matrix};

/// Oracles and metadata for one problem instance.
///
/// Lipschitz constants are inputs to the stepsize rule; they are never
/// estimated. `L` bounds the Lipschitz constant of `∇f` and `Γ` is at least the
/// sum of the Lipschitz constants of the constraint gradients, on the region
/// reported by [`Problem::valid_box`] (or globally when that is `None`).
pub trait Problem {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn constraints(&self, x: &[f64]) -> Vec<f64>;
    /// `m × n` Jacobian of `c`.
    fn jacobian(&self, x: &[f64]) -> Matrix;
    /// `L`
    fn lipschitz(&self) -> f64;
    /// `Γ`
    fn gamma(&self) -> f64;
    fn initial_point(&self) -> Vec<f64>;

    fn f_low(&self) -> Option<f64> {
        None
    }

    /// `∇²f(x) + Σ yᵢ ∇²cᵢ(x)` when available.
    fn lagrangian_hessian(&self, _x: &[f64], _y: &[f64]) -> Option<Matrix> {
        None
    }

    /// Number of terms when `f` is a finite average `(1/N) Σ fᵢ`.
    fn num_components(&self) -> Option<usize> {
        None
    }

    fn component_gradient(&self, _index: usize, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Box on which the Lipschitz metadata is valid; `None` means global.
    fn valid_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

impl<P: Problem + ?Sized> Problem for alloc::boxed::Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn num_constraints(&self) -> usize {
        (**self).num_constraints()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (**self).objective(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        (**self).constraints(x)
    }
    fn jacobian(&self, x: &[f64]) -> Matrix {
        (**self).jacobian(x)
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn gamma(&self) -> f64 {
        (**self).gamma()
    }
    fn initial_point(&self) -> Vec<f64> {
        (**self).initial_point()
    }
    fn f_low(&self) -> Option<f64> {
        (**self).f_low()
    }
    fn lagrangian_hessian(&self, x: &[f64], y: &[f64]) -> Option<Matrix> {
        (**self).lagrangian_hessian(x, y)
    }
    fn num_components(&self) -> Option<usize> {
        (**self).num_components()
    }
    fn component_gradient(&self, index: usize, x: &[f64]) -> Option<Vec<f64>> {
        (**self).component_gradient(index, x)
    }
    fn valid_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        (**self).valid_box()
    }
}

pub fn in_box(x: &[f64], bounds: &(Vec<f64>, Vec<f64>)) -> bool {
    x.iter()
        .zip(bounds.0.iter().zip(&bounds.1))
        .all(|(v, (lo, hi))| lo <= v && v <= hi)
}

/// Worst central-difference discrepancy of the gradient and of the Jacobian
/// (∞-norm over all coordinate directions) at `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeCheck {
    pub gradient_error: f64,
    pub jacobian_error: f64,
}

pub fn check_derivatives<P: Problem + ?Sized>(problem: &P, x: &[f64], h: f64) -> DerivativeCheck {
    let n = problem.dim();
    let g = problem.gradient(x);
    let jac = problem.jacobian(x);
    let mut gradient_error = 0.0f64;
    let mut jacobian_error = 0.0f64;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        let fd = (problem.objective(&xp) - problem.objective(&xm)) / (2.0 * h);
        gradient_error = gradient_error.max((fd - g[i]).abs());
        let cp = problem.constraints(&xp);
        let cm = problem.constraints(&xm);
        let col: Vec<f64> = cp
            .iter()
            .zip(&cm)
            .enumerate()
            .map(|(r, (a, b))| (a - b) / (2.0 * h) - jac[(r, i)])
            .collect();
        jacobian_error = jacobian_error.max(norm_inf(&col));
        xp[i] = x[i];
        xm[i] = x[i];
    }
    DerivativeCheck {
        gradient_error,
        jacobian_error,
    }
}
