use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::problem::Problem;

/// Half-width of the box `[−1.5, 1.5]²` on which `L` and `Γ` hold.
pub const BOX_HALF_WIDTH: f64 = 1.5;

/// `f(x) = 100(x₂ − x₁²)² + (1 − x₁)²` subject to `x₁² + x₂² = 1`.
///
/// `∇²f = [[1200x₁² − 400x₂ + 2, −400x₁], [−400x₁, 200]]`; on the box the
/// largest Gershgorin row bound is `3302 + 600 = 3902`, so `L = 3902`.
/// `∇c = 2x` gives `Γ = 2` everywhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct RosenbrockSphere;

pub fn make_rosenbrock_sphere() -> RosenbrockSphere {
    RosenbrockSphere
}

impl Problem for RosenbrockSphere {
    fn name(&self) -> &str {
        "rosenbrock_sphere"
    }

    fn dim(&self) -> usize {
        2
    }

    fn num_constraints(&self) -> usize {
        1
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let a = x[1] - x[0] * x[0];
        let b = 1.0 - x[0];
        100.0 * a * a + b * b
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let a = x[1] - x[0] * x[0];
        vec![-400.0 * x[0] * a - 2.0 * (1.0 - x[0]), 200.0 * a]
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0] * x[0] + x[1] * x[1] - 1.0]
    }

    fn jacobian(&self, x: &[f64]) -> Matrix {
        Matrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])
    }

    fn lipschitz(&self) -> f64 {
        3902.0
    }

    fn gamma(&self) -> f64 {
        2.0
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![-1.2, 1.0]
    }

    fn f_low(&self) -> Option<f64> {
        Some(0.0)
    }

    fn lagrangian_hessian(&self, x: &[f64], y: &[f64]) -> Option<Matrix> {
        let off = -400.0 * x[0];
        Some(Matrix::from_row_slice(
            2,
            2,
            &[
                1200.0 * x[0] * x[0] - 400.0 * x[1] + 2.0 + 2.0 * y[0],
                off,
                off,
                200.0 + 2.0 * y[0],
            ],
        ))
    }

    fn valid_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![-BOX_HALF_WIDTH; 2], vec![BOX_HALF_WIDTH; 2]))
    }
}
