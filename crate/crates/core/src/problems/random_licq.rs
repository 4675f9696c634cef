use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::kkt::has_full_row_rank;
use crate::linalg::{axpy, dot, symmetric_eigenvalues, symmetric_spectral_norm, Matrix};
use crate::problem::Problem;
use crate::rng::{child_seed, substream, PROBLEM_STREAM};

use super::{check_dims, normal_matrix, normal_vec, random_spd, random_symmetric};

const COSINE_TERMS: usize = 3;
const CURVATURE: f64 = 0.1;
const MAX_DRAWS: u64 = 64;

/// `f(x) = ½xᵀQx + qᵀx + Σⱼ aⱼ cos(wⱼᵀx)` subject to
/// `cᵢ(x) = aᵢᵀx + ½ρ xᵀDᵢx − bᵢ = 0`.
///
/// `L = λmax(Q) + Σ|aⱼ|‖wⱼ‖²` and `Γ = ρ Σ‖Dᵢ‖₂` hold globally.
#[derive(Clone, Debug)]
pub struct RandomLicqProblem {
    name: String,
    q: Matrix,
    linear: Vec<f64>,
    amplitudes: Vec<f64>,
    frequencies: Vec<Vec<f64>>,
    a: Matrix,
    curvatures: Vec<Matrix>,
    b: Vec<f64>,
    x0: Vec<f64>,
    lipschitz: f64,
    gamma: f64,
    f_low: f64,
}

/// Randomized smooth instance whose Jacobian has full row rank at `x0`.
/// Draws are repeated from derived seeds until that holds.
pub fn make_random_licq(n: usize, m: usize, seed: u64) -> Result<RandomLicqProblem> {
    check_dims(n, m)?;
    let mut last = None;
    for attempt in 0..MAX_DRAWS {
        let s = if attempt == 0 { seed } else { child_seed(seed, attempt) };
        let p = draw(n, m, s)?;
        if has_full_row_rank(&p.jacobian(&p.x0)) {
            return Ok(p);
        }
        last = Some(p);
    }
    // a Gaussian draw is rank deficient with probability zero
    Ok(last.expect("at least one draw"))
}

fn draw(n: usize, m: usize, seed: u64) -> Result<RandomLicqProblem> {
    let mut rng = substream(seed, PROBLEM_STREAM);
    let q = random_spd(n, 1.0, 4.0, &mut rng);
    let linear = normal_vec(n, &mut rng);
    let amplitudes: Vec<f64> = (0..COSINE_TERMS).map(|_| rng.random_range(-0.5..=0.5)).collect();
    let frequencies: Vec<Vec<f64>> = (0..COSINE_TERMS)
        .map(|_| {
            normal_vec(n, &mut rng)
                .into_iter()
                .map(|v| v / libm::sqrt(n as f64))
                .collect()
        })
        .collect();
    let a = normal_matrix(m, n, &mut rng);
    let curvatures: Vec<Matrix> = (0..m).map(|_| random_symmetric(n, &mut rng)).collect();
    let b = normal_vec(m, &mut rng);
    let x0 = normal_vec(n, &mut rng);

    let eig = symmetric_eigenvalues(&q);
    let lipschitz = eig[n - 1]
        + amplitudes
            .iter()
            .zip(&frequencies)
            .map(|(a, w)| a.abs() * dot(w, w))
            .sum::<f64>();
    let gamma = CURVATURE * curvatures.iter().map(symmetric_spectral_norm).sum::<f64>();
    let unconstrained = crate::linalg::lu_factor(&q, 1e-14, "quadratic part")?.solve(&linear);
    let f_low = -0.5 * dot(&linear, &unconstrained) - amplitudes.iter().map(|a| a.abs()).sum::<f64>();
    Ok(RandomLicqProblem {
        name: alloc::format!("random_licq(n={n},m={m},seed={seed})"),
        q,
        linear,
        amplitudes,
        frequencies,
        a,
        curvatures,
        b,
        x0,
        lipschitz,
        gamma,
        f_low,
    })
}

impl Problem for RandomLicqProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let waves: f64 = self
            .amplitudes
            .iter()
            .zip(&self.frequencies)
            .map(|(a, w)| a * libm::cos(dot(w, x)))
            .sum();
        0.5 * self.q.quad_form(x) + dot(&self.linear, x) + waves
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.q.mul_vec(x);
        axpy(1.0, &self.linear, &mut g);
        for (a, w) in self.amplitudes.iter().zip(&self.frequencies) {
            axpy(-a * libm::sin(dot(w, x)), w, &mut g);
        }
        g
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let ax = self.a.mul_vec(x);
        (0..self.num_constraints())
            .map(|i| ax[i] + 0.5 * CURVATURE * self.curvatures[i].quad_form(x) - self.b[i])
            .collect()
    }

    fn jacobian(&self, x: &[f64]) -> Matrix {
        let (m, n) = (self.num_constraints(), self.dim());
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut r = self.a.row(i).to_vec();
                axpy(CURVATURE, &self.curvatures[i].mul_vec(x), &mut r);
                r
            })
            .collect();
        debug_assert!(rows.iter().all(|r| r.len() == n));
        Matrix::from_rows(&rows)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn f_low(&self) -> Option<f64> {
        Some(self.f_low)
    }

    fn lagrangian_hessian(&self, x: &[f64], y: &[f64]) -> Option<Matrix> {
        let n = self.dim();
        let mut h = self.q.clone();
        for (a, w) in self.amplitudes.iter().zip(&self.frequencies) {
            let s = -a * libm::cos(dot(w, x));
            h = Matrix::from_fn(n, n, |i, j| h[(i, j)] + s * w[i] * w[j]);
        }
        for (yi, d) in y.iter().zip(&self.curvatures) {
            let s = yi * CURVATURE;
            h = Matrix::from_fn(n, n, |i, j| h[(i, j)] + s * d[(i, j)]);
        }
        Some(h)
    }
}
