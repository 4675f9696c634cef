//! Stochastic gradient oracles.
//!
//! Every model is unbiased. `Gaussian` and `SymmetricBounded` are symmetric
//! about the true gradient; `MiniBatch` averages `b` component gradients drawn
//! uniformly without replacement from a finite-sum objective.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm2};
use crate::problem::Problem;

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    /// Exact gradient.
    None,
    /// `G = ∇f + ε` with isotropic `ε ~ N(0, (M/n) I)`, so `E‖ε‖² = M`.
    Gaussian { variance: f64 },
    /// The Gaussian error above, radially clipped to `‖ε‖ ≤ radius`.
    SymmetricBounded { variance: f64, radius: f64 },
    /// Average of `batch` of the `components` component gradients.
    MiniBatch { components: usize, batch: usize },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Gaussian { variance } => positive("variance", variance),
            NoiseModel::SymmetricBounded { variance, radius } => {
                positive("variance", variance)?;
                positive("radius", radius)
            }
            NoiseModel::MiniBatch { components, batch } => {
                if components == 0 {
                    return Err(Error::config("components", "must be at least 1"));
                }
                if batch == 0 || batch > components {
                    return Err(Error::config("batch", "must lie in 1..=components"));
                }
                Ok(())
            }
        }
    }

    /// Whether `G − ∇f` and `∇f − G` are identically distributed.
    pub fn is_symmetric(&self) -> bool {
        matches!(
            self,
            NoiseModel::None | NoiseModel::Gaussian { .. } | NoiseModel::SymmetricBounded { .. }
        )
    }

    /// `M` with `E‖G − ∇f‖² ≤ M`, when it does not depend on the problem.
    pub fn variance_bound(&self) -> Option<f64> {
        match *self {
            NoiseModel::None => Some(0.0),
            NoiseModel::Gaussian { variance } | NoiseModel::SymmetricBounded { variance, .. } => Some(variance),
            NoiseModel::MiniBatch { .. } => None,
        }
    }

    /// Smallest `M` with `E exp(‖G − ∇f‖²/M) ≤ e` in dimension `dim`.
    ///
    /// For the isotropic Gaussian with per-coordinate variance `s²` the moment
    /// generating function of `χ²` gives `M = 2s² / (1 − e^{−2/n})`; clipping
    /// to a radius `r` can only shrink the norm, and also gives `M ≤ r²`.
    pub fn subgaussian_parameter(&self, dim: usize) -> Option<f64> {
        let gaussian = |variance: f64| {
            let n = dim as f64;
            2.0 * (variance / n) / (1.0 - libm::exp(-2.0 / n))
        };
        match *self {
            NoiseModel::Gaussian { variance } => Some(gaussian(variance)),
            NoiseModel::SymmetricBounded { variance, radius } => Some(gaussian(variance).min(radius * radius)),
            NoiseModel::None | NoiseModel::MiniBatch { .. } => None,
        }
    }

    /// One draw of `G − ∇f` for the additive models. `MiniBatch` errors
    /// depend on the problem and are not available here.
    pub fn sample_error<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            NoiseModel::None => Ok(alloc::vec![0.0; dim]),
            NoiseModel::Gaussian { variance } => Ok(gaussian_vector(dim, variance, rng)),
            NoiseModel::SymmetricBounded { variance, radius } => {
                let mut e = gaussian_vector(dim, variance, rng);
                let norm = norm2(&e);
                if norm > radius {
                    let s = radius / norm;
                    e.iter_mut().for_each(|v| *v *= s);
                }
                Ok(e)
            }
            NoiseModel::MiniBatch { .. } => Err(Error::Unsupported {
                what: "additive error samples for mini-batch noise",
            }),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, "must be positive and finite"))
    }
}

fn gaussian_vector<R: Rng + ?Sized>(dim: usize, variance: f64, rng: &mut R) -> Vec<f64> {
    let sd = libm::sqrt(variance / dim as f64);
    (0..dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draws one stochastic gradient `G` at `x`.
pub fn sample_gradient<P, R>(problem: &P, noise: &NoiseModel, x: &[f64], rng: &mut R) -> Result<Vec<f64>>
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    match *noise {
        NoiseModel::None => Ok(problem.gradient(x)),
        NoiseModel::Gaussian { .. } | NoiseModel::SymmetricBounded { .. } => {
            let mut g = problem.gradient(x);
            let e = noise.sample_error(g.len(), rng)?;
            axpy(1.0, &e, &mut g);
            Ok(g)
        }
        NoiseModel::MiniBatch { components, batch } => {
            check_components(problem, components)?;
            if batch == components {
                // full batch is the exact average
                return Ok(problem.gradient(x));
            }
            let mut g = alloc::vec![0.0; problem.dim()];
            for i in rand::seq::index::sample(rng, components, batch).iter() {
                let gi = problem.component_gradient(i, x).ok_or(Error::Unsupported {
                    what: "component gradients",
                })?;
                axpy(1.0 / batch as f64, &gi, &mut g);
            }
            Ok(g)
        }
    }
}

fn check_components<P: Problem + ?Sized>(problem: &P, components: usize) -> Result<()> {
    match problem.num_components() {
        Some(n) if n == components => Ok(()),
        Some(n) => Err(Error::DimensionMismatch {
            what: "mini-batch components",
            expected: n,
            found: components,
        }),
        None => Err(Error::Unsupported {
            what: "finite-sum structure for mini-batch noise",
        }),
    }
}

/// Exact `E‖G − ∇f(x)‖²` for a mini-batch of size `batch` drawn without
/// replacement: `(N−b)/(b(N−1)) · (1/N) Σ ‖∇fᵢ(x) − ∇f(x)‖²`.
pub fn minibatch_variance<P: Problem + ?Sized>(problem: &P, x: &[f64], batch: usize) -> Result<f64> {
    let n = problem.num_components().ok_or(Error::Unsupported {
        what: "finite-sum structure",
    })?;
    if batch == 0 || batch > n {
        return Err(Error::config("batch", "must lie in 1..=components"));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let g = problem.gradient(x);
    let mut spread = 0.0;
    for i in 0..n {
        let gi = problem.component_gradient(i, x).ok_or(Error::Unsupported {
            what: "component gradients",
        })?;
        spread += gi.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    spread /= n as f64;
    let (nf, bf) = (n as f64, batch as f64);
    Ok((nf - bf) / (bf * (nf - 1.0)) * spread)
}
