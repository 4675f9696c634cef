//! Exact ℓ1 merit function `φ(x, τ) = τ f(x) + ‖c(x)‖₁`, the model reduction
//! `Δq`, and the adaptive updates of `τ` and `ξ`.

use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm1, Matrix};
use crate::problem::Problem;

/// A real number or `+∞`. Comparisons never go through a float sentinel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    /// Lossy view for serialization and plotting.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn min_real(self, other: f64) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v.min(other),
            ExtendedReal::Infinite => other,
        }
    }

    /// `value ≤ self`
    pub fn ge_real(self, value: f64) -> bool {
        match self {
            ExtendedReal::Finite(v) => value <= v,
            ExtendedReal::Infinite => true,
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use ExtendedReal::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.partial_cmp(b),
            (Finite(_), Infinite) => Some(Ordering::Less),
            (Infinite, Finite(_)) => Some(Ordering::Greater),
            (Infinite, Infinite) => Some(Ordering::Equal),
        }
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtendedReal::Infinite
        } else {
            ExtendedReal::Finite(v)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeritParams {
    pub sigma: f64,
    pub eps_tau: f64,
    pub eps_xi: f64,
    /// `τ₋₁`
    pub tau_init: f64,
    /// `ξ₋₁`
    pub xi_init: f64,
}

impl Default for MeritParams {
    fn default() -> Self {
        MeritParams {
            sigma: 0.5,
            eps_tau: 0.1,
            eps_xi: 0.1,
            tau_init: 1.0,
            xi_init: 1.0,
        }
    }
}

impl MeritParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("sigma", self.sigma),
            ("eps_tau", self.eps_tau),
            ("eps_xi", self.eps_xi),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(field, alloc::format!("must lie in (0, 1), got {v}")));
            }
        }
        for (field, v) in [("tau_init", self.tau_init), ("xi_init", self.xi_init)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    field,
                    alloc::format!("must be positive and finite, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Running `τ`, `ξ` and how many times each has strictly decreased.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeritState {
    pub tau: f64,
    pub xi: f64,
    pub s_count: usize,
    pub r_count: usize,
}

impl MeritState {
    pub fn new(params: &MeritParams) -> Self {
        MeritState {
            tau: params.tau_init,
            xi: params.xi_init,
            s_count: 0,
            r_count: 0,
        }
    }

    /// Keeps `τ` when `τ ≤ τ_trial`, otherwise sets `τ ← (1 − ε_τ) τ_trial`.
    pub fn update_tau(&mut self, tau_trial: ExtendedReal, eps_tau: f64) -> Result<(f64, bool)> {
        let trial = match tau_trial {
            ExtendedReal::Finite(t) if self.tau > t => t,
            _ => return Ok((self.tau, false)),
        };
        let tau = (1.0 - eps_tau) * trial;
        if !(tau > 0.0) {
            return Err(Error::NonPositiveTau { tau });
        }
        self.tau = tau;
        self.s_count += 1;
        Ok((tau, true))
    }

    /// Keeps `ξ` when `ξ ≤ ξ_trial`, otherwise sets `ξ ← (1 − ε_ξ) ξ_trial`.
    pub fn update_xi(&mut self, xi_trial: f64, eps_xi: f64) -> Result<(f64, bool)> {
        if self.xi <= xi_trial {
            return Ok((self.xi, false));
        }
        let xi = (1.0 - eps_xi) * xi_trial;
        if !(xi > 0.0) {
            return Err(Error::NonPositiveXi { xi });
        }
        self.xi = xi;
        self.r_count += 1;
        Ok((xi, true))
    }
}

pub fn phi<P: Problem + ?Sized>(problem: &P, x: &[f64], tau: f64) -> f64 {
    merit_value(tau, problem.objective(x), norm1(&problem.constraints(x)))
}

pub fn merit_value(tau: f64, f: f64, c_norm1: f64) -> f64 {
    tau * f + c_norm1
}

/// `Δq = −τ(gᵀd + ½ max{dᵀHd, 0}) + ‖c‖₁`
pub fn delta_q(tau: f64, g: &[f64], h: &Matrix, d: &[f64], c_norm1: f64) -> f64 {
    delta_q_from_products(tau, dot(g, d), h.quad_form(d), c_norm1)
}

pub fn delta_q_from_products(tau: f64, gtd: f64, dhd: f64, c_norm1: f64) -> f64 {
    -tau * (gtd + 0.5 * dhd.max(0.0)) + c_norm1
}

/// `∞` when `gᵀd + max{dᵀHd, 0} ≤ 0`, else `(1 − σ)‖c‖₁ / (gᵀd + max{dᵀHd, 0})`.
pub fn tau_trial(g: &[f64], d: &[f64], h: &Matrix, c_norm1: f64, sigma: f64) -> ExtendedReal {
    tau_trial_from_products(dot(g, d), h.quad_form(d), c_norm1, sigma)
}

pub fn tau_trial_from_products(gtd: f64, dhd: f64, c_norm1: f64, sigma: f64) -> ExtendedReal {
    let denom = gtd + dhd.max(0.0);
    // With c = 0 the numerator vanishes; a positive denominator there is
    // rounding noise around gᵀd = −dᵀHd and must not collapse τ to zero.
    if denom <= 0.0 || c_norm1 == 0.0 {
        ExtendedReal::Infinite
    } else {
        ExtendedReal::Finite((1.0 - sigma) * c_norm1 / denom)
    }
}

/// `ξ_trial = Δq / (τ ‖d‖²)`
pub fn xi_trial(delta_q: f64, tau: f64, d_norm_sq: f64) -> Result<f64> {
    if d_norm_sq == 0.0 {
        return Err(Error::DivisionByZero {
            what: "xi_trial (d = 0)",
        });
    }
    Ok(delta_q / (tau * d_norm_sq))
}
