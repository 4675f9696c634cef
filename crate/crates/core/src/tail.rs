//! Concentration-bound formulas and Monte Carlo checks of the results they
//! come from: the Chernoff threshold `ℓ(s, δ)`, the union-bound correction
//! `δ̂`, the capped Bernoulli process, the symmetric-noise probability `p_τ`,
//! and the sub-Gaussian maximum bound.

use alloc::vec::Vec;

use num_bigint::BigUint;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kkt::{has_full_row_rank, KktFactorization};
use crate::linalg::{dot, norm2, Matrix};
use crate::noise::{sample_gradient, NoiseModel};
use crate::problem::Problem;

/// Exact binomial sums are used up to these sizes, log-domain sums beyond.
pub const EXACT_K_MAX: usize = 1_000_000;
pub const EXACT_S_MAX: usize = 60;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

/// `ℓ(s, δ̂) = s + log(1/δ̂) + √(log(1/δ̂)² + 2s log(1/δ̂))`
pub fn ell(s: usize, delta_hat: f64) -> Result<f64> {
    check_delta(delta_hat)?;
    Ok(ell_from_log(s, -libm::log(delta_hat)))
}

/// [`ell`] given `log(1/δ̂)` directly, for `δ̂` below `f64` range.
pub fn ell_from_log(s: usize, log_inv: f64) -> f64 {
    let s = s as f64;
    s + log_inv + libm::sqrt(log_inv * log_inv + 2.0 * s * log_inv)
}

/// `Σ_{j=0}^{max{s_max−1, 0}} C(k_max, j)` exactly.
pub fn binomial_prefix_sum(k_max: usize, s_max: usize) -> BigUint {
    let top = s_max.saturating_sub(1).min(k_max);
    let mut term = BigUint::from(1u32);
    let mut sum = term.clone();
    for j in 0..top {
        term = term * BigUint::from(k_max - j) / BigUint::from(j + 1);
        sum += &term;
    }
    sum
}

fn ln_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 63 {
        let small: u64 = v.iter_u64_digits().next().unwrap_or(0);
        return libm::log(small as f64);
    }
    let shift = bits - 63;
    let top: u64 = (v >> shift).iter_u64_digits().next().unwrap_or(0);
    libm::log(top as f64) + shift as f64 * core::f64::consts::LN_2
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `log Σ_{j=0}^{max{s_max−1,0}} C(k_max, j)`
pub fn log_binomial_prefix_sum(k_max: usize, s_max: usize) -> f64 {
    if k_max <= EXACT_K_MAX && s_max <= EXACT_S_MAX {
        return ln_biguint(&binomial_prefix_sum(k_max, s_max));
    }
    let top = s_max.saturating_sub(1).min(k_max);
    let logs: Vec<f64> = (0..=top).map(|j| ln_binomial(k_max, j)).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peak + libm::log(logs.iter().map(|l| libm::exp(l - peak)).sum::<f64>())
}

/// `log(1/δ̂)` with `δ̂ = δ / Σ_{j=0}^{max{s_max−1,0}} C(k_max, j)`.
pub fn log_inv_hat_delta(delta: f64, s_max: usize, k_max: usize) -> Result<f64> {
    check_delta(delta)?;
    Ok(-libm::log(delta) + log_binomial_prefix_sum(k_max, s_max))
}

/// `δ̂ = δ / Σ_{j=0}^{max{s_max−1,0}} C(k_max, j)`; may underflow to zero for
/// large `s_max`, in which case use [`log_inv_hat_delta`].
pub fn hat_delta(delta: f64, s_max: usize, k_max: usize) -> Result<f64> {
    check_delta(delta)?;
    if s_max <= 1 {
        return Ok(delta);
    }
    Ok(libm::exp(-log_inv_hat_delta(delta, s_max, k_max)?))
}

/// `min{k_max + 1, ⌈log(τ_min/τ₋₁) / log(1 − ε_τ)⌉}`
pub fn smax_bound(tau_min: f64, tau_init: f64, eps_tau: f64, k_max: usize) -> Result<usize> {
    if !(tau_min > 0.0 && tau_min <= tau_init && tau_init.is_finite()) {
        return Err(Error::InvalidRange(alloc::format!(
            "need 0 < tau_min <= tau_init, got tau_min={tau_min}, tau_init={tau_init}"
        )));
    }
    if !(eps_tau > 0.0 && eps_tau < 1.0) {
        return Err(Error::InvalidRange(alloc::format!(
            "eps_tau must lie in (0, 1), got {eps_tau}"
        )));
    }
    let raw = libm::ceil(libm::log(tau_min / tau_init) / libm::log(1.0 - eps_tau));
    Ok(clamp_count(raw, k_max))
}

fn clamp_count(raw: f64, k_max: usize) -> usize {
    let cap = k_max + 1;
    if raw <= 0.0 {
        0
    } else if raw >= cap as f64 {
        cap
    } else {
        raw as usize
    }
}

/// Successes out of independent Bernoulli trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyEstimate {
    pub trials: usize,
    pub successes: usize,
}

impl FrequencyEstimate {
    pub fn frequency(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.successes as f64 / self.trials as f64
    }

    /// `√(p(1−p)/trials)`, evaluated at a reference probability `p`.
    pub fn standard_error_at(&self, p: f64) -> f64 {
        libm::sqrt(p * (1.0 - p) / self.trials.max(1) as f64)
    }

    /// Standard error at the estimated frequency.
    pub fn standard_error(&self) -> f64 {
        self.standard_error_at(self.frequency())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChernoffCheck {
    pub mu: f64,
    pub ell: f64,
    /// `Σ p_j ≥ ℓ(s, δ)`; without it the result is informational only.
    pub precondition_met: bool,
    pub tail: FrequencyEstimate,
    /// `δ + 3√(δ(1−δ)/trials)`
    pub threshold: f64,
}

impl ChernoffCheck {
    pub fn empirical_tail(&self) -> f64 {
        self.tail.frequency()
    }

    pub fn passes(&self) -> bool {
        !self.precondition_met || self.empirical_tail() <= self.threshold
    }
}

/// Empirical `P[Σ Z_j ≤ s]` for independent `Z_j ~ Bernoulli(p_j)`.
pub fn mc_chernoff_check<R: Rng + ?Sized>(
    probs: &[f64],
    s: usize,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<ChernoffCheck> {
    check_delta(delta)?;
    check_probs(probs.iter().copied())?;
    let mu: f64 = probs.iter().sum();
    let ell = ell(s, delta)?;
    let mut hits = 0;
    for _ in 0..trials {
        let mut count = 0usize;
        for &p in probs {
            if bernoulli(p, rng) {
                count += 1;
                if count > s {
                    break;
                }
            }
        }
        if count <= s {
            hits += 1;
        }
    }
    Ok(ChernoffCheck {
        mu,
        ell,
        precondition_met: chernoff_precondition(mu, ell),
        tail: FrequencyEstimate {
            trials,
            successes: hits,
        },
        threshold: delta + 3.0 * libm::sqrt(delta * (1.0 - delta) / trials.max(1) as f64),
    })
}

/// `μ ≥ ℓ`, allowing for rounding when `μ` was set to `ℓ` itself.
pub fn chernoff_precondition(mu: f64, ell: f64) -> bool {
    mu >= ell * (1.0 - 1e-12)
}

fn check_probs(probs: impl Iterator<Item = f64>) -> Result<()> {
    for p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidRange(alloc::format!("probability {p} outside [0, 1]")));
        }
    }
    Ok(())
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    // exact at the endpoints
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CappedProcessResult {
    pub trials: usize,
    /// `ℓ(s_max, δ̂) + 1`
    pub bound: f64,
    /// Trials whose accumulated in-force probability stayed within `bound`.
    pub bound_holds: usize,
    /// Trials with more than `s_max` successes (zero by construction).
    pub count_exceeds: usize,
    pub max_successes: usize,
    pub max_probability_sum: f64,
}

impl CappedProcessResult {
    pub fn freq_bound_holds(&self) -> f64 {
        self.bound_holds as f64 / self.trials.max(1) as f64
    }

    pub fn freq_count_exceeds(&self) -> f64 {
        self.count_exceeds as f64 / self.trials.max(1) as f64
    }
}

/// Simulates `Z_k ~ Bernoulli(p_k)` for `k = 0..=k_max`, with the success
/// probability forced to zero once `s_max` successes have occurred, and
/// accumulates the probabilities actually in force.
pub fn simulate_capped_process<F, R>(
    prob_schedule: F,
    s_max: usize,
    k_max: usize,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<CappedProcessResult>
where
    F: Fn(usize) -> f64,
    R: Rng + ?Sized,
{
    check_delta(delta)?;
    if s_max > k_max + 1 {
        return Err(Error::InvalidRange(alloc::format!(
            "s_max = {s_max} exceeds k_max + 1 = {}",
            k_max + 1
        )));
    }
    let probs: Vec<f64> = (0..=k_max).map(&prob_schedule).collect();
    check_probs(probs.iter().copied())?;
    let bound = ell_from_log(s_max, log_inv_hat_delta(delta, s_max, k_max)?) + 1.0;
    let mut result = CappedProcessResult {
        trials,
        bound,
        bound_holds: 0,
        count_exceeds: 0,
        max_successes: 0,
        max_probability_sum: 0.0,
    };
    for _ in 0..trials {
        let mut successes = 0usize;
        let mut in_force = 0.0;
        for &p in &probs {
            if successes >= s_max {
                break;
            }
            in_force += p;
            if bernoulli(p, rng) {
                successes += 1;
            }
        }
        if in_force <= bound {
            result.bound_holds += 1;
        }
        if successes > s_max {
            result.count_exceeds += 1;
        }
        result.max_successes = result.max_successes.max(successes);
        result.max_probability_sum = result.max_probability_sum.max(in_force);
    }
    Ok(result)
}

/// Estimates `P[GᵀD + max{DᵀHD,0} ≥ ∇fᵀd_true + max{d_trueᵀHd_true,0}]` at a
/// fixed `(x, H)` by redrawing `G` and re-solving with one factorization.
pub fn mc_ptau_symmetric<P, R>(
    problem: &P,
    x: &[f64],
    hessian: &Matrix,
    noise: &NoiseModel,
    trials: usize,
    rng: &mut R,
) -> Result<FrequencyEstimate>
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    let jac = problem.jacobian(x);
    if !has_full_row_rank(&jac) {
        return Err(Error::SingularSystem {
            what: "constraint Jacobian (rank deficient)",
        });
    }
    let fact = KktFactorization::new(hessian, &jac)?;
    let grad = problem.gradient(x);
    let c = problem.constraints(x);
    let tol = 1e-8 * (1.0 + grad.iter().chain(&c).fold(0.0f64, |m, v| m.max(v.abs())));
    let truth = fact.solve(&grad, &c, tol)?;
    let reference = dot(&grad, &truth.d) + hessian.quad_form(&truth.d).max(0.0);
    let mut successes = 0;
    for _ in 0..trials {
        let g = sample_gradient(problem, noise, x, rng)?;
        let sol = fact.solve(&g, &c, tol * (1.0 + norm2(&g)))?;
        if dot(&g, &sol.d) + hessian.quad_form(&sol.d).max(0.0) >= reference {
            successes += 1;
        }
    }
    Ok(FrequencyEstimate { trials, successes })
}

/// `√(M(1 + log((k_max+1)/δ)))`
pub fn subgaussian_max_threshold(m: f64, k_max: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(m > 0.0) {
        return Err(Error::InvalidConstant { name: "M", value: m });
    }
    Ok(libm::sqrt(m * (1.0 + libm::log((k_max + 1) as f64 / delta))))
}

/// Frequency over trials that `max_{k ≤ k_max} ‖G_k − ∇f‖` stays within
/// [`subgaussian_max_threshold`].
pub fn mc_subgaussian_max<R: Rng + ?Sized>(
    noise: &NoiseModel,
    dim: usize,
    m: f64,
    k_max: usize,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<FrequencyEstimate> {
    let threshold = subgaussian_max_threshold(m, k_max, delta)?;
    let mut successes = 0;
    for _ in 0..trials {
        let mut ok = true;
        for _ in 0..=k_max {
            if norm2(&noise.sample_error(dim, rng)?) > threshold {
                ok = false;
                break;
            }
        }
        if ok {
            successes += 1;
        }
    }
    Ok(FrequencyEstimate { trials, successes })
}

/// Inputs to the `τ_min` / `s_max` formula under sub-Gaussian symmetric noise.
/// `kappa_v` and `kappa_c` are problem constants supplied by the caller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauMinConstants {
    pub kappa_v: f64,
    pub kappa_g: f64,
    pub kappa_h: f64,
    pub zeta: f64,
    pub kappa_c: f64,
    pub m: f64,
    pub k_max: usize,
    pub delta: f64,
    pub sigma: f64,
    pub eps_tau: f64,
    pub tau_init: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauMinBound {
    pub kappa_tau_min: f64,
    /// `M_τ = √(M(1 + log((k_max+1)/δ)))`
    pub m_tau: f64,
    pub tau_min: f64,
    pub s_max: usize,
}

/// `κ = κ_v(κ_g + S + (κ_H/ζ)(S + κ_g + ζ + κ_H κ_v κ_c))` with
/// `S = √(M(1 + log((k_max+1)/δ)))`, then `τ_min = (1−σ)(1−ε_τ)/κ` and
/// `s_max = min{k_max+1, ⌈log(τ₋₁κ/((1−σ)(1−ε_τ))) / log(1/(1−ε_τ))⌉}`.
pub fn eval_tau_min_formula(k: &TauMinConstants) -> Result<TauMinBound> {
    for (name, value) in [
        ("kappa_v", k.kappa_v),
        ("kappa_g", k.kappa_g),
        ("kappa_H", k.kappa_h),
        ("zeta", k.zeta),
        ("kappa_c", k.kappa_c),
        ("M", k.m),
        ("tau_init", k.tau_init),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidConstant { name, value });
        }
    }
    for (name, value) in [("sigma", k.sigma), ("eps_tau", k.eps_tau)] {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::InvalidConstant { name, value });
        }
    }
    let m_tau = subgaussian_max_threshold(k.m, k.k_max, k.delta)?;
    let kappa_tau_min = k.kappa_v
        * (k.kappa_g + m_tau + (k.kappa_h / k.zeta) * (m_tau + k.kappa_g + k.zeta + k.kappa_h * k.kappa_v * k.kappa_c));
    let shrink = (1.0 - k.sigma) * (1.0 - k.eps_tau);
    let tau_min = shrink / kappa_tau_min;
    let raw = libm::ceil(libm::log(k.tau_init * kappa_tau_min / shrink) / libm::log(1.0 / (1.0 - k.eps_tau)));
    Ok(TauMinBound {
        kappa_tau_min,
        m_tau,
        tau_min,
        s_max: clamp_count(raw, k.k_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ell_examples() {
        let l = libm::log(10.0);
        assert_relative_eq!(ell(0, 0.1).unwrap(), 2.0 * l);
        assert_relative_eq!(ell(3, 0.1).unwrap(), 9.674_93, epsilon = 1e-5);
        assert_relative_eq!(ell(1, 0.1).unwrap(), 6.450_13, epsilon = 1e-5);
        assert!(matches!(ell(1, 1.0), Err(Error::InvalidDelta(_))));
    }

    #[test]
    fn hat_delta_examples() {
        assert_eq!(hat_delta(0.1, 0, 50).unwrap(), 0.1);
        assert_eq!(hat_delta(0.1, 1, 50).unwrap(), 0.1);
        assert_relative_eq!(hat_delta(0.1, 3, 10).unwrap(), 0.1 / 56.0, max_relative = 1e-14);
        assert_eq!(binomial_prefix_sum(10, 3), BigUint::from(56u32));
    }

    #[test]
    fn log_domain_fallback_agrees_with_exact() {
        // both paths at a size where the exact sum is still cheap
        let exact = ln_biguint(&binomial_prefix_sum(2000, 80));
        let logs: Vec<f64> = (0..80).map(|j| ln_binomial(2000, j)).collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let approx = peak + libm::log(logs.iter().map(|l| libm::exp(l - peak)).sum::<f64>());
        assert_relative_eq!(exact, approx, max_relative = 1e-10);
    }

    #[test]
    fn smax_examples() {
        assert_eq!(smax_bound(1.0, 1.0, 0.1, 10).unwrap(), 0);
        assert_eq!(smax_bound(0.01, 1.0, 0.1, 1_000_000).unwrap(), 44);
        assert_eq!(smax_bound(0.01, 1.0, 0.1, 10).unwrap(), 11);
        assert!(matches!(smax_bound(2.0, 1.0, 0.1, 10), Err(Error::InvalidRange(_))));
    }

    #[test]
    fn chernoff_trivial_cases() {
        let mut rng = substream(1, 0);
        let r = mc_chernoff_check(&[1.0; 5], 3, 0.1, 100, &mut rng).unwrap();
        assert_eq!(r.empirical_tail(), 0.0);
        let r = mc_chernoff_check(&[0.5; 5], 5, 0.1, 100, &mut rng).unwrap();
        assert_eq!(r.empirical_tail(), 1.0);
        assert!(!r.precondition_met);
        assert!(r.passes());
    }

    #[test]
    fn capped_trivial_cases() {
        let mut rng = substream(2, 0);
        let r = simulate_capped_process(|_| 0.0, 3, 50, 0.1, 200, &mut rng).unwrap();
        assert_eq!(r.freq_bound_holds(), 1.0);
        assert_eq!(r.max_probability_sum, 0.0);
        let r = simulate_capped_process(|_| 1.0, 2, 100, 0.1, 200, &mut rng).unwrap();
        assert_eq!(r.max_probability_sum, 2.0);
        assert_eq!(r.max_successes, 2);
        assert_eq!(r.freq_bound_holds(), 1.0);
        assert!(simulate_capped_process(|_| 0.5, 20, 10, 0.1, 1, &mut rng).is_err());
    }

    #[test]
    fn subgaussian_threshold_grows_with_horizon() {
        let a = subgaussian_max_threshold(1.0, 10, 0.1).unwrap();
        let b = subgaussian_max_threshold(1.0, 100, 0.1).unwrap();
        assert!(b > a);
    }

    fn constants() -> TauMinConstants {
        TauMinConstants {
            kappa_v: 2.0,
            kappa_g: 3.0,
            kappa_h: 4.0,
            zeta: 0.5,
            kappa_c: 1.5,
            m: 1.0,
            k_max: 100,
            delta: 0.1,
            sigma: 0.5,
            eps_tau: 0.1,
            tau_init: 1.0,
        }
    }

    #[test]
    fn tau_min_monotone_in_sigma_and_noise() {
        let base = eval_tau_min_formula(&constants()).unwrap();
        let high_sigma = eval_tau_min_formula(&TauMinConstants {
            sigma: 0.9,
            ..constants()
        })
        .unwrap();
        assert!(high_sigma.tau_min < base.tau_min);
        let noisy = eval_tau_min_formula(&TauMinConstants { m: 2.0, ..constants() }).unwrap();
        assert!(noisy.tau_min < base.tau_min);
        assert!(matches!(
            eval_tau_min_formula(&TauMinConstants {
                zeta: 0.0,
                ..constants()
            }),
            Err(Error::InvalidConstant { name: "zeta", .. })
        ));
    }

    proptest! {
        #[test]
        fn ell_at_least_s_and_increasing(s in 0usize..200, d in 1e-12f64..0.999) {
            let here = ell(s, d).unwrap();
            prop_assert!(here >= s as f64);
            prop_assert!(ell(s + 1, d).unwrap() > here);
            prop_assert!(ell(s, d * 0.5).unwrap() > here);
        }

        #[test]
        fn hat_delta_nonincreasing(s in 0usize..40, k in 2usize..400, d in 1e-6f64..0.99) {
            let h = hat_delta(d, s, k).unwrap();
            prop_assert!(h <= d);
            prop_assert!(hat_delta(d, s + 1, k).unwrap() <= h);
            if s >= 2 {
                prop_assert!(hat_delta(d, s, k + 1).unwrap() <= h);
            } else {
                prop_assert_eq!(h, d);
            }
        }
    }
}
