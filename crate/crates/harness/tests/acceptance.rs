//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use ssqp_core::kkt::{decompose_step, solve_kkt, KktFactorization};
use ssqp_core::linalg::{dot, norm_inf};
use ssqp_core::merit::delta_q_from_products;
use ssqp_core::noise::sample_gradient;
use ssqp_core::problems::{make_quadratic, make_random_licq, make_rosenbrock_sphere};
use ssqp_core::rng::{child_seed, substream};
use ssqp_core::sqp::{run, run_observed};
use ssqp_core::tail::{
    ell, mc_chernoff_check, mc_ptau_symmetric, mc_subgaussian_max, simulate_capped_process, smax_bound,
};
use ssqp_core::{AlgoConfig, BetaSchedule, KktSystem, Matrix, Mode, NoiseModel, Problem};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn stochastic(k_max: usize, seed: u64, variance: f64) -> AlgoConfig {
    AlgoConfig {
        k_max,
        seed,
        mode: Mode::Stochastic(NoiseModel::Gaussian { variance }),
        ..AlgoConfig::default()
    }
}

fn dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice())
}

fn oracle_step(h: &Matrix, j: &Matrix, g: &[f64], c: &[f64]) -> Vec<f64> {
    let (n, m) = (h.nrows(), j.nrows());
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&dense(h));
    k.view_mut((n, 0), (m, n)).copy_from(&dense(j));
    k.view_mut((0, n), (n, m)).copy_from(&dense(j).transpose());
    let rhs = DVector::from_iterator(n + m, g.iter().chain(c).map(|v| -v));
    k.lu().solve(&rhs).unwrap().rows(0, n).iter().copied().collect()
}

fn kkt_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst_res = 0.0f64;
    let mut worst_dec = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=50usize);
        let m = rng.random_range(1..n);
        let a = Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let mut h = a.transpose().matmul(&a);
        h.scale(1.0 / n as f64);
        h.add_diagonal(0.5);
        let j = Matrix::from_fn(m, n, |_, _| rng.sample(StandardNormal));
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let sol = match solve_kkt(
            &KktSystem::new(h.clone(), j.clone(), g.clone(), c.clone()).unwrap(),
            1e-10,
        ) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        worst_res = worst_res.max(sol.residual);
        let d = oracle_step(&h, &j, &g, &c);
        let scale = 1.0 + norm_inf(&d);
        worst_oracle = worst_oracle.max(sol.d.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
        let parts = decompose_step(&sol.d, &j).unwrap();
        let ju = norm_inf(&j.mul_vec(&parts.tangential)) / scale;
        let orth = dot(&parts.tangential, &parts.normal).abs() / (scale * scale);
        let sum = parts
            .tangential
            .iter()
            .zip(&parts.normal)
            .zip(&sol.d)
            .map(|((u, v), d)| (u + v - d).abs())
            .fold(0.0, f64::max)
            / scale;
        worst_dec = worst_dec.max(ju).max(orth).max(sum);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_res <= 1e-10 && worst_dec <= 1e-10 && worst_oracle <= 1e-8 && within(elapsed, 5),
        format!(
            "max residual {worst_res:.1e}, decomposition {worst_dec:.1e}, vs oracle {worst_oracle:.1e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn merit_guarantee() -> Outcome {
    let problems: Vec<(Box<dyn Problem + Sync>, AlgoConfig)> = (0..4)
        .flat_map(|s| {
            [
                (
                    Box::new(make_quadratic(8, 3, s).unwrap()) as Box<dyn Problem + Sync>,
                    stochastic(1499, s, 0.5),
                ),
                (
                    Box::new(make_random_licq(10, 3, s).unwrap()) as Box<dyn Problem + Sync>,
                    stochastic(1499, s, 0.5),
                ),
            ]
        })
        .chain([(
            Box::new(make_rosenbrock_sphere()) as Box<dyn Problem + Sync>,
            stochastic(2999, 7, 0.01),
        )])
        .collect();
    let results: Vec<(usize, f64, usize)> = problems
        .par_iter()
        .map(|(p, cfg)| {
            let sigma = cfg.merit.sigma;
            let mut prev = (cfg.merit.tau_init, cfg.merit.xi_init);
            let mut worst = 0.0f64;
            let mut violations = 0;
            let r = run_observed(p.as_ref(), cfg, |out| {
                let r = &out.record;
                let h = &out.hessian;
                let mut gap = |dq: f64, tau: f64, dhd: f64| {
                    let lower = 0.5 * tau * dhd.max(0.0) + sigma * r.c_norm1;
                    // relative to the size of the terms, so large-valued problems are judged fairly
                    worst = worst.max((lower - dq) / (1.0 + lower.abs()));
                };
                if dot(&r.d, &r.d) > 0.0 {
                    gap(r.delta_q_stoch, r.tau, h.quad_form(&r.d));
                }
                let grad = p.gradient(&r.x);
                let dhd_true = h.quad_form(&r.d_true);
                gap(
                    delta_q_from_products(r.tau_hat, dot(&grad, &r.d_true), dhd_true, r.c_norm1),
                    r.tau_hat,
                    dhd_true,
                );
                let tau_ok =
                    r.tau <= prev.0 && (r.tau == prev.0 || r.tau <= (1.0 - cfg.merit.eps_tau) * prev.0 * (1.0 + 1e-15));
                let xi_ok =
                    r.xi <= prev.1 && (r.xi == prev.1 || r.xi <= (1.0 - cfg.merit.eps_xi) * prev.1 * (1.0 + 1e-15));
                if !(tau_ok && xi_ok) {
                    violations += 1;
                }
                prev = (r.tau, r.xi);
            })
            .unwrap();
            (r.trace.len(), worst, violations)
        })
        .collect();
    let total: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(f64::MIN, f64::max);
    let violations: usize = results.iter().map(|r| r.2).sum();
    outcome(
        total >= 10_000 && worst <= 1e-12 && violations == 0,
        format!("{total} iterations, worst relative shortfall {worst:.1e}, monotonicity violations {violations}"),
    )
}

fn unbiasedness_and_products() -> Outcome {
    let start = Instant::now();
    let p = make_quadratic(10, 3, 17).unwrap();
    let x = p.initial_point();
    let n = p.dim();
    let h = Matrix::identity(n);
    let (zeta, m) = (1.0, 1.0);
    let noise = NoiseModel::Gaussian { variance: m };
    let (grad, c, jac) = (p.gradient(&x), p.constraints(&x), p.jacobian(&x));
    let d_true = oracle_step(&h, &jac, &grad, &c);
    let fact = KktFactorization::new(&h, &jac).unwrap();
    let mut rng = substream(2024, 0);
    let draws = 10_000;
    let mut ds = (0..n).map(|_| Vec::with_capacity(draws)).collect::<Vec<_>>();
    let (mut gd, mut dhd) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        let g = sample_gradient(&p, &noise, &x, &mut rng).unwrap();
        let d = fact.solve(&g, &c, 1e-8).unwrap().d;
        for (i, v) in d.iter().enumerate() {
            ds[i].push(*v);
        }
        gd.push(dot(&g, &d));
        dhd.push(h.quad_form(&d));
    }
    let (mut bias_sq, mut se_sq) = (0.0, 0.0);
    for i in 0..n {
        let (mi, si) = mean_se(&ds[i]);
        bias_sq += (mi - d_true[i]).powi(2);
        se_sq += si * si;
    }
    let (bias, se) = (bias_sq.sqrt(), se_sq.sqrt());
    let reference = dot(&grad, &d_true);
    let (mg, sg) = mean_se(&gd);
    let (mh, sh) = mean_se(&dhd);
    let href = h.quad_form(&d_true);
    let elapsed = start.elapsed();
    let pass = bias <= 3.0 * se
        && mg <= reference + 3.0 * sg
        && mg >= reference - m / zeta - 3.0 * sg
        && mh >= href - 3.0 * sh
        && within(elapsed, 30);
    outcome(
        pass,
        format!(
            "|mean D - d_true| {bias:.2e} (3SE {:.2e}); mean gTd - gradTd_true {:.3e} (SE {sg:.1e}); mean dHd - ref {:.3e} (SE {sh:.1e}); {:.2}s",
            3.0 * se,
            mg - reference,
            mh - href,
            elapsed.as_secs_f64()
        ),
    )
}

fn merit_decrease_surrogate() -> Outcome {
    let mut worst = f64::MIN;
    let mut iters = 0;
    let mut bad_interval = 0;
    for seed in 0..5 {
        let p = make_quadratic(12, 4, seed).unwrap();
        let k_max = 1000;
        let cfg = stochastic(k_max, seed, 1.0);
        let beta = 0.5 / ((k_max + 1) as f64).sqrt();
        run_observed(&p, &cfg, |out| {
            let r = &out.record;
            let a = beta * r.xi * r.tau / (r.tau * p.lipschitz() + p.gamma());
            if !(a > 0.0 && a <= 1.0) {
                bad_interval += 1;
            }
            let grad = p.gradient(&r.x);
            let diff: Vec<f64> = r.d.iter().zip(&r.d_true).map(|(a, b)| a - b).collect();
            let rhs = -r.alpha * r.delta_q_true
                + 0.5 * r.alpha * beta * r.delta_q_stoch
                + r.alpha * r.tau * dot(&grad, &diff);
            worst = worst.max(r.phi_after - r.phi_before - rhs);
            iters += 1;
        })
        .unwrap();
    }
    outcome(
        worst <= 1e-8 && bad_interval == 0,
        format!("{iters} iterations, max excess {worst:.2e}"),
    )
}

fn symmetric_noise_probability() -> Outcome {
    let trials = 10_000;
    let results: Vec<(f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|i| {
            let p = make_random_licq(8, 3, 100 + i).unwrap();
            let x = p.initial_point();
            let est = mc_ptau_symmetric(
                &p,
                &x,
                &Matrix::identity(8),
                &NoiseModel::Gaussian { variance: 1.0 },
                trials,
                &mut substream(child_seed(55, i), 0),
            )
            .unwrap();
            (est.frequency(), est.standard_error_at(0.5))
        })
        .collect();
    let pass = results.iter().all(|(f, se)| *f >= 0.5 - 3.0 * se);
    let freqs: Vec<String> = results.iter().map(|(f, _)| format!("{f:.4}")).collect();
    outcome(
        pass,
        format!(
            "frequencies [{}] vs 0.5 - 3SE = {:.4}",
            freqs.join(", "),
            0.5 - 3.0 * results[0].1
        ),
    )
}

fn chernoff() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (s, delta)) in [(3usize, 0.1), (1, 0.2), (5, 0.05)].into_iter().enumerate() {
        let l = ell(s, delta).unwrap();
        let terms = 1000;
        let probs = vec![l / terms as f64; terms];
        let chk = mc_chernoff_check(&probs, s, delta, 100_000, &mut substream(child_seed(77, i as u64), 0)).unwrap();
        pass &= chk.precondition_met && chk.passes();
        parts.push(format!(
            "(s={s}, d={delta}): tail {:.4} <= {:.4}",
            chk.empirical_tail(),
            chk.threshold
        ));
    }
    outcome(pass, parts.join("; "))
}

fn capped_process() -> Outcome {
    let r = simulate_capped_process(|_| 0.05, 3, 200, 0.1, 10_000, &mut substream(31, 0)).unwrap();
    outcome(
        r.freq_bound_holds() >= 0.9 && r.freq_count_exceeds() == 0.0,
        format!(
            "freq_bound_holds {:.4} (bound {:.3}), freq_count_exceeds {}",
            r.freq_bound_holds(),
            r.bound,
            r.freq_count_exceeds()
        ),
    )
}

fn subgaussian_max() -> Outcome {
    let noise = NoiseModel::Gaussian { variance: 1.0 };
    let dim = 10;
    let m = noise.subgaussian_parameter(dim).unwrap();
    let (k_max, delta) = (100, 0.1);
    let est = mc_subgaussian_max(&noise, dim, m, k_max, delta, 1000, &mut substream(41, 0)).unwrap();
    let threshold = 1.0 - delta - 3.0 * est.standard_error_at(1.0 - delta);
    outcome(
        est.frequency() >= threshold,
        format!("frequency {:.4} >= {threshold:.4} (M = {m:.3})", est.frequency()),
    )
}

fn rate_reproduction() -> Outcome {
    let start = Instant::now();
    let p = make_quadratic(10, 3, 2).unwrap();
    let stats = |k_max: usize| -> Vec<f64> {
        (0..50u64)
            .into_par_iter()
            .map(|s| run(&p, &stochastic(k_max, s, 1.0)).unwrap().summary.kstar_statistic)
            .collect()
    };
    let (lo, _) = mean_se(&stats(100));
    let (hi, se) = mean_se(&stats(10_000));
    let elapsed = start.elapsed();
    let factor = lo / hi;
    outcome(
        factor >= 2.0 && within(elapsed, 180),
        format!(
            "mean at k_max=100: {lo:.4e}, at 10000: {hi:.4e} (SE {se:.1e}), factor {factor:.2}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn deterministic_regime() -> Outcome {
    let iterations = |eps: f64, seed: u64| -> Option<usize> {
        let p = make_random_licq(10, 3, seed).unwrap();
        let cfg = AlgoConfig {
            k_max: 100_000,
            stop_eps: Some(eps),
            beta_schedule: BetaSchedule::Fixed { beta: 1.0 },
            ..AlgoConfig::default()
        };
        let r = run(&p, &cfg).unwrap();
        r.summary.stopped_early.then_some(r.trace.len())
    };
    let runs: Vec<(Option<usize>, Option<usize>)> = (0..10u64)
        .into_par_iter()
        .map(|s| (iterations(1e-1, s), iterations(1e-2, s)))
        .collect();
    if runs.iter().any(|(a, b)| a.is_none() || b.is_none()) {
        return outcome(false, "a run did not reach the tolerance within 1e5 iterations");
    }
    let coarse: f64 = runs.iter().map(|r| r.0.unwrap() as f64).sum::<f64>() / 10.0;
    let fine: f64 = runs.iter().map(|r| r.1.unwrap() as f64).sum::<f64>() / 10.0;
    let ratio = fine / coarse;
    outcome(
        ratio <= 150.0,
        format!("mean iterations {coarse:.1} (eps 1e-1) vs {fine:.1} (eps 1e-2), ratio {ratio:.2}"),
    )
}

fn smax_accounting() -> Outcome {
    let mut configs: Vec<(Box<dyn Problem + Sync>, AlgoConfig)> = Vec::new();
    for s in 0..5 {
        configs.push((Box::new(make_quadratic(8, 3, s).unwrap()), stochastic(2000, s, 1.0)));
        configs.push((Box::new(make_random_licq(10, 3, s).unwrap()), stochastic(2000, s, 1.0)));
    }
    configs.push((Box::new(make_rosenbrock_sphere()), stochastic(2000, 3, 0.01)));
    let checks: Vec<(usize, usize)> = configs
        .par_iter()
        .map(|(p, cfg)| {
            let r = run(p.as_ref(), cfg).unwrap();
            let bound = smax_bound(
                r.summary.tau_min_observed,
                cfg.merit.tau_init,
                cfg.merit.eps_tau,
                cfg.k_max,
            )
            .unwrap();
            (r.summary.s_count, bound)
        })
        .collect();
    let pass = checks.iter().all(|(s, b)| s <= b);
    let worst = checks
        .iter()
        .map(|(s, b)| format!("{s}/{b}"))
        .collect::<Vec<_>>()
        .join(" ");
    outcome(pass, format!("decreases/bound per run: {worst}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("KKT correctness", kkt_correctness),
        ("merit guarantee", merit_guarantee),
        ("unbiasedness and product bounds", unbiasedness_and_products),
        ("merit-decrease surrogate", merit_decrease_surrogate),
        ("symmetric-noise decrease probability", symmetric_noise_probability),
        ("Chernoff threshold", chernoff),
        ("capped Bernoulli process", capped_process),
        ("sub-Gaussian maximum", subgaussian_max),
        ("rate reproduction", rate_reproduction),
        ("deterministic iteration scaling", deterministic_regime),
        ("merit-parameter decrease count", smax_accounting),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
