use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ssqp_core::kkt::{decompose_step, has_full_row_rank, null_space_basis, solve_kkt, KktFactorization};
use ssqp_core::linalg::{dot, norm_inf};
use ssqp_core::{Error, KktSystem, Matrix};

fn normal_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = normal_matrix(n, n, rng);
    let mut h = a.transpose().matmul(&a);
    h.scale(1.0 / n as f64);
    h.add_diagonal(0.5);
    h
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), m.as_slice())
}

fn instance(seed: u64) -> (Matrix, Matrix, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=50);
    let m = rng.random_range(1..n);
    let h = spd(n, &mut rng);
    let j = normal_matrix(m, n, &mut rng);
    let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let c: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    (h, j, g, c)
}

/// Independent solve of the block system with nalgebra's LU.
fn oracle(h: &Matrix, j: &Matrix, g: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (h.nrows(), j.nrows());
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&to_na(h));
    k.view_mut((n, 0), (m, n)).copy_from(&to_na(j));
    k.view_mut((0, n), (n, m)).copy_from(&to_na(j).transpose());
    let rhs = DVector::from_iterator(n + m, g.iter().chain(c).map(|v| -v));
    let sol = k.lu().solve(&rhs).expect("oracle solve");
    (
        sol.rows(0, n).iter().copied().collect(),
        sol.rows(n, m).iter().copied().collect(),
    )
}

#[test]
fn matches_dense_oracle_on_random_instances() {
    for seed in 0..200 {
        let (h, j, g, c) = instance(seed);
        let sol = solve_kkt(
            &KktSystem::new(h.clone(), j.clone(), g.clone(), c.clone()).unwrap(),
            1e-10,
        )
        .unwrap();
        assert!(sol.residual <= 1e-10, "seed {seed}: residual {}", sol.residual);
        let (d, y) = oracle(&h, &j, &g, &c);
        let scale = 1.0 + norm_inf(&d).max(norm_inf(&y));
        for (a, b) in sol.d.iter().zip(&d).chain(sol.y.iter().zip(&y)) {
            assert!((a - b).abs() <= 1e-8 * scale, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn decomposition_splits_into_null_and_range_parts() {
    for seed in 0..200 {
        let (h, j, g, c) = instance(seed);
        let sol = solve_kkt(&KktSystem::new(h, j.clone(), g, c.clone()).unwrap(), 1e-10).unwrap();
        let parts = decompose_step(&sol.d, &j).unwrap();
        let scale = 1.0 + norm_inf(&sol.d);
        // J u = 0, u + v = d, u ⟂ v, and J v = J d = −c
        assert!(norm_inf(&j.mul_vec(&parts.tangential)) <= 1e-10 * scale);
        for i in 0..sol.d.len() {
            assert!((parts.tangential[i] + parts.normal[i] - sol.d[i]).abs() <= 1e-12 * scale);
        }
        assert!(dot(&parts.tangential, &parts.normal).abs() <= 1e-10 * scale * scale);
        let jv = j.mul_vec(&parts.normal);
        for (a, b) in jv.iter().zip(&c) {
            assert!((a + b).abs() <= 1e-10 * (1.0 + norm_inf(&c)));
        }
        // v lies in Range(Jᵀ): the oracle least-squares fit Jᵀw ≈ v has zero residual
        let jt = to_na(&j).transpose();
        let v = DVector::from_column_slice(&parts.normal);
        let w = jt.clone().svd(true, true).solve(&v, 1e-14).unwrap();
        assert!((jt * w - v).amax() <= 1e-9 * scale);
    }
}

#[test]
fn null_space_basis_is_orthonormal_and_annihilated() {
    for seed in 0..50 {
        let (_, j, _, _) = instance(seed);
        let z = null_space_basis(&j).unwrap();
        assert_eq!(z.ncols(), j.ncols() - j.nrows());
        let jz = j.matmul(&z);
        assert!(jz.max_abs() <= 1e-12 * (1.0 + j.max_abs()));
        let ztz = to_na(&z.transpose().matmul(&z));
        assert!((ztz - DMatrix::identity(z.ncols(), z.ncols())).amax() <= 1e-12);
    }
}

#[test]
fn rank_deficient_jacobian_is_singular() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = spd(4, &mut rng);
    let r: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
    let j = Matrix::from_rows(&[r.clone(), r.iter().map(|v| 2.0 * v).collect()]);
    assert!(!has_full_row_rank(&j));
    assert!(matches!(
        KktFactorization::new(&h, &j),
        Err(Error::SingularSystem { .. })
    ));
}

#[test]
fn asymmetric_hessian_is_rejected() {
    let mut h = Matrix::identity(3);
    h[(0, 1)] = 1.0;
    let j = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]);
    let err = KktSystem::new(h, j, vec![0.0; 3], vec![0.0]).unwrap_err();
    assert!(matches!(err, Error::NotSymmetric { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factorization_reuse_matches_fresh_solve(seed in any::<u64>(), shift in 0.0f64..5.0) {
        let (h, j, g, c) = instance(seed);
        let fact = KktFactorization::new(&h, &j).unwrap();
        let g2: Vec<f64> = g.iter().map(|v| v + shift).collect();
        let a = fact.solve(&g2, &c, 1e-9).unwrap();
        let b = solve_kkt(&KktSystem::new(h, j, g2, c).unwrap(), 1e-9).unwrap();
        for (u, v) in a.d.iter().zip(&b.d) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn solution_is_linear_in_the_right_hand_side(seed in any::<u64>(), s in -3.0f64..3.0) {
        let (h, j, g, c) = instance(seed);
        let fact = KktFactorization::new(&h, &j).unwrap();
        let base = fact.solve(&g, &c, 1e-9).unwrap();
        let gs: Vec<f64> = g.iter().map(|v| s * v).collect();
        let cs: Vec<f64> = c.iter().map(|v| s * v).collect();
        let scaled = fact.solve(&gs, &cs, 1e-9).unwrap();
        let tol = 1e-9 * (1.0 + norm_inf(&base.d)) * (1.0 + s.abs());
        for (u, v) in scaled.d.iter().zip(&base.d) {
            prop_assert!((u - s * v).abs() <= tol);
        }
    }
}
