//! Kernel ridge regression against dense reference solves.

mod common;

use abstain::surrogate::{fit_ridge, KernelConfig, SurrogateError};
use common::{dense_operator_ridge, max_abs_diff, primal_linear_ridge};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize, q: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let xs = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let psi = (0..n).map(|_| (0..q).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (xs, psi)
}

#[test]
fn matches_the_dense_operator_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for trial in 0..40 {
        let n = rng.random_range(1..=50);
        let q = rng.random_range(1..=20);
        let m = rng.random_range(1..=8);
        let lambda = 10f64.powf(rng.random_range(-2.0..1.0));
        let gaussian = if trial % 2 == 0 { None } else { Some(rng.random_range(0.1..2.0)) };
        let kernel = gaussian.map_or(KernelConfig::linear(), KernelConfig::gaussian);
        let (xs, psi) = random_problem(&mut rng, n, m, q);
        let model = fit_ridge(kernel, &xs, &psi, lambda).unwrap();
        for _ in 0..3 {
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            worst = worst.max(max_abs_diff(&model.g_hat(&x).unwrap(), &dense_operator_ridge(gaussian, &xs, &psi, lambda, &x)));
        }
    }
    assert!(worst <= TOL, "max deviation {worst:e}");
}

#[test]
fn linear_kernel_matches_primal_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (xs, psi) = random_problem(&mut rng, 20, 6, 5);
    let model = fit_ridge(KernelConfig::linear(), &xs, &psi, 0.3).unwrap();
    for x in xs.iter().take(5) {
        assert!(max_abs_diff(&model.g_hat(x).unwrap(), &primal_linear_ridge(&xs, &psi, 0.3, x)) <= TOL);
    }
}

#[test]
fn orthonormal_inputs_give_scaled_unit_weights() {
    let xs: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let psi = vec![vec![1.0]; 4];
    let model = fit_ridge(KernelConfig::linear(), &xs, &psi, 0.5).unwrap();
    let alpha = model.alpha(&xs[2]).unwrap();
    for (i, a) in alpha.iter().enumerate() {
        let expected = if i == 2 { 1.0 / 1.5 } else { 0.0 };
        assert!((a - expected).abs() < 1e-14);
    }
}

#[test]
fn single_point_weight() {
    let kernel = KernelConfig::gaussian(0.7);
    let x = vec![0.3, -0.2];
    let model = fit_ridge(kernel, std::slice::from_ref(&x), &[vec![2.0, -1.0]], 0.25).unwrap();
    let alpha = model.alpha(&x).unwrap();
    assert!((alpha[0] - 1.0 / 1.25).abs() < 1e-15);
}

#[test]
fn duplicated_point_pulls_the_fit_closer() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut xs, mut psi) = random_problem(&mut rng, 6, 3, 4);
    let kernel = KernelConfig::gaussian(0.5);
    let once = fit_ridge(kernel, &xs, &psi, 1.0).unwrap();
    xs.push(xs[0].clone());
    psi.push(psi[0].clone());
    let twice = fit_ridge(kernel, &xs, &psi, 1.0).unwrap();
    let err = |g: Vec<f64>| g.iter().zip(&psi[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    assert!(err(twice.g_hat(&xs[0]).unwrap()) < err(once.g_hat(&xs[0]).unwrap()));
}

#[test]
fn tiny_lambda_interpolates_a_well_conditioned_set() {
    let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![f64::from(i) * 3.0]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let psi: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let model = fit_ridge(KernelConfig::gaussian(1.0), &xs, &psi, 1e-8).unwrap();
    for (x, p) in xs.iter().zip(&psi) {
        assert!(max_abs_diff(&model.g_hat(x).unwrap(), p) <= 1e-3);
    }
}

#[test]
fn large_lambda_shrinks_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (xs, psi) = random_problem(&mut rng, 10, 3, 4);
    let model = fit_ridge(KernelConfig::gaussian(1.0), &xs, &psi, 1e12).unwrap();
    assert!(model.g_hat(&xs[0]).unwrap().iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn bad_inputs_are_rejected() {
    let xs = vec![vec![1.0], vec![2.0]];
    let psi = vec![vec![1.0], vec![0.0]];
    assert_eq!(fit_ridge(KernelConfig::linear(), &xs, &psi, 0.0).unwrap_err(), SurrogateError::Lambda(0.0));
    assert!(fit_ridge(KernelConfig::linear(), &[], &[], 1.0).is_err());
    assert!(fit_ridge(KernelConfig::linear(), &xs, &psi[..1], 1.0).is_err());
    let model = fit_ridge(KernelConfig::linear(), &xs, &psi, 1.0).unwrap();
    assert!(matches!(model.g_hat(&[1.0, 2.0]), Err(SurrogateError::Dimension { .. })));
}

fn problem() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, f64, f64, u64)> {
    (1usize..12, 1usize..4, 1usize..5).prop_flat_map(|(n, m, q)| {
        (
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, m), n),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, q), n),
            0.01..10.0f64,
            0.1..2.0f64,
            any::<u64>(),
        )
    })
}

proptest! {
    #[test]
    fn prediction_lies_in_the_span_of_training_outputs((xs, psi, lambda, gamma, _) in problem()) {
        let model = fit_ridge(KernelConfig::gaussian(gamma), &xs, &psi, lambda).unwrap();
        let g = model.g_hat(&xs[0]).unwrap();
        // least-squares projection of ĝ onto the column space of Ψᵀ
        let basis = DMatrix::from_fn(psi[0].len(), psi.len(), |j, i| psi[i][j]);
        let target = nalgebra::DVector::from_column_slice(&g);
        let svd = basis.clone().svd(true, true);
        let coef = svd.solve(&target, 1e-12).unwrap();
        let residual = (basis * coef - target).norm();
        prop_assert!(residual <= 1e-10, "residual {residual:e}");
    }

    #[test]
    fn permuting_training_points_changes_nothing((xs, psi, lambda, gamma, seed) in problem()) {
        let kernel = KernelConfig::gaussian(gamma);
        let model = fit_ridge(kernel, &xs, &psi, lambda).unwrap();
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let xs_p: Vec<_> = order.iter().map(|&i| xs[i].clone()).collect();
        let psi_p: Vec<_> = order.iter().map(|&i| psi[i].clone()).collect();
        let permuted = fit_ridge(kernel, &xs_p, &psi_p, lambda).unwrap();
        for x in &xs {
            prop_assert!(max_abs_diff(&model.g_hat(x).unwrap(), &permuted.g_hat(x).unwrap()) <= 1e-10);
        }
    }

    #[test]
    fn fitted_objective_beats_the_zero_function((xs, psi, lambda, gamma, _) in problem()) {
        let model = fit_ridge(KernelConfig::gaussian(gamma), &xs, &psi, lambda).unwrap();
        // ‖g‖²_H = Σ_ij k(x_i, x_j) c_iᵀ c_j with c = (K + λI)⁻¹ Ψ
        let n = xs.len();
        let k = DMatrix::from_fn(n, n, |i, j| common::kernel_value(Some(gamma), &xs[i], &xs[j]));
        let p = DMatrix::from_fn(n, psi[0].len(), |i, j| psi[i][j]);
        let c = (k.clone() + DMatrix::identity(n, n) * lambda).lu().solve(&p).unwrap();
        let norm = (c.transpose() * &k * &c).trace();
        let fit: f64 = xs.iter().zip(&psi).map(|(x, p)| {
            model.g_hat(x).unwrap().iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        }).sum();
        let zero: f64 = psi.iter().flatten().map(|v| v * v).sum();
        prop_assert!(fit + lambda * norm <= zero + 1e-10);
    }
}
