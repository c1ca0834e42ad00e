mod common;

use common::{gaussian, haar_orthogonal, residual, rng};
use latlink::align::{
    choose_inverse, fit_procrustes, fit_ridge, migrate_probe, AlignmentMap, InverseKind,
    LinearProbe, Method,
};
use latlink::linalg::{orthogonality_deviation, singular_values};
use latlink::metrics::ReportConfig;
use latlink::pipeline::{evaluate, FitConfig};
use latlink::synthworld::{generate, generate_views, oracle_map, random_invertible, WorldConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn kappa(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    sv[0] / sv[sv.len() - 1]
}

#[test]
fn procrustes_beats_sampled_orthogonal_maps() {
    let mut r = rng(2024);
    for d in 1..=3 {
        for n in [d, 6] {
            let x = gaussian(d, n, &mut r);
            let y = gaussian(d, n, &mut r);
            let fitted = fit_procrustes(&x, &y).unwrap();
            let best = residual(fitted.matrix(), &x, &y);
            for _ in 0..100_000 {
                let q = haar_orthogonal(d, &mut r);
                assert!(best <= residual(&q, &x, &y) + 1e-12);
            }
        }
    }
}

#[test]
fn procrustes_recovers_rotation() {
    let mut r = rng(3);
    for _ in 0..10 {
        let rot = haar_orthogonal(4, &mut r);
        let x = gaussian(4, 30, &mut r);
        let w = fit_procrustes(&x, &(&rot * &x)).unwrap();
        assert!((w.matrix() - &rot).norm() <= 1e-8);
        assert!(orthogonality_deviation(w.matrix()) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn procrustes_always_orthogonal(seed in any::<u64>(), d in 1usize..8, n in 1usize..20) {
        let mut r = rng(seed);
        let x = gaussian(d, n, &mut r);
        let y = gaussian(d, n, &mut r) * 10.0;
        let w = fit_procrustes(&x, &y).unwrap();
        prop_assert!(orthogonality_deviation(w.matrix()) <= 1e-10);
    }

    #[test]
    fn ridge_satisfies_normal_equations(
        seed in any::<u64>(), d1 in 1usize..6, d2 in 1usize..6, lambda in 0.0f64..10.0,
    ) {
        let mut r = rng(seed);
        let x = gaussian(d1, 3 * d1 + 5, &mut r);
        let y = gaussian(d2, 3 * d1 + 5, &mut r);
        let w = fit_ridge(&x, &y, lambda).unwrap();
        let gram = &x * x.transpose() + DMatrix::identity(d1, d1) * lambda;
        let rhs = &y * x.transpose();
        prop_assert!((w.matrix() * gram - &rhs).norm() <= 1e-8 * rhs.norm());
        let sv = w.singular_values();
        prop_assert!(sv.windows(2).all(|p| p[0] >= p[1]) && sv.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn ols_is_optimal_against_perturbations(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let x = gaussian(d, 4 * d + 3, &mut r);
        let y = gaussian(d, 4 * d + 3, &mut r);
        let w = fit_ridge(&x, &y, 0.0).unwrap();
        let base = residual(w.matrix(), &x, &y).powi(2);
        for _ in 0..100 {
            let mut dw = gaussian(d, d, &mut r);
            dw /= dw.norm() / 1e-3;
            prop_assert!(residual(&(w.matrix() + dw), &x, &y).powi(2) >= base);
        }
    }
}

#[test]
fn noiseless_world_recovers_oracle() {
    let world = WorldConfig { d: 16, n: 1000, seed: 3, kappa1: 4.0, kappa2: 3.0, ..Default::default() }
        .build()
        .unwrap();
    let data = generate(&world).unwrap();
    let fit = FitConfig { method: Method::Ols, auto_ridge: false, ..Default::default() };
    let report = ReportConfig { standardize: false, ..Default::default() };
    let eval = evaluate(&data, &fit, &report).unwrap();
    let oracle = oracle_map(&world).unwrap();
    let rel = (eval.map.matrix() - oracle.matrix()).norm() / oracle.matrix().norm();
    assert!(rel <= 1e-6, "{rel}");
    assert!(eval.report.r2 >= 1.0 - 1e-9);
    assert!(eval.report.dsc >= 0.999);
    assert!(eval.report.nos_at_k[&10] <= 1e-3);
    // κ(W) ≤ κ(A₁) κ(A₂)
    assert!(eval.map.condition_number() <= kappa(&world.mix1) * kappa(&world.mix2) * (1.0 + 1e-6));
}

#[test]
fn oracle_condition_number_is_submultiplicative() {
    for seed in 0..20 {
        let world = WorldConfig { d: 6, seed, kappa1: 1.0 + seed as f64, kappa2: 50.0, ..Default::default() }
            .build()
            .unwrap();
        let w = oracle_map(&world).unwrap();
        let bound = kappa(&world.mix1) * kappa(&world.mix2);
        assert!(w.condition_number() <= bound * (1.0 + 1e-10));
        assert!((w.condition_number() - kappa(w.matrix())).abs() <= 1e-9 * bound);
    }
}

#[test]
fn test_mse_tracks_noise_energy() {
    for sigma in [0.1, 0.3] {
        let world = WorldConfig { d: 16, n: 1000, sigma, seed: 8, ..Default::default() }.build().unwrap();
        let data = generate(&world).unwrap();
        let report = ReportConfig { standardize: false, ..Default::default() };
        let eval = evaluate(&data, &FitConfig::default(), &report).unwrap();
        let expected = 16.0 * sigma * sigma;
        let ratio = eval.report.mse / expected;
        assert!((0.8..=1.2).contains(&ratio), "sigma {sigma}: ratio {ratio}");
    }
}

#[test]
fn noise_energy_matches_chi_square_mean() {
    let (d, sigma) = (4, 0.5);
    let world = WorldConfig { d, n: 100_000, sigma, seed: 12, ..Default::default() }.build().unwrap();
    let (u, _, z2) = generate_views(&world).unwrap();
    let eps = z2 - &world.mix2 * u;
    let energy = eps.norm_squared() / 100_000.0;
    let expected = d as f64 * sigma * sigma;
    assert!((energy / expected - 1.0).abs() <= 0.02, "{energy} vs {expected}");
}

#[test]
fn random_invertible_hits_target_condition() {
    for (seed, target) in [(1, 1.0), (2, 100.0), (3, 5.0), (4, 1e4)] {
        let a = random_invertible(7, target, seed).unwrap();
        assert!((kappa(&a) / target - 1.0).abs() <= 0.01);
        assert_eq!(a, random_invertible(7, target, seed).unwrap());
    }
    assert!(orthogonality_deviation(&random_invertible(5, 1.0, 9).unwrap()) <= 1e-10);
}

#[test]
fn migrated_probe_preserves_scores_under_exact_alignment() {
    let mut r = rng(31);
    let d = 6;
    let w = random_invertible(d, 5.0, 17).unwrap();
    let map = choose_inverse(&AlignmentMap::from_matrix(w.clone(), Method::Ols, 0.0).unwrap());
    assert_eq!(map.inverse_kind(), Some(InverseKind::Exact));
    let z1 = gaussian(d, 200, &mut r);
    let z2 = &w * &z1;
    let weights: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
    let probe = LinearProbe::new(weights, 0.3).unwrap();
    let migrated = migrate_probe(&probe, &map).unwrap();
    for (a, b) in probe.scores(&z1).unwrap().iter().zip(migrated.scores(&z2).unwrap()) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn rectangular_map_uses_left_pseudo_inverse() {
    let mut r = rng(4);
    let q = haar_orthogonal(3, &mut r);
    let w = q.columns(0, 2).into_owned();
    let map = choose_inverse(&AlignmentMap::from_matrix(w.clone(), Method::Ridge, 0.0).unwrap());
    assert_eq!(map.inverse_kind(), Some(InverseKind::Pseudo));
    let err = (map.inverse().unwrap() * &w - DMatrix::<f64>::identity(2, 2)).norm();
    assert!(err <= 1e-10);
}
