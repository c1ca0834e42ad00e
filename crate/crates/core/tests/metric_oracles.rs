mod common;

use common::*;
use latlink::align::{choose_inverse, AlignmentMap, Method};
use latlink::linalg::random_orthogonal;
use latlink::metrics::{self, report_matrices, ReportConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-12;

/// Random instance: view 1, a noisy linear image as view 2, a map fitted on
/// separate points and a reference mean.
fn instance(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, AlignmentMap, DVector<f64>) {
    let mut r = rng(seed);
    let d1 = r.random_range(1..=5);
    let d2 = r.random_range(1..=5);
    let m = r.random_range(12..=50);
    let ties = seed.is_multiple_of(4);
    let x = if ties { lattice(d1, m, &mut r) } else { gaussian(d1, m, &mut r) };
    let w = gaussian(d2, d1, &mut r);
    let noise = gaussian(d2, m, &mut r) * 0.3;
    let y = if ties { lattice(d2, m, &mut r) } else { &w * &x + noise };
    let fitted = &w + gaussian(d2, d1, &mut r) * 0.1;
    let map = choose_inverse(&AlignmentMap::from_matrix(fitted, Method::Ridge, 0.0).unwrap());
    let ybar = DVector::from_fn(d2, |_, _| r.random_range(-0.5..0.5));
    (x, y, map, ybar)
}

#[test]
fn report_matches_brute_force_on_twenty_instances() {
    let config = ReportConfig { ks: vec![1, 3, 5, 10], ..Default::default() };
    for seed in 0..20 {
        let (x, y, map, ybar) = instance(seed);
        let rep = report_matrices(&x, &y, &ybar, &map, &config).unwrap();
        let w = map.matrix();
        let aligned = matmul(map.inverse().unwrap(), &y);
        let want_mse = mse(&x, &y, w);
        let want_r2 = r2(&x, &y, w, ybar.as_slice());
        let want_cka = cka_gram(&x, &aligned);
        let want_dsc = dsc(&x, &aligned);
        assert!(close(rep.mse, want_mse, TOL), "seed {seed}: mse {} vs {want_mse}", rep.mse);
        assert!(close(rep.r2, want_r2, TOL), "seed {seed}: r2 {} vs {want_r2}", rep.r2);
        assert!(close(rep.cka, want_cka, TOL), "seed {seed}: cka {} vs {want_cka}", rep.cka);
        assert!(close(rep.dsc, want_dsc, TOL), "seed {seed}: dsc {} vs {want_dsc}", rep.dsc);
        for &k in &config.ks {
            let want = nos(&x, &aligned, k);
            assert!(close(rep.nos_at_k[&k], want, TOL), "seed {seed} k {k}");
            assert!(close(rep.no_at_k(k).unwrap(), 1.0 - want, TOL));
        }
        assert!(!rep.dsc_subsampled);
    }
}

#[test]
fn neighbour_lists_match_enumeration_with_ties() {
    let mut r = rng(77);
    for _ in 0..10 {
        let m = lattice(2, 30, &mut r);
        let lists = metrics::knn_lists(&m, 6);
        for (i, list) in lists.iter().enumerate() {
            let mut got = list.clone();
            got.sort_unstable();
            assert_eq!(got, neighbours(&m, i, 6));
        }
    }
}

#[test]
fn average_ranks_match_counting() {
    let mut r = rng(5);
    for _ in 0..50 {
        let v: Vec<f64> = (0..40).map(|_| r.random_range(0..8) as f64).collect();
        assert_eq!(metrics::average_ranks(&v), ranks(&v));
    }
}

#[test]
fn identical_spaces_have_zero_nos() {
    let mut r = rng(9);
    let a = gaussian(4, 60, &mut r);
    let nos = metrics::nos_at_k(&a, &a, &[1, 5, 10, 20]).unwrap();
    assert!(nos.values().all(|&v| v == 0.0));
}

#[test]
fn independent_spaces_overlap_near_chance() {
    // NO@k on independent spaces: each of the k neighbours of b lands in the
    // neighbour set of a with probability k/(M−1).
    let (m, k) = (400usize, 10usize);
    let mut r = rng(10);
    let a = gaussian(5, m, &mut r);
    let b = gaussian(5, m, &mut r);
    let no = 1.0 - metrics::nos_at_k(&a, &b, &[k]).unwrap()[&k];
    let p = k as f64 / (m - 1) as f64;
    let sd = (p * (1.0 - p) / (k * m) as f64).sqrt();
    assert!((no - p).abs() <= 3.0 * sd, "NO@{k} = {no}, chance {p}, sd {sd}");
}

#[test]
fn dsc_subsamples_beyond_cap() {
    let mut r = rng(11);
    let a = gaussian(3, 80, &mut r);
    let (full, flag) = metrics::dsc(&a, &a, 100, 0).unwrap();
    assert!(!flag && (full - 1.0).abs() < 1e-15);
    let (sub1, flag) = metrics::dsc(&a, &(&a * 2.0), 30, 4).unwrap();
    let (sub2, _) = metrics::dsc(&a, &(&a * 2.0), 30, 4).unwrap();
    assert!(flag);
    assert_eq!(sub1.to_bits(), sub2.to_bits());
}

fn matrix_strategy() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, u64)> {
    (1usize..5, 1usize..5, 6usize..30, any::<u64>()).prop_map(|(d1, d2, m, seed)| {
        let mut r = rng(seed);
        (gaussian(d1, m, &mut r), gaussian(d2, m, &mut r), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cka_invariant_to_scale_rotation_translation(
        (a, b, seed) in matrix_strategy(),
        s in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
    ) {
        let mut r = rng(seed ^ 0xabc);
        let q = random_orthogonal(b.nrows(), &mut r);
        let t = gaussian(b.nrows(), 1, &mut r) * 3.0;
        let mut moved = &q * &b * s;
        for mut col in moved.column_iter_mut() {
            col += &t;
        }
        let base = metrics::linear_cka(&a, &b).unwrap();
        let after = metrics::linear_cka(&a, &moved).unwrap();
        prop_assert!((base - after).abs() <= 1e-10, "{} vs {}", base, after);
    }

    #[test]
    fn dsc_invariant_to_distance_scaling((a, b, _seed) in matrix_strategy(), s in 0.01f64..100.0) {
        let base = metrics::dsc(&a, &b, 2000, 0).unwrap().0;
        let scaled = metrics::dsc(&a, &(&b * s), 2000, 0).unwrap().0;
        prop_assert!((base - scaled).abs() <= 1e-12);
    }

    #[test]
    fn metrics_ignore_column_order((a, b, seed) in matrix_strategy()) {
        let m = a.ncols();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut r = rng(seed);
        for i in (1..m).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let pa = a.select_columns(perm.iter());
        let pb = b.select_columns(perm.iter());
        let cka = metrics::linear_cka(&a, &b).unwrap();
        prop_assert!((cka - metrics::linear_cka(&pa, &pb).unwrap()).abs() <= 1e-12);
        let dsc = metrics::dsc(&a, &b, 2000, 0).unwrap().0;
        prop_assert!((dsc - metrics::dsc(&pa, &pb, 2000, 0).unwrap().0).abs() <= 1e-12);
        let ks = [1, 3];
        prop_assert_eq!(metrics::nos_at_k(&a, &b, &ks).unwrap(), metrics::nos_at_k(&pa, &pb, &ks).unwrap());
    }

    #[test]
    fn nos_is_one_minus_overlap((a, b, _seed) in matrix_strategy()) {
        let k = 2;
        let got = metrics::nos_at_k(&a, &b, &[k]).unwrap()[&k];
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert!((got - nos(&a, &b, k)).abs() <= 1e-12);
    }
}
