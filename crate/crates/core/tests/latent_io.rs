mod common;

use std::collections::HashSet;

use common::{gaussian, rng};
use latlink::latentio::{
    apply_standardizer, fit_standardizer, load_latents, pair_by_state, save_latents, Format,
    LatentSet, SplitManifest,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn set_strategy() -> impl Strategy<Value = LatentSet> {
    (1usize..6, 1usize..40).prop_flat_map(|(d, n)| {
        (
            proptest::collection::vec(
                prop_oneof![
                    -1e6f64..1e6,
                    any::<f64>().prop_filter("finite", |v| v.is_finite()),
                    Just(0.0),
                    Just(-0.0),
                    Just(f64::MIN_POSITIVE),
                ],
                d * n,
            ),
            proptest::collection::hash_set("[a-zA-Z0-9_:./-]{1,12}", n),
        )
            .prop_map(move |(vals, ids)| {
                let mut ids: Vec<String> = ids.into_iter().collect();
                ids.sort();
                LatentSet::new(DMatrix::from_vec(d, n, vals), ids, "view").unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bin_round_trip_is_bitwise(set in set_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("view.bin");
        save_latents(&set, &path, Format::Bin).unwrap();
        let back = load_latents(&path, Format::Bin).unwrap();
        prop_assert_eq!(back.state_ids(), set.state_ids());
        let bits = |s: &LatentSet| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&set));
    }

    #[test]
    fn csv_round_trip_within_tolerance(set in set_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("view.csv");
        save_latents(&set, &path, Format::Csv).unwrap();
        let back = load_latents(&path, Format::Csv).unwrap();
        prop_assert_eq!(back.state_ids(), set.state_ids());
        for (a, b) in back.values().iter().zip(set.values().iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs(), "{} vs {}", a, b);
        }
    }

    #[test]
    fn split_partitions_shared_states(
        n1 in 2usize..60,
        n2 in 2usize..60,
        offset in 0usize..30,
        fraction in 0.2f64..0.8,
        seed in any::<u64>(),
    ) {
        let ids1: Vec<String> = (0..n1).map(|i| format!("s{i}")).collect();
        let ids2: Vec<String> = (offset..offset + n2).map(|i| format!("s{i}")).collect();
        let shared: HashSet<&String> = ids1.iter().filter(|id| ids2.contains(id)).collect();
        let v1 = LatentSet::new(DMatrix::zeros(2, n1), ids1.clone(), "a").unwrap();
        let v2 = LatentSet::new(DMatrix::zeros(3, n2), ids2.clone(), "b").unwrap();
        match pair_by_state(v1.clone(), v2.clone(), fraction, seed) {
            Ok(data) => {
                let train: HashSet<String> = data.train_ids().into_iter().collect();
                let test: HashSet<String> = data.test_ids().into_iter().collect();
                prop_assert!(train.is_disjoint(&test));
                let union: HashSet<&String> = train.iter().chain(test.iter()).collect();
                prop_assert_eq!(union, shared);
                let again = pair_by_state(v1, v2, fraction, seed).unwrap();
                prop_assert_eq!(again.train_ids(), data.train_ids());
            }
            // only legitimate failures: too few shared states or an empty side
            Err(e) => prop_assert!(
                shared.len() < 2 || matches!(e, latlink::Error::EmptySplit(_)),
                "{e}"
            ),
        }
    }

    #[test]
    fn train_statistics_centre_train_split(seed in any::<u64>(), d in 1usize..6, n in 5usize..80) {
        let mut r = rng(seed);
        let vals = gaussian(d, n, &mut r) * 7.0 + DMatrix::from_element(d, n, 3.0);
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let set = LatentSet::new(vals, ids.clone(), "v").unwrap();
        let train = &ids[..n / 2 + 1];
        let stats = fit_standardizer(&set, train).unwrap();
        let z = apply_standardizer(&set.subset(train).unwrap(), &stats).unwrap();
        for row in z.values().row_iter() {
            prop_assert!(row.mean().abs() <= 1e-10);
        }
        prop_assert!(stats.scale.iter().all(|&s| s > 0.0));
    }
}

#[test]
fn standard_normal_statistics() {
    let mut r = rng(1);
    let n = 10_000;
    let set = LatentSet::new(
        gaussian(3, n, &mut r),
        (0..n).map(|i| format!("s{i}")).collect(),
        "v",
    )
    .unwrap();
    let stats = fit_standardizer(&set, set.state_ids()).unwrap();
    for (m, s) in stats.mean.iter().zip(&stats.scale) {
        assert!(m.abs() < 0.05 && (s - 1.0).abs() < 0.05, "{m} {s}");
    }
}

#[test]
fn manifest_reproduces_split() {
    let ids: Vec<String> = (0..50).map(|i| format!("s{i}")).collect();
    let v1 = LatentSet::new(DMatrix::zeros(2, 50), ids.clone(), "a").unwrap();
    let v2 = LatentSet::new(DMatrix::zeros(2, 50), ids, "b").unwrap();
    let data = pair_by_state(v1.clone(), v2.clone(), 0.5, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    data.split_manifest().save(&path).unwrap();
    let again = SplitManifest::load(&path).unwrap().apply(v1, v2).unwrap();
    assert_eq!(again.train_ids(), data.train_ids());
    assert_eq!(again.test_ids(), data.test_ids());
}
