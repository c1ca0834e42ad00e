mod support;

use std::fs;

use latlink::toyjepa::load_model;
use support::{csv_columns, dir, error_line, latlink, ok, outputs, read_json, s};

#[test]
fn gen_writes_a_world_and_reruns_identically() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (dir(t.path(), "a"), dir(t.path(), "b"));
    for d in [&a, &b] {
        ok(&["gen", "--d", "16", "--n", "1000", "--sigma", "0", "--seed", "1", "--out", s(d)]);
    }
    let files = outputs(&a);
    for name in ["view1.bin", "view2.bin", "pairs.json", "labels.csv", "oracle.json", "oracle.alnw"] {
        assert!(files.contains_key(name), "{name} missing");
    }
    assert_eq!(files, outputs(&b));
    let pairs = read_json(&a.join("pairs.json"));
    let n = pairs["train"].as_array().unwrap().len() + pairs["test"].as_array().unwrap().len();
    assert_eq!(n, 1000);
}

#[test]
fn negative_sigma_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let out = latlink(&["gen", "--sigma", "-1", "--out", s(t.path())], &[]);
    assert_eq!(out.code, 2);
    let err = error_line(&out);
    assert_eq!(err["exit_code"], 2);
    assert!(err["message"].as_str().unwrap().contains("sigma"));
}

#[test]
fn bad_flags_and_missing_inputs_are_usage_errors() {
    let t = tempfile::tempdir().unwrap();
    let out = latlink(&["fit", "--bogus", "--out", s(t.path())], &[]);
    assert_eq!(out.code, 2);
    error_line(&out);
    let out = latlink(&["fit", "--out", s(t.path())], &[]);
    assert_eq!(out.code, 2);
    assert_eq!(error_line(&out)["error"], "usage");
    let missing = t.path().join("nope");
    let out = latlink(&["diagnose", "--map", s(&missing), "--out", s(t.path())], &[]);
    assert_eq!(out.code, 1);
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn fit_recovers_the_noiseless_world() {
    let t = tempfile::tempdir().unwrap();
    let (world, fit) = (dir(t.path(), "world"), dir(t.path(), "fit"));
    ok(&["gen", "--seed", "1", "--out", s(&world)]);
    let out = ok(&["fit", "--data", s(&world), "--out", s(&fit)]);
    let printed: serde_json::Value = serde_json::from_str(out.stdout.trim()).unwrap();
    let report = read_json(&fit.join("report.json"));
    assert_eq!(printed, report);
    assert!(report["r2"].as_f64().unwrap() >= 0.999999, "{report}");
    for key in ["mse", "cka", "dsc", "nos@10", "n_test", "dsc_subsampled", "map"] {
        assert!(report.get(key).is_some(), "{key} missing");
    }
    assert!(fit.join("map.alnw").exists() && fit.join("spectrum.json").exists());

    let diag = dir(t.path(), "diag");
    ok(&["diagnose", "--map", s(&fit.join("map")), "--out", s(&diag)]);
    let spectrum = read_json(&diag.join("spectrum.json"));
    assert_eq!(spectrum["condition_number"], report["map"]["condition_number"]);
}

#[test]
fn procrustes_on_unequal_dims_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (dir(t.path(), "a"), dir(t.path(), "b"));
    ok(&["gen", "--d", "4", "--n", "400", "--out", s(&a)]);
    ok(&["gen", "--d", "3", "--n", "400", "--out", s(&b)]);
    let args = |method: &'static str, out: &str| {
        vec![
            "fit".to_string(),
            "--view1".into(),
            s(&a.join("view1.bin")).into(),
            "--view2".into(),
            s(&b.join("view2.bin")).into(),
            "--method".into(),
            method.into(),
            "--out".into(),
            out.into(),
        ]
    };
    let p = args("procrustes", s(&dir(t.path(), "p")));
    let out = latlink(&p.iter().map(String::as_str).collect::<Vec<_>>(), &[]);
    assert_eq!(out.code, 2, "{}", out.stderr);
    assert_eq!(error_line(&out)["error"], "dimension_mismatch");
    // a rectangular ridge map is fine
    let r = args("ridge", s(&dir(t.path(), "r")));
    ok(&r.iter().map(String::as_str).collect::<Vec<_>>());
}

#[test]
fn lambda_is_recorded_in_the_manifest() {
    let t = tempfile::tempdir().unwrap();
    let (world, fit) = (dir(t.path(), "world"), dir(t.path(), "fit"));
    ok(&["gen", "--d", "4", "--n", "200", "--out", s(&world)]);
    ok(&["fit", "--data", s(&world), "--lambda", "0.1", "--ks", "1,5", "--out", s(&fit)]);
    let m = read_json(&fit.join("manifest.json"));
    assert_eq!(m["command"], "fit");
    assert_eq!(m["config"]["fit"]["lambda"], 0.1);
    assert_eq!(read_json(&fit.join("map.json"))["lambda"], 0.1);
}

#[test]
fn pair_noise_sweep_degrades_monotonically() {
    let t = tempfile::tempdir().unwrap();
    let out = dir(t.path(), "sweep");
    ok(&["sweep", "--axis", "pair-noise", "--eps", "0,0.1,0.3", "--out", s(&out)]);
    let cols = csv_columns(&out.join("sweep.csv"));
    let (r2, kappa) = (&cols["r2"], &cols["kappa"]);
    assert_eq!(r2.len(), 3);
    assert!(r2.windows(2).all(|w| w[1] < w[0]), "{r2:?}");
    assert!(kappa.windows(2).all(|w| w[1] > w[0]), "{kappa:?}");
    assert_eq!(cols["value"], vec![0.0, 0.1, 0.3]);
}

#[test]
fn seed_sweep_reports_mean_and_std() {
    let t = tempfile::tempdir().unwrap();
    let out = dir(t.path(), "sweep");
    ok(&["sweep", "--axis", "seeds", "--seeds", "1,2,3", "--sigma", "0.1", "--out", s(&out)]);
    let cols = csv_columns(&out.join("sweep.csv"));
    assert_eq!(cols["value"], vec![1.0, 2.0, 3.0]);
    for m in ["r2", "cka", "dsc", "kappa"] {
        let (mean, std) = (&cols[&format!("{m}_mean")], &cols[&format!("{m}_std")]);
        let direct = cols[m].iter().sum::<f64>() / 3.0;
        assert!((mean[0] - direct).abs() < 1e-12, "{m}");
        assert!(std[0] >= 0.0);
    }
}

#[test]
fn empty_axis_lists_are_usage_errors() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("sweep.toml");
    for (axis, key) in [("pair-noise", "eps"), ("pair-budget", "budgets"), ("seeds", "seeds"), ("shift", "shift_sigmas")] {
        fs::write(&cfg, format!("axis = \"{axis}\"\n{key} = []\n")).unwrap();
        let out = latlink(&["sweep", "--config", s(&cfg), "--out", s(&dir(t.path(), axis))], &[]);
        assert_eq!(out.code, 2, "{axis}: {}", out.stderr);
        error_line(&out);
    }
    let out = latlink(&["sweep", "--eps", "", "--out", s(t.path())], &[]);
    assert_eq!(out.code, 2);
}

#[test]
fn shift_and_budget_sweeps_write_rows() {
    let t = tempfile::tempdir().unwrap();
    let shift = dir(t.path(), "shift");
    ok(&["sweep", "--axis", "shift", "--shift-sigmas", "0,0.5", "--out", s(&shift)]);
    let r2 = &csv_columns(&shift.join("sweep.csv"))["r2"];
    assert!(r2[1] < r2[0], "{r2:?}");
    let budget = dir(t.path(), "budget");
    ok(&["sweep", "--axis", "pair-budget", "--budgets", "8,64,512", "--lambda", "1", "--out", s(&budget)]);
    assert_eq!(csv_columns(&budget.join("sweep.csv"))["value"], vec![8.0, 64.0, 512.0]);
}

#[test]
fn eval_scores_a_saved_map_and_a_shifted_set() {
    let t = tempfile::tempdir().unwrap();
    let (world, fit, other, ev) = (dir(t.path(), "w"), dir(t.path(), "f"), dir(t.path(), "o"), dir(t.path(), "e"));
    ok(&["gen", "--d", "6", "--n", "500", "--sigma", "0.1", "--seed", "3", "--out", s(&world)]);
    ok(&["fit", "--data", s(&world), "--out", s(&fit)]);
    // same seed, so the same mixing matrices and states, under fresh ids
    ok(&["gen", "--d", "6", "--n", "500", "--sigma", "0.1", "--seed", "3", "--id-offset", "500", "--out", s(&other)]);
    let map = fit.join("map");
    ok(&["eval", "--data", s(&world), "--map", s(&map), "--out", s(&ev)]);
    assert_eq!(read_json(&ev.join("report.json"))["r2"], read_json(&fit.join("report.json"))["r2"]);
    let shift = |v: &std::path::Path, out: &str| {
        latlink(
            &[
                "eval", "--data", s(&world), "--map", s(&map),
                "--shift-view1", s(&v.join("view1.bin")), "--shift-view2", s(&v.join("view2.bin")),
                "--out", out,
            ],
            &[],
        )
    };
    let r = shift(&other, s(&ev));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let sh = read_json(&ev.join("shift.json"));
    assert!(sh["delta_r2"].as_f64().unwrap().abs() < 0.05, "{sh}");
    // reusing the fit world's ids as the shifted set leaks fit states
    let r = shift(&world, s(&dir(t.path(), "leak")));
    assert_eq!(r.code, 2);
    assert_eq!(error_line(&r)["error"], "split_overlap");
}

#[test]
fn mutual_teaching_without_coupling_matches_independent_training() {
    let t = tempfile::tempdir().unwrap();
    let (mutual, indep) = (dir(t.path(), "mutual"), dir(t.path(), "indep"));
    ok(&["collab", "--mode", "mutual", "--gamma", "0", "--steps", "120", "--out", s(&mutual)]);
    ok(&["emerge", "--steps", "120", "--out", s(&indep)]);
    for m in ["model1.tjpa", "model2.tjpa"] {
        assert_eq!(fs::read(mutual.join(m)).unwrap(), fs::read(indep.join(m)).unwrap(), "{m}");
    }
    let a = load_model(&mutual.join("model1.tjpa")).unwrap();
    let b = load_model(&mutual.join("model2.tjpa")).unwrap();
    assert_ne!(a, b);
    let summary = read_json(&mutual.join("summary.json"));
    assert_eq!(summary["protocol"]["gamma"], 0.0);
    assert!(summary["report"]["r2"].is_number());
}

#[test]
fn teacher_student_writes_ledgers() {
    let t = tempfile::tempdir().unwrap();
    let out = dir(t.path(), "ts");
    ok(&["collab", "--teacher-steps", "100", "--steps", "120", "--out", s(&out)]);
    let ledger = csv_columns(&out.join("ledger.csv"));
    assert_eq!(ledger["step"].len(), 120);
    assert!(ledger["flops"].windows(2).all(|w| w[1] > w[0]));
    assert!(out.join("scratch_ledger.csv").exists() && out.join("student.tjpa").exists());
    let summary = read_json(&out.join("summary.json"));
    // refits at steps 0, 50 and 100 of an 8 x 8 map
    assert_eq!(summary["student"]["w_refits"], 3);
    assert_eq!(summary["student"]["w_bytes"], 3 * 8 * 8 * 8);
}

#[test]
fn probe_transfer_prints_three_accuracies() {
    let t = tempfile::tempdir().unwrap();
    let world = dir(t.path(), "world");
    ok(&["gen", "--d", "6", "--n", "600", "--out", s(&world)]);
    let out = ok(&["probe", "--data", s(&world), "--transfer", "--out", s(&dir(t.path(), "p"))]);
    for row in ["source (view 1)", "untranslated (view 2)", "migrated (view 2)"] {
        let line = out.stdout.lines().find(|l| l.starts_with(row)).unwrap_or_else(|| panic!("{row}"));
        let acc: f64 = line[row.len()..].trim().parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let probe = read_json(&dir(t.path(), "p").join("probe.json"));
    assert_eq!(probe["transfer"]["source_accuracy"], probe["transfer"]["migrated_accuracy"]);
    assert_eq!(probe["transfer"]["target_steps"], 0);
}

#[test]
fn project_writes_plot_data() {
    let t = tempfile::tempdir().unwrap();
    let (world, fit) = (dir(t.path(), "w"), dir(t.path(), "f"));
    ok(&["gen", "--d", "5", "--n", "300", "--out", s(&world)]);
    ok(&["fit", "--data", s(&world), "--out", s(&fit)]);
    let single = dir(t.path(), "single");
    ok(&["project", "--input", s(&world.join("view1.bin")), "--out", s(&single)]);
    let text = fs::read_to_string(single.join("projection.csv")).unwrap();
    assert!(text.starts_with("state_id,pc1,pc2\n"));
    assert_eq!(text.lines().count(), 301);
    let pair = dir(t.path(), "pair");
    ok(&["project", "--data", s(&world), "--map", s(&fit.join("map")), "--out", s(&pair)]);
    let text = fs::read_to_string(pair.join("projection.csv")).unwrap();
    // noiseless world: aligned view 2 lands on view 1
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let of = |space: &str| rows.iter().filter(|r| r[1] == space).cloned().collect::<Vec<_>>();
    let (v1, al) = (of("view1"), of("view2_aligned"));
    assert_eq!(v1.len(), al.len());
    for (a, b) in v1.iter().zip(&al) {
        assert_eq!(a[0], b[0]);
        for k in 2..4 {
            let (x, y): (f64, f64) = (a[k].parse().unwrap(), b[k].parse().unwrap());
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn flags_override_config_files() {
    let t = tempfile::tempdir().unwrap();
    let world = dir(t.path(), "world");
    ok(&["gen", "--d", "4", "--n", "200", "--out", s(&world)]);
    let cfg = t.path().join("fit.toml");
    fs::write(
        &cfg,
        "[data]\nview1 = \"world/view1.bin\"\nview2 = \"world/view2.bin\"\npairs = \"world/pairs.json\"\n\
         [fit]\nmethod = \"ols\"\nlambda = 0.5\n[report]\nks = [1, 3]\n",
    )
    .unwrap();
    let out = dir(t.path(), "fit");
    ok(&["fit", "--config", s(&cfg), "--lambda", "0.2", "--out", s(&out)]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["fit"]["lambda"], 0.2);
    assert_eq!(m["config"]["fit"]["method"], "ols");
    assert_eq!(m["config"]["report"]["ks"], serde_json::json!([1, 3]));
    assert_eq!(m["config"]["report"]["standardize"], true);
    assert_eq!(m["config"]["data"]["view1"], s(&world.join("view1.bin")));
    // a typo in a config key is a usage error, not silently ignored
    fs::write(&cfg, "[fit]\nlamda = 0.5\n").unwrap();
    let bad = latlink(&["fit", "--config", s(&cfg), "--out", s(&dir(t.path(), "bad"))], &[]);
    assert_eq!(bad.code, 2);
}

#[test]
fn thread_count_comes_from_the_environment() {
    let t = tempfile::tempdir().unwrap();
    let out = dir(t.path(), "w");
    let r = latlink(&["gen", "--d", "3", "--n", "50", "--out", s(&out)], &[("LATLINK_THREADS", "3")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(read_json(&out.join("manifest.json"))["threads"], 3);
    let out2 = dir(t.path(), "w2");
    let r = latlink(&["--threads", "2", "gen", "--d", "3", "--n", "50", "--out", s(&out2)], &[("LATLINK_THREADS", "3")]);
    assert_eq!(r.code, 0);
    assert_eq!(read_json(&out2.join("manifest.json"))["threads"], 2);
    assert_eq!(outputs(&out), outputs(&out2));
}

#[test]
fn replay_reproduces_outputs() {
    let t = tempfile::tempdir().unwrap();
    let (world, fit, again) = (dir(t.path(), "w"), dir(t.path(), "f"), dir(t.path(), "again"));
    ok(&["gen", "--d", "5", "--n", "300", "--sigma", "0.2", "--format", "csv", "--out", s(&world)]);
    ok(&["fit", "--data", s(&world), "--method", "procrustes", "--out", s(&fit)]);
    ok(&["replay", "--manifest", s(&fit.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(outputs(&fit), outputs(&again));
    let m1 = read_json(&fit.join("manifest.json"));
    let m2 = read_json(&again.join("manifest.json"));
    assert_eq!(m1["config"], m2["config"]);
    // a manifest is also a valid config file for its own command
    let via_config = dir(t.path(), "via");
    ok(&["fit", "--config", s(&fit.join("manifest.json")), "--out", s(&via_config)]);
    assert_eq!(outputs(&fit), outputs(&via_config));
    let wrong = latlink(&["sweep", "--config", s(&fit.join("manifest.json")), "--out", s(t.path())], &[]);
    assert_eq!(wrong.code, 2);
}

#[test]
fn emergence_run_reports_r2() {
    let t = tempfile::tempdir().unwrap();
    let out = dir(t.path(), "emerge");
    let r = ok(&["emerge", "--d", "8", "--n", "2000", "--steps", "5000", "--out", s(&out)]);
    let printed: serde_json::Value = serde_json::from_str(r.stdout.trim()).unwrap();
    let report = read_json(&out.join("report.json"));
    assert_eq!(printed, report);
    assert!(report["r2"].as_f64().unwrap() >= 0.95, "{report}");
    let steps = &csv_columns(&out.join("checkpoints.csv"))["step"];
    assert_eq!(steps, &vec![500.0, 2500.0, 5000.0]);
    // the exported latents feed straight back into `fit`
    let fit = dir(t.path(), "fit");
    ok(&["fit", "--data", s(&out), "--out", s(&fit)]);
    assert_eq!(read_json(&fit.join("report.json"))["r2"], report["r2"]);
}
