//! gen, fit, eval, diagnose and project: everything that works on latent
//! files and saved maps.

use std::fmt::Write as _;

use latlink::align::{load_map, save_map, AlignmentMap};
use latlink::diagnostics::{distribution_shift_eval, pca_project, projection_csv, spectrum};
use latlink::latentio::{fmt_f64, load_latents, save_latents, Format, LatentSet, PairedDataset};
use latlink::metrics::{aligned_latents, report_prepared, ReportConfig};
use latlink::pipeline::{evaluate, Prepared};
use latlink::synthworld::{generate, hyperplane_labels, oracle_map, sample_states};
use nalgebra::DMatrix;
use serde_json::json;

use crate::config::{DiagnoseConfig, EvalConfig, FitCmdConfig, GenConfig, ProjectConfig};
use crate::failure::{usage, CliResult};
use crate::run::Run;

pub fn save_map_as(run: &mut Run, stem: &str, map: &AlignmentMap) -> CliResult<()> {
    run.path(&format!("{stem}.json"));
    let path = run.path(&format!("{stem}.alnw"));
    save_map(map, &path.with_extension(""))?;
    Ok(())
}

pub fn save_views(run: &mut Run, data: &PairedDataset, format: Format) -> CliResult<()> {
    let ext = match format {
        Format::Bin => "bin",
        Format::Csv => "csv",
    };
    save_latents(data.view1(), &run.path(&format!("view1.{ext}")), format)?;
    save_latents(data.view2(), &run.path(&format!("view2.{ext}")), format)?;
    data.split_manifest().save(&run.path("pairs.json"))?;
    Ok(())
}

pub fn gen(cfg: &GenConfig, run: &mut Run) -> CliResult<()> {
    let spec = cfg.world.build()?;
    let data = generate(&spec)?;
    save_views(run, &data, cfg.format)?;
    let labels = hyperplane_labels(&sample_states(&spec)?, cfg.label_seed);
    let mut csv = String::from("state_id,label\n");
    for (id, l) in spec.state_ids().iter().zip(&labels) {
        writeln!(csv, "{id},{l}").expect("writing to a String");
    }
    run.write("labels.csv", csv)?;
    let oracle = oracle_map(&spec)?;
    save_map_as(run, "oracle", &oracle)?;
    let summary = json!({
        "d": spec.state_dim,
        "n": spec.n_samples,
        "train": data.train_ids().len(),
        "test": data.test_ids().len(),
        "oracle_kappa": oracle.condition_number(),
        "out": run.dir().to_string_lossy(),
    });
    println!("{summary}");
    Ok(())
}

pub fn fit(cfg: &FitCmdConfig, run: &mut Run) -> CliResult<()> {
    let data = cfg.data.load()?;
    let ev = evaluate(&data, &cfg.fit, &cfg.report)?;
    save_map_as(run, "map", &ev.map)?;
    let report = ev.report.to_json(Some(&ev.map));
    run.write_json("report.json", &report)?;
    run.write_json("spectrum.json", &ev.spectrum)?;
    println!("{report}");
    Ok(())
}

fn map_path(map: &Option<std::path::PathBuf>) -> CliResult<std::path::PathBuf> {
    map.clone().ok_or_else(|| usage("--map is required"))
}

pub fn eval(cfg: &EvalConfig, run: &mut Run) -> CliResult<()> {
    let map = load_map(&map_path(&cfg.map)?)?;
    let report_cfg = ReportConfig {
        standardize: map.standardized(),
        ..cfg.report.clone()
    };
    let data = cfg.data.load()?;
    let prepared = Prepared::new(&data, report_cfg.standardize)?;
    let report = report_prepared(&prepared, &map, &report_cfg)?.to_json(Some(&map));
    run.write_json("report.json", &report)?;
    println!("{report}");
    match (&cfg.shift_view1, &cfg.shift_view2) {
        (None, None) => {}
        (Some(p1), Some(p2)) => {
            let v1 = load_latents(p1, Format::from_path(p1))?;
            let v2 = load_latents(p2, Format::from_path(p2))?;
            let shifted = PairedDataset::eval_only(v1, v2)?;
            let r = distribution_shift_eval(&data, &shifted, &map, &report_cfg)?;
            let out = json!({
                "in_domain": r.in_domain.to_json(None),
                "shifted": r.shifted.to_json(None),
                "delta_r2": r.shifted.r2 - r.in_domain.r2,
            });
            run.write_json("shift.json", &out)?;
            println!("{out}");
        }
        _ => return Err(usage("a shifted set needs both shift_view1 and shift_view2")),
    }
    Ok(())
}

pub fn diagnose(cfg: &DiagnoseConfig, run: &mut Run) -> CliResult<()> {
    let map = load_map(&map_path(&cfg.map)?)?;
    let s = spectrum(&map);
    run.write_json("spectrum.json", &s)?;
    println!("{}", serde_json::to_string(&s).map_err(latlink::Error::from)?);
    Ok(())
}

/// `axesᵀ (x − mean)` for points outside the set the axes came from.
fn project_onto(x: &DMatrix<f64>, mean: &DMatrix<f64>, axes: &DMatrix<f64>) -> DMatrix<f64> {
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= mean.column(0);
    }
    axes.transpose() * centered
}

fn push_rows(out: &mut String, ids: &[String], space: &str, coords: &DMatrix<f64>) {
    for (n, id) in ids.iter().enumerate() {
        out.push_str(id);
        out.push(',');
        out.push_str(space);
        for v in coords.column(n).iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
}

/// Either projects a single latent file, or, given paired data and a map,
/// projects the test split of view 1 and of aligned view 2 onto view 1's
/// principal axes (plus view 2 on its own axes, before alignment).
pub fn project(cfg: &ProjectConfig, run: &mut Run) -> CliResult<()> {
    if let Some(input) = &cfg.input {
        let set = load_latents(input, Format::from_path(input))?;
        let proj = pca_project(&set, cfg.dims)?;
        run.write("projection.csv", projection_csv(&set, &proj))?;
        run.write_json("projection.json", &json!({ "explained": proj.explained }))?;
        return Ok(());
    }
    if !cfg.data.is_set() {
        return Err(usage("project needs --input, or paired data and --map"));
    }
    let map = load_map(&map_path(&cfg.map)?)?;
    let data = cfg.data.load()?;
    let prepared = Prepared::new(&data, map.standardized())?;
    let ids = prepared.test_ids.clone();
    let x = LatentSet::new(prepared.x_test.clone(), ids.clone(), "view1")?;
    let y = LatentSet::new(prepared.y_test.clone(), ids.clone(), "view2")?;
    let px = pca_project(&x, cfg.dims)?;
    let py = pca_project(&y, cfg.dims)?;
    let mean = DMatrix::from_column_slice(x.dim(), 1, x.values().column_mean().as_slice());
    let aligned = project_onto(&aligned_latents(&prepared.y_test, &map)?, &mean, &px.axes);
    let mut csv = String::from("state_id,space");
    for k in 1..=cfg.dims {
        write!(csv, ",pc{k}").expect("writing to a String");
    }
    csv.push('\n');
    push_rows(&mut csv, &ids, "view1", &px.coords);
    push_rows(&mut csv, &ids, "view2", &py.coords);
    push_rows(&mut csv, &ids, "view2_aligned", &aligned);
    run.write("projection.csv", csv)?;
    run.write_json(
        "projection.json",
        &json!({ "explained_view1": px.explained, "explained_view2": py.explained }),
    )?;
    Ok(())
}
