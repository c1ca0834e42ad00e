//! emerge and collab: commands that train toy JEPA models.

use std::fmt::Write as _;

use latlink::collab::{
    mutual_teach, probe_transfer_experiment, teacher_student, CollabConfig, CollabMode, CollabSetup, CostLedger,
};
use latlink::latentio::{fmt_f64, Format};
use latlink::metrics::IsomorphismReport;
use latlink::pipeline::evaluate;
use latlink::toyjepa::{
    emergence_experiment, loss_curve_csv, save_model, train, EmergenceConfig, ToyJepaModel, TrainConfig, TrainResult,
};
use serde_json::{json, Value};

use crate::commands::data::{save_map_as, save_views};
use crate::commands::probe::print_transfer;
use crate::config::{CollabCmdConfig, EmergeConfig};
use crate::failure::{usage, CliResult};
use crate::run::Run;

fn two_seeds(seeds: &[u64]) -> CliResult<(u64, u64)> {
    match seeds {
        [a, b] => Ok((*a, *b)),
        _ => Err(usage(format!("expected exactly two model seeds, got {}", seeds.len()))),
    }
}

fn save_run(run: &mut Run, name: &str, result: &TrainResult) -> CliResult<()> {
    save_model(&result.model, &run.path(&format!("{name}.tjpa")))?;
    run.write(&format!("{name}_loss.csv"), loss_curve_csv(result))
}

fn checkpoints_csv(rows: &[(usize, &IsomorphismReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return "step\n".into();
    };
    let mut out = String::from("step");
    for (name, _) in first.scalars() {
        write!(out, ",{name}").expect("writing to a String");
    }
    out.push('\n');
    for (step, r) in rows {
        out.push_str(&step.to_string());
        for (_, v) in r.scalars() {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn emerge(cfg: &EmergeConfig, run: &mut Run) -> CliResult<()> {
    let world = cfg.world.build()?;
    let seeds = two_seeds(&cfg.seeds)?;
    let ecfg = EmergenceConfig {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
        observation: cfg.observation.clone(),
        shuffle_view2: cfg.shuffle_view2,
        checkpoints: cfg.checkpoints.clone(),
        fit: cfg.fit.clone(),
        report: cfg.report.clone(),
    };
    let res = emergence_experiment(&world, seeds, &ecfg)?;
    save_run(run, "model1", &res.runs[0])?;
    save_run(run, "model2", &res.runs[1])?;
    save_views(run, &res.data, Format::Bin)?;
    save_map_as(run, "map", &res.map)?;
    let rows: Vec<_> = res.checkpoints.iter().map(|c| (c.step, &c.report)).collect();
    run.write("checkpoints.csv", checkpoints_csv(&rows))?;
    let report = res.report.to_json(Some(&res.map));
    run.write_json("report.json", &report)?;
    println!("{report}");
    Ok(())
}

fn ledger_summary(l: &CostLedger) -> Value {
    json!({
        "steps_to_threshold": l.steps_to_threshold,
        "flops_to_threshold": l.flops_to_threshold,
        "flops": l.flops,
        "w_refits": l.w_refits,
        "w_bytes": l.w_bytes,
        "non_monotone": l.non_monotone,
    })
}

fn protocol(c: &CollabConfig) -> Value {
    json!({
        "mode": c.mode,
        "beta": c.beta,
        "gamma": c.gamma,
        "refit_interval": c.refit_interval,
        "threshold_metric": c.threshold_metric,
        "threshold_value": c.threshold_value,
        "mutual_style": c.mutual_style,
    })
}

pub fn collab(cfg: &CollabCmdConfig, run: &mut Run) -> CliResult<()> {
    let world = cfg.world.build()?;
    let (s0, s1) = two_seeds(&cfg.seeds)?;
    let setup = CollabSetup::from_world(&world, &cfg.observation, (s0, s1), cfg.label_seed)?;
    let obs_dim = setup.pairs[0].obs_dim();
    let latent_dim = cfg.model.latent_dim.unwrap_or(world.state_dim);
    let init = |seed: u64| ToyJepaModel::init(obs_dim, latent_dim, &cfg.model, seed);
    let tc = |seed: u64, steps: usize| TrainConfig {
        seed,
        steps,
        ..cfg.train.clone()
    };
    let steps = cfg.train.steps;
    let mut summary = json!({ "protocol": protocol(&cfg.collab), "seeds": [s0, s1] });

    match cfg.collab.mode {
        CollabMode::TeacherStudent => {
            let teacher = train(init(s0)?, &setup.pairs[0], &tc(s0, cfg.teacher_steps))?;
            let student_cfg = tc(s1, steps);
            let res = teacher_student(&teacher.model, init(s1)?, &setup, &student_cfg, &cfg.collab)?;
            save_run(run, "teacher", &teacher)?;
            save_run(run, "student", &res.runs[0])?;
            run.write("ledger.csv", res.ledger.to_csv())?;
            summary["student"] = ledger_summary(&res.ledger);
            if cfg.compare_scratch {
                let scratch_cfg = CollabConfig {
                    beta: 0.0,
                    ..cfg.collab.clone()
                };
                let scratch = teacher_student(&teacher.model, init(s1)?, &setup, &student_cfg, &scratch_cfg)?;
                run.write("scratch_ledger.csv", scratch.ledger.to_csv())?;
                summary["scratch"] = ledger_summary(&scratch.ledger);
                if let (Some(a), Some(b)) = (res.ledger.steps_to_threshold, scratch.ledger.steps_to_threshold) {
                    if b > 0 {
                        summary["step_ratio"] = json!(a as f64 / b as f64);
                    }
                }
            }
        }
        CollabMode::Mutual => {
            let res = mutual_teach((init(s0)?, init(s1)?), &setup, (&tc(s0, steps), &tc(s1, steps)), &cfg.collab)?;
            save_run(run, "model1", &res.runs[0])?;
            save_run(run, "model2", &res.runs[1])?;
            run.write("ledger.csv", res.ledger.to_csv())?;
            summary["ledger"] = ledger_summary(&res.ledger);
            let z1 = setup.latents(&res.runs[0].model, 0)?;
            let z2 = setup.latents(&res.runs[1].model, 1)?;
            let ev = evaluate(&setup.paired(z1, z2)?, &cfg.fit, &cfg.report)?;
            summary["report"] = ev.report.to_json(Some(&ev.map));
        }
        CollabMode::Probe => {
            let m1 = train(init(s0)?, &setup.pairs[0], &tc(s0, steps))?;
            let m2 = train(init(s1)?, &setup.pairs[1], &tc(s1, steps))?;
            save_run(run, "model1", &m1)?;
            save_run(run, "model2", &m2)?;
            let data = setup.paired(setup.latents(&m1.model, 0)?, setup.latents(&m2.model, 1)?)?;
            let lookup = |id: &str| setup.ids.iter().position(|s| s == id).map(|n| setup.labels[n]);
            let (t, map) = probe_transfer_experiment(
                &data,
                &lookup,
                &cfg.fit,
                cfg.report.standardize,
                cfg.collab.probe_lambda,
            )?;
            print_transfer(&t);
            summary["transfer"] = serde_json::to_value(&t).map_err(latlink::Error::from)?;
            summary["map"] = serde_json::to_value(map.metadata()).map_err(latlink::Error::from)?;
        }
    }
    run.write_json("summary.json", &summary)?;
    if cfg.collab.mode != CollabMode::Probe {
        println!("{summary}");
    }
    Ok(())
}
