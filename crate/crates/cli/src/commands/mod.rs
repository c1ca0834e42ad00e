pub mod data;
pub mod probe;
pub mod sweep;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Command, Patch, ReplayArgs};
use crate::config::{self, read_config_file, resolve, to_value};
use crate::failure::{io_err, usage, CliResult};
use crate::run::Run;

fn go<T, F>(command: &str, file: Option<Value>, flags: Value, out: &Path, body: F) -> CliResult<()>
where
    T: Default + Serialize + DeserializeOwned,
    F: FnOnce(&T, &mut Run) -> CliResult<()>,
{
    let cfg: T = resolve(file, flags)?;
    let mut run = Run::create(out)?;
    body(&cfg, &mut run)?;
    run.finish(command, to_value(&cfg))
}

/// Runs `command` with a config value (already path-resolved) and a flag
/// patch.
fn dispatch(command: &str, file: Option<Value>, flags: Value, out: &Path) -> CliResult<()> {
    match command {
        "gen" => go(command, file, flags, out, data::gen),
        "fit" => go(command, file, flags, out, data::fit),
        "eval" => go(command, file, flags, out, data::eval),
        "diagnose" => go(command, file, flags, out, data::diagnose),
        "project" => go(command, file, flags, out, data::project),
        "sweep" => go(command, file, flags, out, sweep::sweep),
        "emerge" => go(command, file, flags, out, train::emerge),
        "collab" => go(command, file, flags, out, train::collab),
        "probe" => go(command, file, flags, out, probe::probe),
        other => Err(usage(format!("unknown command {other:?}"))),
    }
}

fn replay(args: &ReplayArgs) -> CliResult<()> {
    let path = &args.manifest;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let manifest: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let command = manifest["command"]
        .as_str()
        .ok_or_else(|| usage(format!("{} has no command", path.display())))?;
    let out = match (&args.out, manifest["out"].as_str()) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => PathBuf::from(o),
        (None, None) => return Err(usage("no output directory given or recorded")),
    };
    dispatch(command, Some(manifest["config"].clone()), json!({}), &out)
}

pub fn execute(command: &Command) -> CliResult<()> {
    let mut p = Patch::default();
    let (name, common) = match command {
        Command::Replay(r) => return replay(r),
        Command::Gen(a) => {
            a.world.patch(&mut p, "world");
            p.set("format", a.format.clone()).set("label_seed", a.label_seed);
            ("gen", &a.common)
        }
        Command::Fit(a) => {
            a.data.patch(&mut p, "data");
            a.fit.patch(&mut p, "fit");
            a.report.patch(&mut p, "report");
            ("fit", &a.common)
        }
        Command::Eval(a) => {
            a.data.patch(&mut p, "data");
            a.report.patch(&mut p, "report");
            p.set("map", a.map.clone())
                .set("shift_view1", a.shift_view1.clone())
                .set("shift_view2", a.shift_view2.clone());
            ("eval", &a.common)
        }
        Command::Diagnose(a) => {
            p.set("map", a.map.clone());
            ("diagnose", &a.common)
        }
        Command::Sweep(a) => {
            p.set("axis", a.axis.clone())
                .set("eps", a.eps.clone())
                .set("budgets", a.budgets.clone())
                .set("seeds", a.seeds.clone())
                .set("shift_sigmas", a.shift_sigmas.clone())
                .set("sweep_seed", a.sweep_seed);
            a.data.patch(&mut p, "data");
            a.world.patch(&mut p, "world");
            a.fit.patch(&mut p, "fit");
            a.report.patch(&mut p, "report");
            ("sweep", &a.common)
        }
        Command::Emerge(a) => {
            a.world.patch(&mut p, "world");
            a.train.patch(&mut p);
            p.flag("shuffle_view2", a.shuffle_view2, true)
                .set("checkpoints", a.checkpoints.clone());
            a.fit.patch(&mut p, "fit");
            a.report.patch(&mut p, "report");
            ("emerge", &a.common)
        }
        Command::Collab(a) => {
            p.set("collab.mode", a.mode.clone())
                .set("collab.beta", a.beta)
                .set("collab.gamma", a.gamma)
                .set("collab.refit_interval", a.refit_interval)
                .set("collab.threshold_value", a.threshold)
                .set("collab.eval_interval", a.eval_interval)
                .set("collab.mutual_style", a.mutual_style.clone())
                .set("teacher_steps", a.teacher_steps)
                .set("compare_scratch", a.compare_scratch)
                .set("label_seed", a.label_seed);
            a.world.patch(&mut p, "world");
            a.train.patch(&mut p);
            a.fit.patch(&mut p, "fit");
            a.report.patch(&mut p, "report");
            ("collab", &a.common)
        }
        Command::Probe(a) => {
            a.data.patch(&mut p, "data");
            if let (Some(dir), None) = (&a.data.data, &a.labels) {
                let labels = dir.join("labels.csv");
                p.set("labels", labels.exists().then_some(labels));
            }
            p.set("labels", a.labels.clone())
                .set("label_seed", a.label_seed)
                .set("probe_lambda", a.probe_lambda)
                .flag("transfer", a.transfer, true)
                .flag("standardize", a.raw, false);
            a.world.patch(&mut p, "world");
            a.fit.patch(&mut p, "fit");
            ("probe", &a.common)
        }
        Command::Project(a) => {
            p.set("input", a.input.clone()).set("dims", a.dims);
            a.data.patch(&mut p, "data");
            p.set("map", a.map.clone());
            ("project", &a.common)
        }
    };
    let file = common
        .config
        .as_deref()
        .map(|path| read_config_file(path, name))
        .transpose()?;
    dispatch(name, file, p.into_value(), &config::absolute(&common.out))
}
