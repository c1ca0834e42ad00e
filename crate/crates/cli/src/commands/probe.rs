use std::collections::HashMap;
use std::path::Path;

use latlink::collab::{probe_transfer_experiment, ProbeTransfer};
use latlink::synthworld::{generate, hyperplane_labels, sample_states};
use serde::Deserialize;
use serde_json::json;

use crate::config::ProbeConfig;
use crate::failure::{usage, CliResult};
use crate::run::Run;

#[derive(Deserialize)]
struct LabelRow {
    state_id: String,
    label: usize,
}

fn read_labels(path: &Path) -> CliResult<HashMap<String, usize>> {
    let mut reader = csv::Reader::from_path(path).map_err(latlink::Error::from)?;
    let mut out = HashMap::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(latlink::Error::from)?;
        if out.insert(row.state_id.clone(), row.label).is_some() {
            return Err(latlink::Error::DuplicateStateId(row.state_id).into());
        }
    }
    Ok(out)
}

pub fn print_transfer(t: &ProbeTransfer) {
    let pct = |v: f64| format!("{:.4}", v);
    println!("{:<28}accuracy", "probe");
    println!("{:<28}{}", "source (view 1)", pct(t.source_accuracy));
    println!(
        "{:<28}{}",
        "untranslated (view 2)",
        t.a_probe_accuracy.map_or_else(|| "n/a".to_string(), pct)
    );
    println!("{:<28}{}", "migrated (view 2)", pct(t.migrated_accuracy));
    println!("{:<28}{:.4e}", "max score gap", t.max_score_gap);
    println!("{:<28}{:.4}", "kappa(W)", t.condition_number);
    println!("{:<28}{:?}", "inverse", t.inverse_kind);
    println!("{:<28}{}", "target-side steps", t.target_steps);
}

pub fn probe(cfg: &ProbeConfig, run: &mut Run) -> CliResult<()> {
    let (data, labels) = if cfg.data.is_set() {
        let path = cfg.labels.as_ref().ok_or_else(|| usage("a labels file is required with latent files"))?;
        (cfg.data.load()?, read_labels(path)?)
    } else {
        let spec = cfg.world.build()?;
        let l = hyperplane_labels(&sample_states(&spec)?, cfg.label_seed);
        (generate(&spec)?, spec.state_ids().into_iter().zip(l).collect())
    };
    let lookup = |id: &str| labels.get(id).copied();
    let (t, map) = probe_transfer_experiment(&data, &lookup, &cfg.fit, cfg.standardize, cfg.probe_lambda)?;
    run.write_json("probe.json", &json!({ "transfer": t, "map": map.metadata() }))?;
    if cfg.transfer {
        print_transfer(&t);
    } else {
        println!("{}", json!({ "source_accuracy": t.source_accuracy }));
    }
    Ok(())
}
