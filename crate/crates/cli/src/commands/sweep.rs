use latlink::diagnostics::{
    evaluate_data, pair_budget_sweep, pair_noise_sweep, seed_sweep, shift_sweep, SweepAxis,
};
use latlink::latentio::PairedDataset;
use latlink::seed::derive_seed;
use latlink::synthworld::{generate, SyntheticWorldSpec, WorldConfig};

use crate::config::SweepConfig;
use crate::failure::{usage, CliResult};
use crate::run::Run;

fn base_data(cfg: &SweepConfig) -> CliResult<PairedDataset> {
    if cfg.data.is_set() {
        cfg.data.load()
    } else {
        Ok(generate(&cfg.world.build()?)?)
    }
}

/// Fresh states from the same mixing matrices, with view-2 noise `sigma` and
/// ids that cannot collide with the base world's.
fn shifted_world(spec: &SyntheticWorldSpec, sigma: f64, index: usize) -> SyntheticWorldSpec {
    SyntheticWorldSpec {
        seed: derive_seed(spec.seed, &format!("shift-{index}")),
        noise_sigma: sigma,
        id_offset: spec.id_offset + spec.n_samples,
        ..spec.clone()
    }
}

pub fn sweep(cfg: &SweepConfig, run: &mut Run) -> CliResult<()> {
    let result = match cfg.axis {
        SweepAxis::PairNoise => pair_noise_sweep(&base_data(cfg)?, &cfg.eps, cfg.sweep_seed, &cfg.fit, &cfg.report)?,
        SweepAxis::PairBudget => {
            pair_budget_sweep(&base_data(cfg)?, &cfg.budgets, cfg.sweep_seed, &cfg.fit, &cfg.report)?
        }
        SweepAxis::Seed => {
            let mut distinct = cfg.seeds.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() != cfg.seeds.len() {
                return Err(usage("sweep seeds must be distinct"));
            }
            if cfg.data.is_set() {
                let (v1, v2) = cfg.data.views()?;
                seed_sweep(
                    |s| {
                        let data = cfg
                            .data
                            .pair(v1.clone(), v2.clone(), s)
                            .map_err(|e| latlink::Error::InvalidArgument(e.to_string()))?;
                        evaluate_data(&data, &cfg.fit, &cfg.report)
                    },
                    &cfg.seeds,
                )?
            } else {
                seed_sweep(
                    |s| {
                        let spec = WorldConfig { seed: s, ..cfg.world.clone() }.build()?;
                        evaluate_data(&generate(&spec)?, &cfg.fit, &cfg.report)
                    },
                    &cfg.seeds,
                )?
            }
        }
        SweepAxis::ShiftSplit => {
            if cfg.data.is_set() {
                return Err(usage("the shift axis generates its shifted sets and needs a world, not latent files"));
            }
            let spec = cfg.world.build()?;
            let fit_data = generate(&spec)?;
            let shifted = cfg
                .shift_sigmas
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let data = generate(&shifted_world(&spec, s, i))?;
                    Ok((s, PairedDataset::eval_only(data.view1().clone(), data.view2().clone())?))
                })
                .collect::<latlink::Result<Vec<_>>>()?;
            shift_sweep(&fit_data, &shifted, &cfg.fit, &cfg.report)?
        }
    };
    let csv = result.to_csv();
    run.write("sweep.csv", &csv)?;
    run.write_json("sweep.json", &result)?;
    print!("{csv}");
    Ok(())
}
