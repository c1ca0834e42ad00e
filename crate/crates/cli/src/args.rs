//! Command-line surface. Every flag is optional and, when given, overrides the
//! same key from `--config`; unset flags leave the config value alone.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Parser)]
#[command(name = "latlink", version, about = "Fit, score and stress-test linear maps between latent spaces")]
pub struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, env = "LATLINK_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-view world with a known optimal map.
    Gen(GenArgs),
    /// Fit an alignment map on paired latents and score it on the test split.
    Fit(FitArgs),
    /// Score a saved map on paired latents, optionally on a shifted set too.
    Eval(EvalArgs),
    /// Spectrum diagnostics of a saved map.
    Diagnose(DiagnoseArgs),
    /// Pair-noise, pair-budget, seed or distribution-shift sweeps.
    Sweep(SweepArgs),
    /// Train two toy JEPA models independently and align them post hoc.
    Emerge(EmergeArgs),
    /// Collaboration protocols: probe, teacher-student, mutual.
    Collab(CollabArgs),
    /// Train a linear probe on view 1 and migrate it to view 2.
    Probe(ProbeArgs),
    /// PCA projections for plotting, before and after alignment.
    Project(ProjectArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML or JSON config file; a run manifest is accepted too.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

/// Builds the JSON patch that flags apply on top of the config.
#[derive(Default)]
pub struct Patch(Map<String, Value>);

impl Patch {
    pub fn set<T: Serialize>(&mut self, path: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            let mut keys: Vec<&str> = path.split('.').collect();
            let last = keys.pop().expect("non-empty key path");
            let mut obj = &mut self.0;
            for k in keys {
                obj = obj
                    .entry(k)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("patch keys are objects");
            }
            obj.insert(last.to_string(), v);
        }
        self
    }

    pub fn flag(&mut self, path: &str, on: bool, value: bool) -> &mut Self {
        self.set(path, on.then_some(value))
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

#[derive(Debug, Args, Default)]
pub struct WorldFlags {
    /// State dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of states.
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise std added to view 2.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// World seed (states, noise, mixing matrices, split).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Condition number of the view-1 mixing matrix.
    #[arg(long, allow_negative_numbers = true)]
    pub kappa1: Option<f64>,
    /// Condition number of the view-2 mixing matrix.
    #[arg(long, allow_negative_numbers = true)]
    pub kappa2: Option<f64>,
    /// State distribution.
    #[arg(long, value_parser = ["normal", "uniform-cube"])]
    pub distribution: Option<String>,
    /// Fraction of states assigned to train.
    #[arg(long, allow_negative_numbers = true)]
    pub train_fraction: Option<f64>,
    /// State `n` is named `s{id_offset + n}`.
    #[arg(long)]
    pub id_offset: Option<usize>,
}

impl WorldFlags {
    pub fn patch(&self, p: &mut Patch, prefix: &str) {
        p.set(&format!("{prefix}.d"), self.d)
            .set(&format!("{prefix}.n"), self.n)
            .set(&format!("{prefix}.sigma"), self.sigma)
            .set(&format!("{prefix}.seed"), self.seed)
            .set(&format!("{prefix}.kappa1"), self.kappa1)
            .set(&format!("{prefix}.kappa2"), self.kappa2)
            .set(&format!("{prefix}.distribution"), self.distribution.clone())
            .set(&format!("{prefix}.train_fraction"), self.train_fraction)
            .set(&format!("{prefix}.id_offset"), self.id_offset);
    }
}

#[derive(Debug, Args, Default)]
pub struct DataFlags {
    /// Directory written by `gen` or `emerge` (view1, view2, pairs.json).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// View-1 latents (.csv or bin).
    #[arg(long)]
    pub view1: Option<PathBuf>,
    /// View-2 latents (.csv or bin).
    #[arg(long)]
    pub view2: Option<PathBuf>,
    /// Split manifest with explicit train/test state ids.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Train fraction when no split manifest is given.
    #[arg(long)]
    pub split_fraction: Option<f64>,
    /// Split hash seed when no split manifest is given.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

impl DataFlags {
    pub fn patch(&self, p: &mut Patch, prefix: &str) {
        if let Some(dir) = &self.data {
            let (v1, v2, pairs) = crate::config::data_dir_files(dir);
            p.set(&format!("{prefix}.view1"), Some(v1))
                .set(&format!("{prefix}.view2"), Some(v2))
                .set(&format!("{prefix}.pairs"), pairs);
        }
        p.set(&format!("{prefix}.view1"), self.view1.clone())
            .set(&format!("{prefix}.view2"), self.view2.clone())
            .set(&format!("{prefix}.pairs"), self.pairs.clone())
            .set(&format!("{prefix}.split_fraction"), self.split_fraction)
            .set(&format!("{prefix}.split_seed"), self.split_seed);
    }
}

#[derive(Debug, Args, Default)]
pub struct FitFlags {
    #[arg(long, value_parser = ["ridge", "ols", "procrustes"])]
    pub method: Option<String>,
    /// Ridge strength.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Condition-number cutoff above which the pseudo-inverse is used.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Retry singular unregularized fits with a tiny ridge.
    #[arg(long)]
    pub auto_ridge: Option<bool>,
}

impl FitFlags {
    pub fn patch(&self, p: &mut Patch, prefix: &str) {
        p.set(&format!("{prefix}.method"), self.method.clone())
            .set(&format!("{prefix}.lambda"), self.lambda)
            .set(&format!("{prefix}.tau"), self.tau)
            .set(&format!("{prefix}.auto_ridge"), self.auto_ridge);
    }
}

#[derive(Debug, Args, Default)]
pub struct ReportFlags {
    /// Neighbourhood sizes for NOS@k.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long)]
    pub dsc_max_points: Option<usize>,
    #[arg(long)]
    pub dsc_seed: Option<u64>,
    /// Fit and score raw latents instead of standardized ones.
    #[arg(long)]
    pub raw: bool,
}

impl ReportFlags {
    pub fn patch(&self, p: &mut Patch, prefix: &str) {
        p.set(&format!("{prefix}.ks"), self.ks.clone())
            .set(&format!("{prefix}.dsc_max_points"), self.dsc_max_points)
            .set(&format!("{prefix}.dsc_seed"), self.dsc_seed)
            .flag(&format!("{prefix}.standardize"), self.raw, false);
    }
}

#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    /// Optimizer steps per model.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size (0 = full batch).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Predictor step size relative to the learning rate.
    #[arg(long)]
    pub predictor_lr_scale: Option<f64>,
    /// Encoder and predictor hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Latent dimension (defaults to the state dimension).
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, value_parser = ["tanh", "identity"])]
    pub activation: Option<String>,
    /// Extra pure-noise observation coordinates.
    #[arg(long)]
    pub nuisance_dims: Option<usize>,
    /// Jitter std on the signal coordinates of each observation.
    #[arg(long)]
    pub jitter_std: Option<f64>,
    /// Seeds of the two models, e.g. `11,22`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

impl TrainFlags {
    pub fn patch(&self, p: &mut Patch) {
        p.set("train.steps", self.steps)
            .set("train.learning_rate", self.lr)
            .set("train.batch_size", self.batch_size)
            .set("train.predictor_lr_scale", self.predictor_lr_scale)
            .set("model.hidden", self.hidden)
            .set("model.pred_hidden", self.hidden)
            .set("model.latent_dim", self.latent_dim)
            .set("model.activation", self.activation.clone())
            .set("observation.nuisance_dims", self.nuisance_dims)
            .set("observation.jitter_std", self.jitter_std)
            .set("seeds", self.seeds.clone());
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub world: WorldFlags,
    /// Latent file format.
    #[arg(long, value_parser = ["bin", "csv"])]
    pub format: Option<String>,
    /// Seed of the hyperplane labeling written to labels.csv.
    #[arg(long)]
    pub label_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
    /// Saved map (stem, `.json` or `.alnw` path).
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// View-1 latents of a shifted evaluation set.
    #[arg(long)]
    pub shift_view1: Option<PathBuf>,
    /// View-2 latents of a shifted evaluation set.
    #[arg(long)]
    pub shift_view2: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Saved map (stem, `.json` or `.alnw` path).
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = ["pair-noise", "pair-budget", "seeds", "shift"])]
    pub axis: Option<String>,
    /// Mismatch rates for the pair-noise axis.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Train-pair budgets for the pair-budget axis.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    /// Seeds for the seeds axis.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// View-2 noise levels of the shifted sets for the shift axis.
    #[arg(long, value_delimiter = ',')]
    pub shift_sigmas: Option<Vec<f64>>,
    /// Seed of the mismatch and budget selections.
    #[arg(long)]
    pub sweep_seed: Option<u64>,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub world: WorldFlags,
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct EmergeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub world: WorldFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Shuffle view 2's observation coordinates (structure-destroying control).
    #[arg(long)]
    pub shuffle_view2: bool,
    /// Fractions of the step budget at which the alignment is scored.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<f64>>,
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct CollabArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = ["probe", "teacher-student", "mutual"])]
    pub mode: Option<String>,
    /// Weight of the alignment term in teacher-student training.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Weight of the cross-model term in mutual teaching.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Steps between refits of the map.
    #[arg(long)]
    pub refit_interval: Option<usize>,
    /// Probe-accuracy threshold defining time-to-threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Steps between threshold evaluations.
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long, value_parser = ["cross-loss", "alternating"])]
    pub mutual_style: Option<String>,
    /// Training steps of the frozen teacher.
    #[arg(long)]
    pub teacher_steps: Option<usize>,
    /// Also train the student from scratch (β = 0) for comparison.
    #[arg(long)]
    pub compare_scratch: Option<bool>,
    #[arg(long)]
    pub label_seed: Option<u64>,
    #[command(flatten)]
    pub world: WorldFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
    /// CSV of `state_id,label` (defaults to labels.csv in --data).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub world: WorldFlags,
    /// Seed of the hyperplane labeling when no labels file is given.
    #[arg(long)]
    pub label_seed: Option<u64>,
    /// Ridge strength of the probe.
    #[arg(long)]
    pub probe_lambda: Option<f64>,
    /// Migrate the probe to view 2 and compare three accuracies.
    #[arg(long)]
    pub transfer: bool,
    /// Fit on raw latents instead of standardized ones.
    #[arg(long)]
    pub raw: bool,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub common: Common,
    /// A single latent file to project.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataFlags,
    /// Saved map: project view 1 and aligned view 2 on view 1's axes.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub dims: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// manifest.json written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (defaults to the original one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
