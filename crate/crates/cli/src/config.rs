//! Per-command configs and their resolution: defaults, then the config file,
//! then flags. Relative paths in a config file are taken relative to the file;
//! relative paths given as flags are taken relative to the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use latlink::collab::CollabConfig;
use latlink::diagnostics::SweepAxis;
use latlink::latentio::{load_latents, pair_by_state, Format, LatentSet, PairedDataset, SplitManifest};
use latlink::metrics::ReportConfig;
use latlink::pipeline::FitConfig;
use latlink::synthworld::WorldConfig;
use latlink::toyjepa::{ModelConfig, ObservationConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::failure::{io_err, usage, CliResult};

/// Keys whose string values are filesystem paths.
const PATH_KEYS: &[&str] = &["view1", "view2", "pairs", "map", "labels", "input", "shift_view1", "shift_view2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub view1: Option<PathBuf>,
    pub view2: Option<PathBuf>,
    /// Explicit split; when absent the views are paired by hashing state ids.
    pub pairs: Option<PathBuf>,
    pub split_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            view1: None,
            view2: None,
            pairs: None,
            split_fraction: 0.8,
            split_seed: 0,
        }
    }
}

impl DataConfig {
    pub fn is_set(&self) -> bool {
        self.view1.is_some() || self.view2.is_some()
    }

    pub fn views(&self) -> CliResult<(LatentSet, LatentSet)> {
        let (Some(p1), Some(p2)) = (&self.view1, &self.view2) else {
            return Err(usage("both view1 and view2 latents are required"));
        };
        Ok((
            load_latents(p1, Format::from_path(p1))?,
            load_latents(p2, Format::from_path(p2))?,
        ))
    }

    pub fn load(&self) -> CliResult<PairedDataset> {
        let (v1, v2) = self.views()?;
        self.pair(v1, v2, self.split_seed)
    }

    pub fn pair(&self, v1: LatentSet, v2: LatentSet, split_seed: u64) -> CliResult<PairedDataset> {
        Ok(match &self.pairs {
            Some(p) => SplitManifest::load(p)?.apply(v1, v2)?,
            None => pair_by_state(v1, v2, self.split_fraction, split_seed)?,
        })
    }
}

/// `view1`/`view2` (bin preferred over csv) and `pairs.json` inside a data
/// directory.
pub fn data_dir_files(dir: &Path) -> (PathBuf, PathBuf, Option<PathBuf>) {
    let pick = |stem: &str| {
        let bin = dir.join(format!("{stem}.bin"));
        let csv = dir.join(format!("{stem}.csv"));
        if !bin.exists() && csv.exists() {
            csv
        } else {
            bin
        }
    };
    let pairs = dir.join("pairs.json");
    (pick("view1"), pick("view2"), pairs.exists().then_some(pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub world: WorldConfig,
    pub format: Format,
    pub label_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            format: Format::Bin,
            label_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitCmdConfig {
    pub data: DataConfig,
    pub fit: FitConfig,
    pub report: ReportConfig,
}

/// `report.standardize` is taken from the map, which records whether it was
/// fitted on standardized latents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub data: DataConfig,
    pub map: Option<PathBuf>,
    pub report: ReportConfig,
    pub shift_view1: Option<PathBuf>,
    pub shift_view2: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub map: Option<PathBuf>,
}

/// Sweeps run on `data` when latent files are given and on `world`
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub eps: Vec<f64>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub shift_sigmas: Vec<f64>,
    pub sweep_seed: u64,
    pub data: DataConfig,
    pub world: WorldConfig,
    pub fit: FitConfig,
    pub report: ReportConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::PairNoise,
            eps: vec![0.0, 0.1, 0.3],
            budgets: vec![8, 16, 64, 512],
            seeds: vec![1, 2, 3],
            shift_sigmas: vec![0.0, 0.1, 0.2],
            sweep_seed: 0,
            data: DataConfig::default(),
            // near-orthogonal mixing: the κ(ε) trend is then monotone for
            // every seed, not just on average
            world: WorldConfig {
                seed: 1,
                kappa1: 1.0,
                kappa2: 1.0,
                ..WorldConfig::default()
            },
            fit: FitConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

fn toy_world() -> WorldConfig {
    WorldConfig {
        d: 8,
        n: 2000,
        seed: 1,
        kappa1: 2.0,
        kappa2: 3.0,
        ..WorldConfig::default()
    }
}

fn toy_observation() -> ObservationConfig {
    ObservationConfig {
        nuisance_dims: 8,
        ..ObservationConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmergeConfig {
    pub world: WorldConfig,
    /// Seeds of the two models.
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub observation: ObservationConfig,
    pub shuffle_view2: bool,
    pub checkpoints: Vec<f64>,
    pub fit: FitConfig,
    pub report: ReportConfig,
}

impl Default for EmergeConfig {
    fn default() -> Self {
        Self {
            world: toy_world(),
            seeds: vec![11, 22],
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            observation: toy_observation(),
            shuffle_view2: false,
            checkpoints: vec![0.1, 0.5, 1.0],
            fit: FitConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollabCmdConfig {
    pub world: WorldConfig,
    pub observation: ObservationConfig,
    pub model: ModelConfig,
    /// Student (teacher-student) or both models (mutual, probe).
    pub train: TrainConfig,
    pub teacher_steps: usize,
    /// Model seeds: teacher/view 1 first, student/view 2 second.
    pub seeds: Vec<u64>,
    pub label_seed: u64,
    pub collab: CollabConfig,
    pub compare_scratch: bool,
    pub fit: FitConfig,
    pub report: ReportConfig,
}

impl Default for CollabCmdConfig {
    fn default() -> Self {
        Self {
            world: toy_world(),
            observation: toy_observation(),
            model: ModelConfig::default(),
            train: TrainConfig {
                steps: 1500,
                ..TrainConfig::default()
            },
            teacher_steps: 2000,
            seeds: vec![11, 22],
            label_seed: 5,
            collab: CollabConfig {
                beta: 0.3,
                ..CollabConfig::default()
            },
            compare_scratch: true,
            fit: FitConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// Probes run on `data` with a labels file when latent files are given and
/// on `world` with hyperplane labels otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub data: DataConfig,
    pub labels: Option<PathBuf>,
    pub world: WorldConfig,
    pub label_seed: u64,
    pub fit: FitConfig,
    pub standardize: bool,
    pub probe_lambda: f64,
    pub transfer: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            labels: None,
            world: WorldConfig {
                seed: 1,
                ..WorldConfig::default()
            },
            label_seed: 0,
            fit: FitConfig::default(),
            standardize: true,
            probe_lambda: 1e-3,
            transfer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub input: Option<PathBuf>,
    pub data: DataConfig,
    pub map: Option<PathBuf>,
    pub dims: usize,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            input: None,
            data: DataConfig::default(),
            map: None,
            dims: 2,
        }
    }
}

/// Reads a TOML or JSON config. A run manifest contributes its `config`
/// block, provided it was written by `command`.
pub fn read_config_file(path: &Path, command: &str) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(|e| usage(e.to_string()))?
    };
    let value = match (value.get("command"), value.get("config")) {
        (Some(Value::String(c)), Some(cfg)) => {
            if c != command {
                return Err(usage(format!(
                    "{} is a manifest of `{c}`, not `{command}`",
                    path.display()
                )));
            }
            cfg.clone()
        }
        _ => value,
    };
    if !value.is_object() {
        return Err(usage(format!("{}: config must be a table", path.display())));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(absolutize(value, &base))
}

/// Makes every path-valued entry absolute against `base`.
pub fn absolutize(value: Value, base: &Path) -> Value {
    match value {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| {
                    let v = match v {
                        Value::String(s) if PATH_KEYS.contains(&k.as_str()) => {
                            Value::String(absolute(&base.join(s)).to_string_lossy().into_owned())
                        }
                        other => absolutize(other, base),
                    };
                    (k, v)
                })
                .collect(),
        ),
        other => other,
    }
}

pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// defaults < file < flags.
pub fn resolve<T>(file: Option<Value>, flags: Value) -> CliResult<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut merged = serde_json::to_value(T::default()).expect("default configs serialize");
    if let Some(f) = file {
        merge(&mut merged, f);
    }
    let cwd = std::env::current_dir().unwrap_or_default();
    merge(&mut merged, absolutize(flags, &cwd));
    serde_json::from_value(merged).map_err(|e| usage(format!("invalid config: {e}")))
}

/// The resolved config as written to the manifest.
pub fn to_value<T: Serialize>(cfg: &T) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Object(Map::new()))
}
