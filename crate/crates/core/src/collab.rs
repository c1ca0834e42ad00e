//! Collaboration through an alignment map: probe migration, teacher-student
//! representation migration and mutual teaching, with cost accounting.
//!
//! The training protocols share the toy JEPA training loop, so a zero
//! alignment weight reproduces independent training bitwise. Alignment maps
//! are refit on current latents every `refit_interval` steps and held fixed
//! (detached) in between.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::align::{accuracy, choose_inverse, fit_classifier, fit_ridge_auto, migrate_probe, predict, AlignmentMap, InverseKind, LinearProbe, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::latentio::{fmt_f64, LatentSet, PairedDataset, Split};
use crate::pipeline::{fit_prepared, FitConfig, Prepared};
use crate::seed::unit_hash;
use crate::synthworld::{hyperplane_labels, sample_states, SyntheticWorldSpec};
use crate::toyjepa::{
    clean_observations, encoder_vjp, export_observations, jepa_pairs, JepaData, ObservationConfig, ToyJepaModel, TrainConfig,
    TrainResult, Trainer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollabMode {
    Probe,
    #[default]
    TeacherStudent,
    Mutual,
}

impl fmt::Display for CollabMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollabMode::Probe => "probe",
            CollabMode::TeacherStudent => "teacher-student",
            CollabMode::Mutual => "mutual",
        })
    }
}

impl FromStr for CollabMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probe" => Ok(CollabMode::Probe),
            "teacher-student" | "teacher_student" => Ok(CollabMode::TeacherStudent),
            "mutual" => Ok(CollabMode::Mutual),
            other => Err(Error::InvalidArgument(format!("unknown collaboration mode {other:?}"))),
        }
    }
}

/// How the cross-model term of mutual teaching is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutualStyle {
    /// `γ‖z2 − W z1‖²` with gradient into both encoders.
    #[default]
    CrossLoss,
    /// Each model treats the other's latents as a fixed teacher, with one
    /// map per direction.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMetric {
    /// Held-out accuracy of a linear probe on a fixed hyperplane labeling of
    /// the underlying states.
    #[default]
    ProbeAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollabConfig {
    pub mode: CollabMode,
    pub beta: f64,
    pub gamma: f64,
    pub refit_interval: usize,
    pub tau: f64,
    pub threshold_metric: ThresholdMetric,
    pub threshold_value: f64,
    /// Steps between threshold-metric evaluations.
    pub eval_interval: usize,
    pub probe_lambda: f64,
    /// Ridge strength of map refits (`0` retries singular fits with a tiny
    /// trace-scaled ridge).
    pub w_lambda: f64,
    pub mutual_style: MutualStyle,
}

impl Default for CollabConfig {
    fn default() -> Self {
        Self {
            mode: CollabMode::TeacherStudent,
            beta: 1.0,
            gamma: 1.0,
            refit_interval: 50,
            tau: DEFAULT_TAU,
            threshold_metric: ThresholdMetric::ProbeAccuracy,
            threshold_value: 0.95,
            eval_interval: 10,
            probe_lambda: 1e-3,
            w_lambda: 0.0,
            mutual_style: MutualStyle::CrossLoss,
        }
    }
}

impl CollabConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.refit_interval == 0 || self.eval_interval == 0 {
            return Err(Error::InvalidArgument("refit_interval and eval_interval must be at least 1".into()));
        }
        if !(self.tau >= 1.0) {
            return Err(Error::InvalidArgument(format!("tau must be >= 1, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.threshold_value) {
            return Err(Error::InvalidArgument(format!(
                "threshold_value must lie in [0, 1], got {}",
                self.threshold_value
            )));
        }
        if !(self.probe_lambda >= 0.0 && self.w_lambda >= 0.0) {
            return Err(Error::InvalidArgument("ridge strengths must be >= 0".into()));
        }
        Ok(())
    }
}

/// Analytic floating-point cost model: an affine map `in → out` costs
/// `2·in·out` per sample forward, and a trained pass costs three forwards.
pub mod flops {
    use crate::toyjepa::ToyJepaModel;

    pub fn affine(fan_in: usize, fan_out: usize) -> u64 {
        2 * (fan_in * fan_out) as u64
    }

    pub fn encoder_forward(m: &ToyJepaModel) -> u64 {
        affine(m.encoder.in_dim(), m.encoder.hidden_dim()) + affine(m.encoder.hidden_dim(), m.encoder.out_dim())
    }

    pub fn predictor_forward(m: &ToyJepaModel) -> u64 {
        affine(m.predictor.in_dim(), m.predictor.hidden_dim()) + affine(m.predictor.hidden_dim(), m.predictor.out_dim())
    }

    /// One JEPA step: trained context branch plus target forward.
    pub fn jepa_step(m: &ToyJepaModel, batch: usize) -> u64 {
        batch as u64 * (3 * (encoder_forward(m) + predictor_forward(m)) + encoder_forward(m))
    }

    /// Refit of a `d2 x d1` map from `n` latent pairs by ridge normal
    /// equations.
    pub fn refit(n: usize, d1: usize, d2: usize) -> u64 {
        let (n, d1, d2) = (n as u64, d1 as u64, d2 as u64);
        2 * n * d1 * d1 + 2 * n * d1 * d2 + d1 * d1 * d1 + 2 * d1 * d1 * d2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    pub jepa_loss: Vec<f64>,
    pub align_loss: f64,
    /// Threshold metric when evaluated at this step.
    pub metric: Option<f64>,
    pub flops: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostLedger {
    pub steps_to_threshold: Option<usize>,
    pub flops_to_threshold: Option<u64>,
    pub flops: u64,
    pub w_refits: usize,
    pub w_bytes: u64,
    /// The metric dipped below the threshold after first reaching it.
    pub non_monotone: bool,
    pub rows: Vec<LedgerRow>,
}

impl CostLedger {
    fn record_refit(&mut self, d1: usize, d2: usize, n: usize) {
        self.w_refits += 1;
        self.w_bytes += (d1 * d2 * 8) as u64;
        self.flops += flops::refit(n, d1, d2);
    }

    fn record_metric(&mut self, step: usize, value: f64, threshold: f64) {
        match self.steps_to_threshold {
            None if value >= threshold => {
                self.steps_to_threshold = Some(step);
                self.flops_to_threshold = Some(self.flops);
            }
            Some(_) if value < threshold => self.non_monotone = true,
            _ => {}
        }
    }

    /// `step,jepa_loss_1[,jepa_loss_2],align_loss,metric,flops,bytes`.
    pub fn to_csv(&self) -> String {
        let models = self.rows.first().map_or(1, |r| r.jepa_loss.len());
        let mut out = String::from("step");
        for i in 1..=models {
            out.push_str(&format!(",jepa_loss_{i}"));
        }
        out.push_str(",align_loss,metric,flops,bytes\n");
        for r in &self.rows {
            out.push_str(&r.step.to_string());
            for l in &r.jepa_loss {
                out.push(',');
                out.push_str(&fmt_f64(*l));
            }
            let metric = r.metric.map(fmt_f64).unwrap_or_default();
            out.push_str(&format!(",{},{metric},{},{}\n", fmt_f64(r.align_loss), r.flops, r.bytes));
        }
        out
    }
}

/// Both views of one set of states, as seen by the two collaborating models.
#[derive(Debug, Clone)]
pub struct CollabSetup {
    /// Context/target training pairs per view.
    pub pairs: [JepaData; 2],
    /// Observations used to export latents, per view.
    pub export: [DMatrix<f64>; 2],
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl CollabSetup {
    /// View `i` observes `A_i u` through the observation model, with jitter
    /// drawn from `view_seeds.i`. States are split as `pair_by_state` would.
    pub fn from_world(
        world: &SyntheticWorldSpec,
        obs: &ObservationConfig,
        view_seeds: (u64, u64),
        label_seed: u64,
    ) -> Result<Self> {
        let states = sample_states(world)?;
        let labels = hyperplane_labels(&states, label_seed);
        let mut pairs = Vec::with_capacity(2);
        let mut export = Vec::with_capacity(2);
        for (mix, seed) in [(&world.mix1, view_seeds.0), (&world.mix2, view_seeds.1)] {
            let clean = clean_observations(mix, &states, obs, seed)?;
            pairs.push(jepa_pairs(&clean, obs, seed)?);
            export.push(export_observations(&clean, obs, seed));
        }
        let ids = world.state_ids();
        let (train_idx, test_idx): (Vec<usize>, Vec<usize>) =
            (0..ids.len()).partition(|&n| unit_hash(&ids[n], world.seed) < world.train_fraction);
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(Error::EmptySplit(world.train_fraction));
        }
        let [p0, p1]: [JepaData; 2] = pairs.try_into().expect("two views");
        let [e0, e1]: [DMatrix<f64>; 2] = export.try_into().expect("two views");
        Ok(Self {
            pairs: [p0, p1],
            export: [e0, e1],
            labels,
            ids,
            train_idx,
            test_idx,
        })
    }

    /// Exported latents of `model` on view `view`.
    pub fn latents(&self, model: &ToyJepaModel, view: usize) -> Result<DMatrix<f64>> {
        model.encode(&self.export[view])
    }

    /// Pairs two exported latent sets with this setup's split.
    pub fn paired(&self, z1: DMatrix<f64>, z2: DMatrix<f64>) -> Result<PairedDataset> {
        let v1 = LatentSet::new(z1, self.ids.clone(), "view1")?;
        let v2 = LatentSet::new(z2, self.ids.clone(), "view2")?;
        let pick = |idx: &[usize]| idx.iter().map(|&n| self.ids[n].clone()).collect();
        PairedDataset::from_split(v1, v2, pick(&self.train_idx), pick(&self.test_idx))
    }

    /// Held-out accuracy of a ridge classifier fitted on the train states.
    pub fn probe_accuracy(&self, z: &DMatrix<f64>, lambda: f64) -> Result<f64> {
        let z_tr = z.select_columns(self.train_idx.iter());
        let z_te = z.select_columns(self.test_idx.iter());
        let y_tr: Vec<usize> = self.train_idx.iter().map(|&n| self.labels[n]).collect();
        let y_te: Vec<usize> = self.test_idx.iter().map(|&n| self.labels[n]).collect();
        let probes = fit_classifier(&z_tr, &y_tr, 2, lambda)?;
        Ok(accuracy(&predict(&probes, &z_te)?, &y_te))
    }
}

#[derive(Debug, Clone)]
pub struct CollabRun {
    /// The student (teacher-student) or both models (mutual).
    pub runs: Vec<TrainResult>,
    pub ledger: CostLedger,
    /// Refit counter in effect at each step; changes only at refit steps.
    pub w_versions: Vec<usize>,
    /// Maps in effect after the last refit.
    pub maps: Vec<DMatrix<f64>>,
}

fn refit_map(z_from: &DMatrix<f64>, z_to: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    Ok(fit_ridge_auto(z_from, z_to, lambda)?.matrix().clone())
}

/// `(mean_b ‖r_b‖², r)` for `r = target − W source`.
fn align_residual(target: &DMatrix<f64>, w: &DMatrix<f64>, source: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let r = target - w * source;
    (r.norm_squared() / r.ncols() as f64, r)
}

/// Trains `student` on view 2 with the extra term `β‖z_T − W z_S‖²`, where
/// the frozen `teacher` encodes view 1 of the same states and `W` (student →
/// teacher) is refit every `refit_interval` steps. With `β = 0` the student
/// follows `train` exactly.
pub fn teacher_student(
    teacher: &ToyJepaModel,
    student: ToyJepaModel,
    setup: &CollabSetup,
    train_cfg: &TrainConfig,
    cfg: &CollabConfig,
) -> Result<CollabRun> {
    cfg.validate()?;
    let (d_t, d_s) = (teacher.latent_dim(), student.latent_dim());
    let z_teacher = teacher.encode(&setup.pairs[0].xc)?;
    let xs_fit = setup.pairs[1].xc.select_columns(setup.train_idx.iter());
    let zt_fit = z_teacher.select_columns(setup.train_idx.iter());
    let n_fit = setup.train_idx.len();

    let mut trainer = Trainer::new(student, &setup.pairs[1], train_cfg)?;
    let mut ledger = CostLedger::default();
    let mut w = DMatrix::zeros(d_t, d_s);
    let mut versions = Vec::with_capacity(train_cfg.steps);
    for step in 0..train_cfg.steps {
        if step % cfg.refit_interval == 0 {
            let zs_fit = trainer.model().encode(&xs_fit)?;
            w = refit_map(&zs_fit, &zt_fit, cfg.w_lambda)?;
            ledger.record_refit(d_s, d_t, n_fit);
            ledger.flops += n_fit as u64 * (flops::encoder_forward(trainer.model()) + flops::encoder_forward(teacher));
        }
        let metric = eval_metric(setup, &[trainer.model()], step, cfg, &mut ledger)?;
        let state = trainer.begin_step()?;
        let b = state.indices().len();
        ledger.flops += flops::jepa_step(trainer.model(), b);
        let mut align_loss = 0.0;
        let extra = if cfg.beta > 0.0 {
            let zt = z_teacher.select_columns(state.indices().iter());
            let (l, r) = align_residual(&zt, &w, state.context_latents());
            align_loss = cfg.beta * l;
            ledger.flops += b as u64 * (flops::encoder_forward(teacher) + 3 * flops::affine(d_s, d_t));
            Some(w.transpose() * r * (-2.0 * cfg.beta / b as f64))
        } else {
            None
        };
        let jepa = state.loss();
        trainer.finish_step(state, extra.as_ref(), None)?;
        versions.push(ledger.w_refits);
        ledger.rows.push(LedgerRow {
            step,
            jepa_loss: vec![jepa],
            align_loss,
            metric,
            flops: ledger.flops,
            bytes: ledger.w_bytes,
        });
    }
    eval_metric(setup, &[trainer.model()], train_cfg.steps, cfg, &mut ledger)?;
    Ok(CollabRun {
        runs: vec![trainer.finish()?],
        ledger,
        w_versions: versions,
        maps: vec![w],
    })
}

/// Evaluates the threshold metric (the minimum over `models`, each on its
/// own view) on evaluation steps.
fn eval_metric(
    setup: &CollabSetup,
    models: &[&ToyJepaModel],
    step: usize,
    cfg: &CollabConfig,
    ledger: &mut CostLedger,
) -> Result<Option<f64>> {
    if !step.is_multiple_of(cfg.eval_interval) {
        return Ok(None);
    }
    let mut worst = f64::INFINITY;
    for (i, m) in models.iter().enumerate() {
        // a single model is the student, which sees view 2
        let view = if models.len() == 1 { 1 } else { i };
        let acc = setup.probe_accuracy(&setup.latents(m, view)?, cfg.probe_lambda)?;
        worst = worst.min(acc);
    }
    ledger.record_metric(step, worst, cfg.threshold_value);
    Ok(Some(worst))
}

/// Trains both models jointly with `γ` times a cross-model consistency term.
/// Model `i` trains on view `i`; each keeps its own batch stream, and the
/// cross term is evaluated on model 1's batch. With `γ = 0` the result equals
/// two independent `train` runs.
pub fn mutual_teach(
    models: (ToyJepaModel, ToyJepaModel),
    setup: &CollabSetup,
    train_cfgs: (&TrainConfig, &TrainConfig),
    cfg: &CollabConfig,
) -> Result<CollabRun> {
    cfg.validate()?;
    if train_cfgs.0.steps != train_cfgs.1.steps {
        return Err(Error::InvalidArgument("both models need the same step budget".into()));
    }
    let steps = train_cfgs.0.steps;
    let (d1, d2) = (models.0.latent_dim(), models.1.latent_dim());
    let x1_fit = setup.pairs[0].xc.select_columns(setup.train_idx.iter());
    let x2_fit = setup.pairs[1].xc.select_columns(setup.train_idx.iter());
    let n_fit = setup.train_idx.len();
    let alternating = cfg.mutual_style == MutualStyle::Alternating;

    let mut t1 = Trainer::new(models.0, &setup.pairs[0], train_cfgs.0)?;
    let mut t2 = Trainer::new(models.1, &setup.pairs[1], train_cfgs.1)?;
    let mut ledger = CostLedger::default();
    let mut w12 = DMatrix::zeros(d2, d1);
    let mut w21 = DMatrix::zeros(d1, d2);
    let mut versions = Vec::with_capacity(steps);
    for step in 0..steps {
        if step % cfg.refit_interval == 0 {
            let z1 = t1.model().encode(&x1_fit)?;
            let z2 = t2.model().encode(&x2_fit)?;
            ledger.flops += n_fit as u64 * (flops::encoder_forward(t1.model()) + flops::encoder_forward(t2.model()));
            w12 = refit_map(&z1, &z2, cfg.w_lambda)?;
            ledger.record_refit(d1, d2, n_fit);
            if alternating {
                w21 = refit_map(&z2, &z1, cfg.w_lambda)?;
                ledger.record_refit(d2, d1, n_fit);
            }
        }
        let metric = eval_metric(setup, &[t1.model(), t2.model()], step, cfg, &mut ledger)?;
        let s1 = t1.begin_step()?;
        let s2 = t2.begin_step()?;
        let (b1, b2) = (s1.indices().len(), s2.indices().len());
        ledger.flops += flops::jepa_step(t1.model(), b1) + flops::jepa_step(t2.model(), b2);

        let mut align_loss = 0.0;
        let (mut extra1, mut extra2_dz, mut extra2_grad) = (None, None, None);
        if cfg.gamma > 0.0 {
            let g = cfg.gamma;
            // model 2 encodes model 1's batch states
            let x2 = setup.pairs[1].xc.select_columns(s1.indices().iter());
            let z2 = t2.model().encode(&x2)?;
            let (l, r) = align_residual(&z2, &w12, s1.context_latents());
            align_loss += g * l;
            extra1 = Some(w12.transpose() * &r * (-2.0 * g / b1 as f64));
            let e2 = flops::encoder_forward(t2.model());
            if alternating {
                let x1 = setup.pairs[0].xc.select_columns(s2.indices().iter());
                let z1 = t1.model().encode(&x1)?;
                let (l2, r2) = align_residual(&z1, &w21, s2.context_latents());
                align_loss += g * l2;
                extra2_dz = Some(w21.transpose() * r2 * (-2.0 * g / b2 as f64));
                ledger.flops += b1 as u64 * (e2 + 3 * flops::affine(d1, d2))
                    + b2 as u64 * (flops::encoder_forward(t1.model()) + 3 * flops::affine(d2, d1));
            } else {
                extra2_grad = Some(encoder_vjp(t2.model(), &x2, &(r * (2.0 * g / b1 as f64))));
                ledger.flops += b1 as u64 * (3 * e2 + 3 * flops::affine(d1, d2));
            }
        }
        let jepa = vec![s1.loss(), s2.loss()];
        t1.finish_step(s1, extra1.as_ref(), None)?;
        t2.finish_step(s2, extra2_dz.as_ref(), extra2_grad.as_ref())?;
        versions.push(ledger.w_refits);
        ledger.rows.push(LedgerRow {
            step,
            jepa_loss: jepa,
            align_loss,
            metric,
            flops: ledger.flops,
            bytes: ledger.w_bytes,
        });
    }
    eval_metric(setup, &[t1.model(), t2.model()], steps, cfg, &mut ledger)?;
    let mut maps = vec![w12];
    if alternating {
        maps.push(w21);
    }
    Ok(CollabRun {
        runs: vec![t1.finish()?, t2.finish()?],
        ledger,
        w_versions: versions,
        maps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTransfer {
    /// Source probe on view 1.
    pub source_accuracy: f64,
    /// Source probe applied to view 2 untranslated (equal dimensions only).
    pub a_probe_accuracy: Option<f64>,
    /// Migrated probe on view 2.
    pub migrated_accuracy: f64,
    /// Largest gap between migrated scores on view 2 and source scores on
    /// view 1.
    pub max_score_gap: f64,
    #[serde(with = "crate::diagnostics::inf_as_null")]
    pub condition_number: f64,
    pub inverse_kind: InverseKind,
    /// Optimization steps spent on the target side.
    pub target_steps: usize,
}

/// Compares a view-1 classifier on view 1, applied directly to view 2, and
/// migrated through `map` to view 2, on paired columns of `z1` and `z2`.
pub fn probe_transfer_eval(
    probes: &[LinearProbe],
    map: &AlignmentMap,
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
    labels: &[usize],
) -> Result<ProbeTransfer> {
    if z1.ncols() != labels.len() || z2.ncols() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} and {} latents",
            labels.len(),
            z1.ncols(),
            z2.ncols()
        )));
    }
    let map = match map.inverse_kind() {
        Some(_) => map.clone(),
        None => choose_inverse(map),
    };
    let migrated = probes.iter().map(|p| migrate_probe(p, &map)).collect::<Result<Vec<_>>>()?;
    let mut gap: f64 = 0.0;
    for (src, mig) in probes.iter().zip(&migrated) {
        for (a, b) in src.scores(z1)?.iter().zip(mig.scores(z2)?) {
            gap = gap.max((a - b).abs());
        }
    }
    let a_probe_accuracy = if z1.nrows() == z2.nrows() {
        Some(accuracy(&predict(probes, z2)?, labels))
    } else {
        None
    };
    Ok(ProbeTransfer {
        source_accuracy: accuracy(&predict(probes, z1)?, labels),
        a_probe_accuracy,
        migrated_accuracy: accuracy(&predict(&migrated, z2)?, labels),
        max_score_gap: gap,
        condition_number: map.condition_number(),
        inverse_kind: map.inverse_kind().expect("inverse chosen above"),
        target_steps: 0,
    })
}

/// End-to-end probe sharing on a labeled paired dataset: fit `W` and a
/// view-1 classifier on the train split, evaluate transfer on the test split.
pub fn probe_transfer_experiment(
    data: &PairedDataset,
    labels: &dyn Fn(&str) -> Option<usize>,
    fit: &FitConfig,
    standardize: bool,
    probe_lambda: f64,
) -> Result<(ProbeTransfer, AlignmentMap)> {
    let lookup = |split: Split| -> Result<Vec<usize>> {
        data.ids(split)
            .iter()
            .map(|id| labels(id).ok_or_else(|| Error::UnknownStateId(id.clone())))
            .collect()
    };
    let (y_tr, y_te) = (lookup(Split::Train)?, lookup(Split::Test)?);
    let classes = y_tr.iter().chain(&y_te).max().map_or(0, |m| m + 1).max(2);
    let prepared = Prepared::new(data, standardize)?;
    let map = fit_prepared(&prepared, fit)?;
    let probes = fit_classifier(&prepared.x_train, &y_tr, classes, probe_lambda)?;
    let t = probe_transfer_eval(&probes, &map, &prepared.x_test, &prepared.y_test, &y_te)?;
    Ok((t, map))
}
