//! A minimal joint-embedding predictive trainer with hand-written
//! backpropagation, the exact linear reparameterization of an
//! encoder/predictor pair, and the emergence experiment on the linear
//! latent-state world.
//!
//! Batches are column-major: a batch of `B` observations is an `obs x B`
//! matrix. The loss is the batch mean of `‖p(f(x_c)) − sg(f(x_t))‖²`; only the
//! context branch is differentiated.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::align::AlignmentMap;
use crate::container;
use crate::error::{Error, Result};
use crate::latentio::{fmt_f64, pair_by_state, LatentSet, PairedDataset};
use crate::linalg::singular_values;
use crate::metrics::{IsomorphismReport, ReportConfig};
use crate::pipeline::{evaluate, FitConfig};
use crate::seed::stream_rng;
use crate::synthworld::{sample_states, SyntheticWorldSpec};

pub const MODEL_MAGIC: &[u8; 4] = b"TJPA";

/// Largest condition number accepted by `reparameterize`.
pub const MAX_REPARAM_KAPPA: f64 = 1e12;

/// Relative slack of the singular-value sandwich check.
pub const BOUNDS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activated value.
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> f64 {
        match self {
            Activation::Tanh => 0.0,
            Activation::Identity => 1.0,
        }
    }

    fn from_code(c: f64) -> Result<Self> {
        match c {
            0.0 => Ok(Activation::Tanh),
            1.0 => Ok(Activation::Identity),
            other => Err(Error::MalformedPayload(format!("unknown activation code {other}"))),
        }
    }
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col += b;
    }
}

/// `x ↦ W2 σ(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub activation: Activation,
}

impl Mlp {
    /// Weights `N(0, gain² / fan_in)`, zero biases.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        activation: Activation,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let s1 = gain / (in_dim as f64).sqrt();
        let w1 = DMatrix::from_fn(hidden, in_dim, |_, _| s1 * rng.sample::<f64, _>(StandardNormal));
        let s2 = gain / (hidden as f64).sqrt();
        let w2 = DMatrix::from_fn(out_dim, hidden, |_, _| s2 * rng.sample::<f64, _>(StandardNormal));
        Self {
            w1,
            b1: DVector::zeros(hidden),
            w2,
            b2: DVector::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn hidden(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = &self.w1 * x;
        add_bias(&mut h, &self.b1);
        let act = self.activation;
        h.apply(|v| *v = act.apply(*v));
        h
    }

    fn output(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut o = &self.w2 * h;
        add_bias(&mut o, &self.b2);
        o
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.output(&self.hidden(x))
    }

    /// Parameter gradients for upstream gradient `dout`, plus the input
    /// gradient when requested.
    fn backward(&self, x: &DMatrix<f64>, h: &DMatrix<f64>, dout: &DMatrix<f64>, want_dx: bool) -> (Mlp, Option<DMatrix<f64>>) {
        let w2 = dout * h.transpose();
        let b2 = dout.column_sum();
        let mut dpre = self.w2.transpose() * dout;
        let act = self.activation;
        dpre.zip_apply(h, |d, hv| *d *= act.slope(hv));
        let w1 = &dpre * x.transpose();
        let b1 = dpre.column_sum();
        let dx = want_dx.then(|| self.w1.transpose() * &dpre);
        (
            Mlp {
                w1,
                b1,
                w2,
                b2,
                activation: self.activation,
            },
            dx,
        )
    }

    fn zeros_like(&self) -> Mlp {
        Mlp {
            w1: DMatrix::zeros(self.w1.nrows(), self.w1.ncols()),
            b1: DVector::zeros(self.b1.len()),
            w2: DMatrix::zeros(self.w2.nrows(), self.w2.ncols()),
            b2: DVector::zeros(self.b2.len()),
            activation: self.activation,
        }
    }

    fn axpy(&mut self, alpha: f64, g: &Mlp) {
        for (dst, src) in self.slices_mut().into_iter().zip(g.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), self.b1.as_slice(), self.w2.as_slice(), self.b2.as_slice()]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorInit {
    /// Same random scheme as the encoder.
    Random,
    /// `p(z) ≈ z`: the first `d` hidden units pass the latent through a
    /// near-linear slice of the activation; remaining units start random
    /// with zero outgoing weights.
    #[default]
    Identity,
}

/// Input scale of the pass-through units of an identity-initialized tanh
/// predictor; `tanh(s z) / s ≈ z` for `|z| ≪ 1 / s`.
const IDENTITY_INPUT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Defaults to the world's state dimension where one is available.
    pub latent_dim: Option<usize>,
    pub hidden: usize,
    pub pred_hidden: usize,
    pub activation: Activation,
    pub init_gain: f64,
    pub predictor_init: PredictorInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            hidden: 32,
            pred_hidden: 32,
            activation: Activation::Tanh,
            init_gain: 0.5,
            predictor_init: PredictorInit::Identity,
        }
    }
}

/// Encoder `f: obs → d` and predictor `p: d → d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyJepaModel {
    pub encoder: Mlp,
    pub predictor: Mlp,
}

impl ToyJepaModel {
    pub fn init(obs_dim: usize, latent_dim: usize, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if obs_dim == 0 || latent_dim == 0 || cfg.hidden == 0 || cfg.pred_hidden == 0 {
            return Err(Error::InvalidArgument("model dimensions must be at least 1".into()));
        }
        if !(cfg.init_gain > 0.0 && cfg.init_gain.is_finite()) {
            return Err(Error::InvalidArgument(format!("init_gain must be > 0, got {}", cfg.init_gain)));
        }
        let mut rng = stream_rng(seed, "init");
        let encoder = Mlp::random(obs_dim, cfg.hidden, latent_dim, cfg.activation, cfg.init_gain, &mut rng);
        let mut predictor = Mlp::random(latent_dim, cfg.pred_hidden, latent_dim, cfg.activation, cfg.init_gain, &mut rng);
        if cfg.predictor_init == PredictorInit::Identity {
            if cfg.pred_hidden < latent_dim {
                return Err(Error::InvalidArgument(format!(
                    "identity predictor needs pred_hidden >= {latent_dim}, got {}",
                    cfg.pred_hidden
                )));
            }
            let s = match cfg.activation {
                Activation::Tanh => IDENTITY_INPUT_SCALE,
                Activation::Identity => 1.0,
            };
            predictor.w2.fill(0.0);
            for i in 0..latent_dim {
                predictor.w1.row_mut(i).fill(0.0);
                predictor.w1[(i, i)] = s;
                predictor.w2[(i, i)] = 1.0 / s;
            }
        }
        Ok(Self { encoder, predictor })
    }

    pub fn validate(&self) -> Result<()> {
        let (e, p) = (&self.encoder, &self.predictor);
        let d = e.out_dim();
        let consistent = e.b1.len() == e.hidden_dim()
            && e.w2.ncols() == e.hidden_dim()
            && e.b2.len() == d
            && p.in_dim() == d
            && p.out_dim() == d
            && p.b1.len() == p.hidden_dim()
            && p.w2.ncols() == p.hidden_dim()
            && p.b2.len() == d;
        if !consistent {
            return Err(Error::DimensionMismatch("inconsistent encoder/predictor shapes".into()));
        }
        if !self.is_finite() {
            return Err(Error::InvalidArgument("model has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.obs_dim() {
            return Err(Error::DimensionMismatch(format!(
                "observations have {} rows, encoder expects {}",
                x.nrows(),
                self.obs_dim()
            )));
        }
        Ok(self.encoder.forward(x))
    }

    pub fn num_params(&self) -> usize {
        self.params().map(<[f64]>::len).sum()
    }

    fn params(&self) -> impl Iterator<Item = &[f64]> {
        self.encoder.slices().into_iter().chain(self.predictor.slices())
    }

    /// Encoder `w1, b1, w2, b2` then predictor `w1, b1, w2, b2`, each
    /// column-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.params().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut pos = 0;
        let slots = self.encoder.slices_mut().into_iter().chain(self.predictor.slices_mut());
        for slot in slots {
            slot.copy_from_slice(&flat[pos..pos + slot.len()]);
            pos += slot.len();
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            predictor: self.predictor.zeros_like(),
        }
    }

    /// `self += alpha · g`.
    pub fn axpy(&mut self, alpha: f64, g: &ToyJepaModel) {
        self.encoder.axpy(alpha, &g.encoder);
        self.predictor.axpy(alpha, &g.predictor);
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

pub fn save_model(model: &ToyJepaModel, path: &Path) -> Result<()> {
    let (e, p) = (&model.encoder, &model.predictor);
    let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    let acts = DMatrix::from_row_slice(1, 2, &[e.activation.code(), p.activation.code()]);
    let (eb1, eb2, pb1, pb2) = (col(&e.b1), col(&e.b2), col(&p.b1), col(&p.b2));
    container::write(
        path,
        MODEL_MAGIC,
        &[&e.w1, &eb1, &e.w2, &eb2, &p.w1, &pb1, &p.w2, &pb2, &acts],
    )
}

pub fn load_model(path: &Path) -> Result<ToyJepaModel> {
    let m = container::read(path, MODEL_MAGIC)?;
    if m.len() != 9 || m[8].shape() != (1, 2) {
        return Err(Error::MalformedPayload(format!("expected 9 model matrices, found {}", m.len())));
    }
    let vec = |x: &DMatrix<f64>| -> Result<DVector<f64>> {
        if x.ncols() != 1 {
            return Err(Error::MalformedPayload("bias is not a column".into()));
        }
        Ok(DVector::from_column_slice(x.as_slice()))
    };
    let model = ToyJepaModel {
        encoder: Mlp {
            w1: m[0].clone(),
            b1: vec(&m[1])?,
            w2: m[2].clone(),
            b2: vec(&m[3])?,
            activation: Activation::from_code(m[8][(0, 0)])?,
        },
        predictor: Mlp {
            w1: m[4].clone(),
            b1: vec(&m[5])?,
            w2: m[6].clone(),
            b2: vec(&m[7])?,
            activation: Activation::from_code(m[8][(0, 1)])?,
        },
    };
    model.validate()?;
    Ok(model)
}

struct Forward {
    hc: DMatrix<f64>,
    zc: DMatrix<f64>,
    hp: DMatrix<f64>,
    resid: DMatrix<f64>,
    loss: f64,
}

fn check_batch(model: &ToyJepaModel, xc: &DMatrix<f64>, xt: &DMatrix<f64>) -> Result<()> {
    if xc.ncols() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if xc.shape() != xt.shape() || xc.nrows() != model.obs_dim() {
        return Err(Error::DimensionMismatch(format!(
            "context {}x{}, target {}x{}, encoder input {}",
            xc.nrows(),
            xc.ncols(),
            xt.nrows(),
            xt.ncols(),
            model.obs_dim()
        )));
    }
    Ok(())
}

fn forward(model: &ToyJepaModel, xc: &DMatrix<f64>, xt: &DMatrix<f64>) -> Forward {
    let hc = model.encoder.hidden(xc);
    let zc = model.encoder.output(&hc);
    let hp = model.predictor.hidden(&zc);
    let pr = model.predictor.output(&hp);
    let zt = model.encoder.forward(xt);
    let resid = pr - zt;
    let loss = resid.norm_squared() / xc.ncols() as f64;
    Forward {
        hc,
        zc,
        hp,
        resid,
        loss,
    }
}

/// Gradient through the context branch; `extra_dzc` is added to the
/// gradient arriving at the context latents.
fn context_grad(model: &ToyJepaModel, xc: &DMatrix<f64>, fwd: &Forward, extra_dzc: Option<&DMatrix<f64>>) -> ToyJepaModel {
    let dpr = &fwd.resid * (2.0 / xc.ncols() as f64);
    let (predictor, dzc) = model.predictor.backward(&fwd.zc, &fwd.hp, &dpr, true);
    let mut dzc = dzc.expect("input gradient requested");
    if let Some(extra) = extra_dzc {
        dzc += extra;
    }
    let (encoder, _) = model.encoder.backward(xc, &fwd.hc, &dzc, false);
    ToyJepaModel { encoder, predictor }
}

/// Parameter gradient (predictor part zero) of `⟨dz, f(x)⟩`.
pub(crate) fn encoder_vjp(model: &ToyJepaModel, x: &DMatrix<f64>, dz: &DMatrix<f64>) -> ToyJepaModel {
    let h = model.encoder.hidden(x);
    let (encoder, _) = model.encoder.backward(x, &h, dz, false);
    ToyJepaModel {
        encoder,
        predictor: model.predictor.zeros_like(),
    }
}

pub fn jepa_loss(model: &ToyJepaModel, xc: &DMatrix<f64>, xt: &DMatrix<f64>) -> Result<f64> {
    check_batch(model, xc, xt)?;
    Ok(forward(model, xc, xt).loss)
}

/// Loss and its stop-gradient gradient (context branch only).
pub fn loss_and_grad(model: &ToyJepaModel, xc: &DMatrix<f64>, xt: &DMatrix<f64>) -> Result<(f64, ToyJepaModel)> {
    check_batch(model, xc, xt)?;
    let fwd = forward(model, xc, xt);
    Ok((fwd.loss, context_grad(model, xc, &fwd, None)))
}

/// The gradient the target branch would contribute without the stop-gradient.
/// Adding it to `loss_and_grad`'s gradient gives the full derivative of the
/// loss with respect to the shared parameters.
pub fn target_branch_grad(model: &ToyJepaModel, xc: &DMatrix<f64>, xt: &DMatrix<f64>) -> Result<ToyJepaModel> {
    check_batch(model, xc, xt)?;
    let fwd = forward(model, xc, xt);
    let dzt = &fwd.resid * (-2.0 / xc.ncols() as f64);
    let ht = model.encoder.hidden(xt);
    let (encoder, _) = model.encoder.backward(xt, &ht, &dzt, false);
    Ok(ToyJepaModel {
        encoder,
        predictor: model.predictor.zeros_like(),
    })
}

/// The transformed pair `f_A = A f`, `p_A(z) = A p(A⁻¹ z)`, composed exactly
/// into the encoder's output layer and the predictor's boundary layers.
pub fn reparameterize(model: &ToyJepaModel, a: &DMatrix<f64>) -> Result<ToyJepaModel> {
    let d = model.latent_dim();
    if a.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, latent dimension is {d}",
            a.nrows(),
            a.ncols()
        )));
    }
    let sv = singular_values(a);
    let (smax, smin) = (sv[0], sv[d - 1]);
    if !(smin > 0.0 && smax / smin <= MAX_REPARAM_KAPPA) {
        return Err(Error::NearSingular(smin));
    }
    let a_inv = a.clone().try_inverse().ok_or(Error::NearSingular(smin))?;
    let mut out = model.clone();
    out.encoder.w2 = a * &model.encoder.w2;
    out.encoder.b2 = a * &model.encoder.b2;
    out.predictor.w1 = &model.predictor.w1 * a_inv;
    out.predictor.w2 = a * &model.predictor.w2;
    out.predictor.b2 = a * &model.predictor.b2;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsCheck {
    pub loss: f64,
    pub loss_a: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

/// Checks `σ_min(A)² L ≤ L_A ≤ σ_max(A)² L` with relative slack
/// `BOUNDS_SLACK`.
pub fn symmetry_bounds_check(
    model: &ToyJepaModel,
    a: &DMatrix<f64>,
    xc: &DMatrix<f64>,
    xt: &DMatrix<f64>,
) -> Result<BoundsCheck> {
    let loss = jepa_loss(model, xc, xt)?;
    let loss_a = jepa_loss(&reparameterize(model, a)?, xc, xt)?;
    let sv = singular_values(a);
    let (smax, smin) = (sv[0], sv[sv.len() - 1]);
    let lower = smin * smin * loss;
    let upper = smax * smax * loss;
    let tol = BOUNDS_SLACK * upper.max(loss_a);
    Ok(BoundsCheck {
        loss,
        loss_a,
        lower,
        upper,
        pass: loss_a >= lower - tol && loss_a <= upper + tol,
    })
}

/// A model and batch with zero loss: every target is one fixed observation
/// `x*` and the predictor outputs `f(x*)` as a constant.
pub fn zero_loss_instance(
    obs_dim: usize,
    latent_dim: usize,
    cfg: &ModelConfig,
    batch: usize,
    seed: u64,
) -> Result<(ToyJepaModel, DMatrix<f64>, DMatrix<f64>)> {
    let mut model = ToyJepaModel::init(obs_dim, latent_dim, cfg, seed)?;
    let mut rng = stream_rng(seed, "zero-loss");
    let x_star = DMatrix::from_fn(obs_dim, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let xc = DMatrix::from_fn(obs_dim, batch, |_, _| rng.sample::<f64, _>(StandardNormal));
    let xt = DMatrix::from_fn(obs_dim, batch, |i, _| x_star[(i, 0)]);
    model.predictor.w2.fill(0.0);
    model.predictor.b2 = model.encoder.forward(&x_star).column(0).into_owned();
    Ok((model, xc, xt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// `0` trains full-batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Predictor step size relative to `learning_rate`.
    pub predictor_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            steps: 2000,
            batch_size: 256,
            seed: 0,
            predictor_lr_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if !(self.predictor_lr_scale >= 0.0 && self.predictor_lr_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "predictor_lr_scale must be finite and >= 0, got {}",
                self.predictor_lr_scale
            )));
        }
        Ok(())
    }
}

/// Fixed context/target observation pairs, one column per state.
#[derive(Debug, Clone, PartialEq)]
pub struct JepaData {
    pub xc: DMatrix<f64>,
    pub xt: DMatrix<f64>,
}

impl JepaData {
    pub fn new(xc: DMatrix<f64>, xt: DMatrix<f64>) -> Result<Self> {
        if xc.shape() != xt.shape() || xc.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "context {}x{} vs target {}x{}",
                xc.nrows(),
                xc.ncols(),
                xt.nrows(),
                xt.ncols()
            )));
        }
        Ok(Self { xc, xt })
    }

    pub fn len(&self) -> usize {
        self.xc.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.xc.ncols() == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.xc.nrows()
    }
}

/// How observations of a state are formed: `[A u; 0]` padded with nuisance
/// coordinates, context and target each adding independent jitter (small on
/// signal coordinates, `nuisance_std` on nuisance coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub jitter_std: f64,
    pub nuisance_dims: usize,
    pub nuisance_std: f64,
    /// Permute the coordinates of each observation independently.
    pub shuffle: bool,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            jitter_std: 0.01,
            nuisance_dims: 0,
            nuisance_std: 1.0,
            shuffle: false,
        }
    }
}

/// `(d + nuisance_dims) x N` noiseless observations of `states` through `mix`.
pub fn clean_observations(
    mix: &DMatrix<f64>,
    states: &DMatrix<f64>,
    cfg: &ObservationConfig,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if mix.ncols() != states.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "mixing matrix has {} columns, states have {} rows",
            mix.ncols(),
            states.nrows()
        )));
    }
    let signal = mix * states;
    let rows = signal.nrows() + cfg.nuisance_dims;
    let mut out = DMatrix::zeros(rows, signal.ncols());
    out.rows_mut(0, signal.nrows()).copy_from(&signal);
    if cfg.shuffle {
        let mut rng = stream_rng(seed, "shuffle");
        let mut perm: Vec<usize> = (0..rows).collect();
        for mut col in out.column_iter_mut() {
            perm.shuffle(&mut rng);
            let orig = col.clone_owned();
            for (dst, &src) in perm.iter().enumerate() {
                col[dst] = orig[src];
            }
        }
    }
    Ok(out)
}

fn add_jitter(clean: &DMatrix<f64>, cfg: &ObservationConfig, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let signal_rows = clean.nrows() - cfg.nuisance_dims;
    DMatrix::from_fn(clean.nrows(), clean.ncols(), |i, j| {
        let std = if i < signal_rows { cfg.jitter_std } else { cfg.nuisance_std };
        clean[(i, j)] + std * rng.sample::<f64, _>(StandardNormal)
    })
}

pub fn jepa_pairs(clean: &DMatrix<f64>, cfg: &ObservationConfig, seed: u64) -> Result<JepaData> {
    let xc = add_jitter(clean, cfg, &mut stream_rng(seed, "context-jitter"));
    let xt = add_jitter(clean, cfg, &mut stream_rng(seed, "target-jitter"));
    JepaData::new(xc, xt)
}

/// Observations used to export latents after training.
pub fn export_observations(clean: &DMatrix<f64>, cfg: &ObservationConfig, seed: u64) -> DMatrix<f64> {
    add_jitter(clean, cfg, &mut stream_rng(seed, "export-jitter"))
}

/// Mean over latent dimensions of the population variance across the batch.
pub fn latent_variance(z: &DMatrix<f64>) -> f64 {
    let n = z.ncols() as f64;
    let total: f64 = z
        .row_iter()
        .map(|r| {
            let mean = r.sum() / n;
            r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .sum();
    total / z.nrows().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub model: ToyJepaModel,
    /// Loss before each update.
    pub losses: Vec<f64>,
    /// Encoder output variance on each step's context batch.
    pub encoder_variance: Vec<f64>,
}

/// `step,loss,encoder_variance` rows.
pub fn loss_curve_csv(result: &TrainResult) -> String {
    let mut out = String::from("step,loss,encoder_variance\n");
    for (s, (l, v)) in result.losses.iter().zip(&result.encoder_variance).enumerate() {
        out.push_str(&format!("{s},{},{}\n", fmt_f64(*l), fmt_f64(*v)));
    }
    out
}

/// One forward pass of a training step, open for extra loss terms before
/// the update is applied.
pub struct StepState {
    indices: Vec<usize>,
    xc: DMatrix<f64>,
    fwd: Forward,
}

impl StepState {
    /// Sample indices of the batch, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Encoder outputs on the context batch.
    pub fn context_latents(&self) -> &DMatrix<f64> {
        &self.fwd.zc
    }

    pub fn loss(&self) -> f64 {
        self.fwd.loss
    }
}

/// Gradient descent on the stop-gradient loss. Plain training is
/// `begin_step` followed by `finish_step(state, None, None)`.
pub struct Trainer<'a> {
    model: ToyJepaModel,
    data: &'a JepaData,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    step: usize,
    losses: Vec<f64>,
    variance: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: ToyJepaModel, data: &'a JepaData, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        if data.obs_dim() != model.obs_dim() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} observation dims, model expects {}",
                data.obs_dim(),
                model.obs_dim()
            )));
        }
        Ok(Self {
            model,
            data,
            rng: stream_rng(cfg.seed, "batches"),
            cfg: cfg.clone(),
            step: 0,
            losses: Vec::with_capacity(cfg.steps),
            variance: Vec::with_capacity(cfg.steps),
        })
    }

    pub fn model(&self) -> &ToyJepaModel {
        &self.model
    }

    /// Number of completed updates.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn begin_step(&mut self) -> Result<StepState> {
        let n = self.data.len();
        let b = self.cfg.batch_size;
        let (indices, xc, xt) = if b == 0 || b >= n {
            ((0..n).collect(), self.data.xc.clone(), self.data.xt.clone())
        } else {
            let mut idx = index::sample(&mut self.rng, n, b).into_vec();
            idx.sort_unstable();
            let xc = self.data.xc.select_columns(idx.iter());
            let xt = self.data.xt.select_columns(idx.iter());
            (idx, xc, xt)
        };
        let fwd = forward(&self.model, &xc, &xt);
        if !fwd.loss.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                loss: fwd.loss,
            });
        }
        Ok(StepState { indices, xc, fwd })
    }

    /// Applies one update. `extra_dzc` is an additional gradient at the
    /// context latents (`d x B`, batch order); `extra_grad` is added to the
    /// parameter gradient as is.
    pub fn finish_step(
        &mut self,
        state: StepState,
        extra_dzc: Option<&DMatrix<f64>>,
        extra_grad: Option<&ToyJepaModel>,
    ) -> Result<()> {
        let mut g = context_grad(&self.model, &state.xc, &state.fwd, extra_dzc);
        if let Some(extra) = extra_grad {
            g.axpy(1.0, extra);
        }
        self.losses.push(state.fwd.loss);
        self.variance.push(latent_variance(&state.fwd.zc));
        let lr = self.cfg.learning_rate;
        if lr > 0.0 {
            self.model.encoder.axpy(-lr, &g.encoder);
            let lr_p = lr * self.cfg.predictor_lr_scale;
            if lr_p > 0.0 {
                self.model.predictor.axpy(-lr_p, &g.predictor);
            }
        }
        self.step += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<TrainResult> {
        if !self.model.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                loss: f64::NAN,
            });
        }
        Ok(TrainResult {
            model: self.model,
            losses: self.losses,
            encoder_variance: self.variance,
        })
    }
}

pub fn train(model: ToyJepaModel, data: &JepaData, cfg: &TrainConfig) -> Result<TrainResult> {
    train_with_checkpoints(model, data, cfg, &[], |_, _| Ok(()))
}

/// Trains and calls `on_checkpoint(step, model)` after each listed number of
/// completed updates (`0` is the initial model).
pub fn train_with_checkpoints<F>(
    model: ToyJepaModel,
    data: &JepaData,
    cfg: &TrainConfig,
    checkpoints: &[usize],
    mut on_checkpoint: F,
) -> Result<TrainResult>
where
    F: FnMut(usize, &ToyJepaModel) -> Result<()>,
{
    let mut t = Trainer::new(model, data, cfg)?;
    if checkpoints.contains(&0) {
        on_checkpoint(0, t.model())?;
    }
    for s in 1..=cfg.steps {
        let state = t.begin_step()?;
        t.finish_step(state, None, None)?;
        if checkpoints.contains(&s) {
            on_checkpoint(s, t.model())?;
        }
    }
    t.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmergenceConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub observation: ObservationConfig,
    /// Structure-destroying control: shuffle view 2's observation coordinates.
    pub shuffle_view2: bool,
    /// Fractions of the step budget at which latents are evaluated; the full
    /// budget is always included.
    pub checkpoints: Vec<f64>,
    pub fit: FitConfig,
    pub report: ReportConfig,
}

impl Default for EmergenceConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            observation: ObservationConfig {
                nuisance_dims: 8,
                ..ObservationConfig::default()
            },
            shuffle_view2: false,
            checkpoints: vec![1.0],
            fit: FitConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub report: IsomorphismReport,
}

#[derive(Debug, Clone)]
pub struct EmergenceResult {
    pub report: IsomorphismReport,
    pub map: AlignmentMap,
    pub runs: [TrainResult; 2],
    pub checkpoints: Vec<Checkpoint>,
    /// Final exported latents of both models, paired and split.
    pub data: PairedDataset,
}

fn checkpoint_steps(steps: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    let mut out = vec![steps];
    for &f in fractions {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidArgument(format!("checkpoint fraction {f} outside [0, 1]")));
        }
        out.push((f * steps as f64).round() as usize);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Trains one model per view independently (view `i` observes `A_i u`),
/// exports both latent sets on the shared states, and fits and scores `W`
/// post hoc at every checkpoint.
pub fn emergence_experiment(
    world: &SyntheticWorldSpec,
    seeds: (u64, u64),
    cfg: &EmergenceConfig,
) -> Result<EmergenceResult> {
    let states = sample_states(world)?;
    let steps = checkpoint_steps(cfg.train.steps, &cfg.checkpoints)?;
    let latent_dim = cfg.model.latent_dim.unwrap_or(world.state_dim);
    let run = |mix: &DMatrix<f64>, seed: u64, shuffle: bool| -> Result<(TrainResult, Vec<DMatrix<f64>>)> {
        let obs = ObservationConfig {
            shuffle: cfg.observation.shuffle || shuffle,
            ..cfg.observation.clone()
        };
        let clean = clean_observations(mix, &states, &obs, seed)?;
        let data = jepa_pairs(&clean, &obs, seed)?;
        let export = export_observations(&clean, &obs, seed);
        let model = ToyJepaModel::init(clean.nrows(), latent_dim, &cfg.model, seed)?;
        let tc = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let mut snaps = Vec::with_capacity(steps.len());
        let res = train_with_checkpoints(model, &data, &tc, &steps, |_, m| {
            snaps.push(m.encode(&export)?);
            Ok(())
        })?;
        Ok((res, snaps))
    };
    let (r1, r2) = rayon::join(
        || run(&world.mix1, seeds.0, false),
        || run(&world.mix2, seeds.1, cfg.shuffle_view2),
    );
    let ((run1, snaps1), (run2, snaps2)) = (r1?, r2?);

    let ids = world.state_ids();
    let mut checkpoints = Vec::with_capacity(steps.len());
    let mut last = None;
    for ((&step, z1), z2) in steps.iter().zip(snaps1).zip(snaps2) {
        let v1 = LatentSet::new(z1, ids.clone(), "view1")?;
        let v2 = LatentSet::new(z2, ids.clone(), "view2")?;
        let data = pair_by_state(v1, v2, world.train_fraction, world.seed)?;
        let eval = evaluate(&data, &cfg.fit, &cfg.report)?;
        checkpoints.push(Checkpoint {
            step,
            report: eval.report.clone(),
        });
        last = Some((eval, data));
    }
    let (eval, data) = last.expect("the full budget is always a checkpoint");
    Ok(EmergenceResult {
        report: eval.report,
        map: eval.map,
        runs: [run1, run2],
        checkpoints,
        data,
    })
}
