//! Estimation of the alignment map `W` (view 1 -> view 2) and the stable
//! inverse used to move view-2 latents and probes back into view-1
//! coordinates.
//!
//! Ridge fits solve `W (XXᵀ + λI) = YXᵀ` through a Cholesky factorization of
//! the normal matrix, falling back to an SVD solve when the factorization
//! breaks down at `λ > 0`. Procrustes fits take the SVD `YXᵀ = UΣVᵀ` and return
//! `UVᵀ`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::latentio::check_finite;
use crate::linalg;

/// Default conditioning threshold for choosing the exact inverse.
pub const DEFAULT_TAU: f64 = 1e6;

/// Relative ridge used when an unregularized fit hits a singular normal matrix:
/// `λ = AUTO_RIDGE_SCALE * trace(XXᵀ) / d₁`.
pub const AUTO_RIDGE_SCALE: f64 = 1e-6;

const MAP_MAGIC: &[u8; 4] = b"ALNW";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ridge,
    Ols,
    Procrustes,
    /// Analytic map supplied by a generator rather than fitted.
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Ridge => "ridge",
            Method::Ols => "ols",
            Method::Procrustes => "procrustes",
            Method::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(Method::Ridge),
            "ols" => Ok(Method::Ols),
            "procrustes" => Ok(Method::Procrustes),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown fit method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InverseKind {
    Exact,
    Pseudo,
}

/// A fitted `d₂ x d₁` map with its spectrum and (once chosen) its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap {
    matrix: DMatrix<f64>,
    method: Method,
    lambda: f64,
    singular_values: Vec<f64>,
    condition_number: f64,
    tau: f64,
    inverse: Option<(InverseKind, DMatrix<f64>)>,
    fit_ids: Vec<String>,
    standardized: bool,
}

impl AlignmentMap {
    pub fn from_matrix(matrix: DMatrix<f64>, method: Method, lambda: f64) -> Result<Self> {
        check_finite(&matrix)?;
        let (rows, cols) = matrix.shape();
        let singular_values = linalg::singular_values(&matrix);
        let condition_number = linalg::condition_number(&singular_values, rows, cols);
        Ok(Self {
            matrix,
            method,
            lambda,
            singular_values,
            condition_number,
            tau: DEFAULT_TAU,
            inverse: None,
            fit_ids: Vec::new(),
            standardized: false,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `(d₂, d₁)`.
    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `σ_max / σ_min`, infinite when rank-deficient.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn inverse_kind(&self) -> Option<InverseKind> {
        self.inverse.as_ref().map(|(k, _)| *k)
    }

    /// The chosen `d₁ x d₂` inverse, if [`choose_inverse`] has run.
    pub fn inverse(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref().map(|(_, m)| m)
    }

    pub(crate) fn require_inverse(&self) -> Result<&DMatrix<f64>> {
        self.inverse().ok_or(Error::InverseNotChosen)
    }

    /// State identifiers the map was fitted on (empty when unknown).
    pub fn fit_ids(&self) -> &[String] {
        &self.fit_ids
    }

    pub fn standardized(&self) -> bool {
        self.standardized
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self.inverse = None;
        self
    }

    pub fn with_fit_ids(mut self, ids: Vec<String>) -> Self {
        self.fit_ids = ids;
        self
    }

    pub fn with_standardized(mut self, standardized: bool) -> Self {
        self.standardized = standardized;
        self
    }

    /// Applies `W` columnwise.
    pub fn apply(&self, z1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z1.nrows() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "map expects dim {}, got {}",
                self.matrix.ncols(),
                z1.nrows()
            )));
        }
        Ok(&self.matrix * z1)
    }

    pub fn metadata(&self) -> MapMetadata {
        MapMetadata {
            method: self.method,
            lambda: self.lambda,
            tau: self.tau,
            condition_number: finite_or_none(self.condition_number),
            inverse_kind: self.inverse_kind(),
            singular_values: self.singular_values.clone(),
            d1: self.matrix.ncols(),
            d2: self.matrix.nrows(),
            standardized: self.standardized,
            fit_state_ids: self.fit_ids.clone(),
        }
    }
}

pub(crate) fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// JSON side of a saved map. An infinite condition number is written as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub method: Method,
    pub lambda: f64,
    pub tau: f64,
    pub condition_number: Option<f64>,
    pub inverse_kind: Option<InverseKind>,
    pub singular_values: Vec<f64>,
    pub d1: usize,
    pub d2: usize,
    pub standardized: bool,
    #[serde(default)]
    pub fit_state_ids: Vec<String>,
}

/// Writes `<stem>.json` (metadata) and `<stem>.alnw` (W, then the chosen
/// inverse when present).
pub fn save_map(map: &AlignmentMap, stem: &Path) -> Result<()> {
    let json = stem.with_extension("json");
    let bin = stem.with_extension("alnw");
    let text = serde_json::to_string_pretty(&map.metadata())?;
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    let mut mats = vec![&map.matrix];
    if let Some((_, inv)) = &map.inverse {
        mats.push(inv);
    }
    container::write(&bin, MAP_MAGIC, &mats)
}

pub fn load_map(stem: &Path) -> Result<AlignmentMap> {
    let json = stem.with_extension("json");
    let bin = stem.with_extension("alnw");
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let meta: MapMetadata = serde_json::from_str(&text)?;
    let mut mats = container::read(&bin, MAP_MAGIC)?.into_iter();
    let matrix = mats
        .next()
        .ok_or_else(|| Error::MalformedPayload("map file holds no matrix".into()))?;
    if matrix.shape() != (meta.d2, meta.d1) {
        return Err(Error::DimensionMismatch(format!(
            "metadata declares {}x{}, payload is {}x{}",
            meta.d2,
            meta.d1,
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut map = AlignmentMap::from_matrix(matrix, meta.method, meta.lambda)?
        .with_tau(meta.tau)
        .with_fit_ids(meta.fit_state_ids)
        .with_standardized(meta.standardized);
    if let (Some(kind), Some(inv)) = (meta.inverse_kind, mats.next()) {
        map.inverse = Some((kind, inv));
    }
    Ok(map)
}

fn check_pair(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} samples, Y has {}",
            x.ncols(),
            y.ncols()
        )));
    }
    if x.ncols() == 0 || x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::InvalidArgument("empty training matrices".into()));
    }
    check_finite(x)?;
    check_finite(y)
}

/// Closed-form ridge fit `W = YXᵀ(XXᵀ + λI)⁻¹` for `X: d₁ x N`, `Y: d₂ x N`.
///
/// At `λ = 0` a singular normal matrix is an error; [`fit_ridge_auto`] retries
/// with a small ridge instead.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<AlignmentMap> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    check_pair(x, y)?;
    let d1 = x.nrows();
    let mut gram = x * x.transpose();
    for i in 0..d1 {
        gram[(i, i)] += lambda;
    }
    let rhs = x * y.transpose(); // d1 x d2, equals (YXᵀ)ᵀ
    let wt = solve_spd(gram, &rhs, lambda > 0.0)?;
    let method = if lambda > 0.0 { Method::Ridge } else { Method::Ols };
    AlignmentMap::from_matrix(wt.transpose(), method, lambda)
}

/// Ridge fit that, at `λ = 0` on a singular normal matrix, retries with
/// `λ = 1e-6 · trace(XXᵀ) / d₁`.
pub fn fit_ridge_auto(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<AlignmentMap> {
    match fit_ridge(x, y, lambda) {
        Err(Error::SingularNormalMatrix) => {
            let trace: f64 = x.iter().map(|v| v * v).sum();
            let mut retry = AUTO_RIDGE_SCALE * trace / x.nrows() as f64;
            if !(retry > 0.0) {
                retry = AUTO_RIDGE_SCALE;
            }
            fit_ridge(x, y, retry)
        }
        other => other,
    }
}

/// Solves `G B' = B` for symmetric positive (semi)definite `G`.
fn solve_spd(gram: DMatrix<f64>, rhs: &DMatrix<f64>, regularized: bool) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    if let Some(chol) = gram.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let well_posed = max > 0.0 && (min / max).powi(2) > 10.0 * n as f64 * f64::EPSILON;
        if well_posed || regularized {
            return Ok(chol.solve(rhs));
        }
    }
    if !regularized {
        return Err(Error::SingularNormalMatrix);
    }
    Ok(linalg::pseudo_inverse(&gram) * rhs)
}

/// Orthogonal Procrustes: `W = UVᵀ` from the SVD of `YXᵀ`.
pub fn fit_procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<AlignmentMap> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "procrustes needs equal dimensions, got d1 = {} and d2 = {}",
            x.nrows(),
            y.nrows()
        )));
    }
    check_pair(x, y)?;
    let cross = y * x.transpose();
    let svd = cross.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    AlignmentMap::from_matrix(u * vt, Method::Procrustes, 0.0)
}

/// Picks `W⁻¹` when `W` is square with `κ(W) ≤ τ`, else the pseudoinverse.
pub fn choose_inverse(map: &AlignmentMap) -> AlignmentMap {
    let mut out = map.clone();
    let (rows, cols) = map.matrix.shape();
    let exact = if rows == cols && map.condition_number <= map.tau {
        map.matrix.clone().try_inverse()
    } else {
        None
    };
    out.inverse = Some(match exact {
        Some(inv) => (InverseKind::Exact, inv),
        None => (InverseKind::Pseudo, linalg::pseudo_inverse(&map.matrix)),
    });
    out
}

/// Linear readout `q(z) = aᵀz + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearProbe {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite { row: 0, col: 0 });
        }
        Ok(Self { weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    /// Scores for every column of a `d x M` matrix.
    pub fn scores(&self, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        if z.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "probe has dim {}, latents have dim {}",
                self.dim(),
                z.nrows()
            )));
        }
        let a = DVector::from_column_slice(&self.weights);
        Ok(z.column_iter().map(|c| a.dot(&c) + self.bias).collect())
    }
}

/// Moves a view-1 probe to view 2: `a⁽²⁾ = W_invᵀ a`, bias unchanged.
pub fn migrate_probe(probe: &LinearProbe, map: &AlignmentMap) -> Result<LinearProbe> {
    let inv = map.require_inverse()?;
    if probe.dim() != inv.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "probe has dim {}, map source dim is {}",
            probe.dim(),
            inv.nrows()
        )));
    }
    let a = DVector::from_column_slice(&probe.weights);
    let migrated = inv.transpose() * a;
    LinearProbe::new(migrated.iter().copied().collect(), probe.bias)
}

/// Least-squares probe on centered data: ridge on the weights, unpenalized
/// bias. `targets` holds one regression target per column of `z`.
pub fn fit_linear_probe(z: &DMatrix<f64>, targets: &[f64], lambda: f64) -> Result<LinearProbe> {
    if z.ncols() != targets.len() || targets.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples, {} targets",
            z.ncols(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mu = linalg::row_means(z);
    let t_mean = targets.iter().sum::<f64>() / n;
    let zc = linalg::center_rows(z);
    let t = DMatrix::from_iterator(1, targets.len(), targets.iter().map(|v| v - t_mean));
    let map = fit_ridge_auto(&zc, &t, lambda)?;
    let a: Vec<f64> = map.matrix().row(0).iter().copied().collect();
    let bias = t_mean - a.iter().zip(mu.iter()).map(|(x, y)| x * y).sum::<f64>();
    LinearProbe::new(a, bias)
}

/// One-vs-rest probes for `classes` labels; two classes use a single ±1 probe.
pub fn fit_classifier(
    z: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    lambda: f64,
) -> Result<Vec<LinearProbe>> {
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if classes == 2 {
        let t: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        return Ok(vec![fit_linear_probe(z, &t, lambda)?]);
    }
    (0..classes)
        .map(|c| {
            let t: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            fit_linear_probe(z, &t, lambda)
        })
        .collect()
}

/// Predicted labels: sign for a single probe, argmax for one-vs-rest.
pub fn predict(probes: &[LinearProbe], z: &DMatrix<f64>) -> Result<Vec<usize>> {
    let scores = probes.iter().map(|p| p.scores(z)).collect::<Result<Vec<_>>>()?;
    if scores.len() == 1 {
        return Ok(scores[0].iter().map(|&s| usize::from(s > 0.0)).collect());
    }
    Ok((0..z.ncols())
        .map(|n| {
            (0..scores.len())
                .max_by(|&a, &b| scores[a][n].total_cmp(&scores[b][n]).then(b.cmp(&a)))
                .unwrap_or(0)
        })
        .collect())
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len().max(1) as f64
}
