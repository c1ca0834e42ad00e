//! Isomorphism metrics on held-out pairs.
//!
//! MSE and R² compare `z2` against `W z1` directly. CKA, DSC and NOS@k compare
//! `z1` against the aligned latents `W_inv z2`, i.e. both sides live in view-1
//! coordinates. All distances are Euclidean.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::align::AlignmentMap;
use crate::error::{Error, Result};
use crate::latentio::{overlap, PairedDataset};
use crate::linalg::center_rows;
use crate::pipeline::Prepared;
use crate::seed::stream_rng;

/// Default cap on the number of points entering the O(M²) DSC computation.
pub const DEFAULT_DSC_MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub ks: Vec<usize>,
    pub dsc_max_points: usize,
    pub dsc_seed: u64,
    /// Standardize each view with its train-split statistics before fitting
    /// and evaluating.
    pub standardize: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 5, 10, 20, 50],
            dsc_max_points: DEFAULT_DSC_MAX_POINTS,
            dsc_seed: 0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismReport {
    pub mse: f64,
    pub r2: f64,
    pub cka: f64,
    pub dsc: f64,
    pub nos_at_k: BTreeMap<usize, f64>,
    pub n_test: usize,
    pub dsc_subsampled: bool,
}

impl IsomorphismReport {
    pub fn no_at_k(&self, k: usize) -> Option<f64> {
        self.nos_at_k.get(&k).map(|v| 1.0 - v)
    }

    /// Named scalar metrics in a fixed order (used by sweeps and aggregation).
    pub fn scalars(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("mse".to_string(), self.mse),
            ("r2".to_string(), self.r2),
            ("cka".to_string(), self.cka),
            ("dsc".to_string(), self.dsc),
        ];
        out.extend(self.nos_at_k.iter().map(|(k, v)| (format!("nos@{k}"), *v)));
        out
    }

    /// Flat JSON: `mse, r2, cka, dsc, nos@{k}, n_test, dsc_subsampled` and,
    /// when given, a `map` metadata block (with `n_fit` in place of the fit
    /// ids).
    pub fn to_json(&self, map: Option<&AlignmentMap>) -> Value {
        let mut obj = Map::new();
        obj.insert("mse".into(), json!(self.mse));
        obj.insert("r2".into(), json!(self.r2));
        obj.insert("cka".into(), json!(self.cka));
        obj.insert("dsc".into(), json!(self.dsc));
        for (k, v) in &self.nos_at_k {
            obj.insert(format!("nos@{k}"), json!(v));
        }
        obj.insert("n_test".into(), json!(self.n_test));
        obj.insert("dsc_subsampled".into(), json!(self.dsc_subsampled));
        if let Some(map) = map {
            // the fit ids live in the map file; the report only counts them
            let mut meta = serde_json::to_value(map.metadata()).unwrap_or(Value::Null);
            if let Some(m) = meta.as_object_mut() {
                m.remove("fit_state_ids");
                m.insert("n_fit".into(), json!(map.fit_ids().len()));
            }
            obj.insert("map".into(), meta);
        }
        Value::Object(obj)
    }
}

fn check_samples(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} test points",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// `W_inv z2` columnwise.
pub fn aligned_latents(view2: &DMatrix<f64>, map: &AlignmentMap) -> Result<DMatrix<f64>> {
    let inv = map.require_inverse()?;
    if inv.ncols() != view2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "inverse expects dim {}, got {}",
            inv.ncols(),
            view2.nrows()
        )));
    }
    Ok(inv * view2)
}

/// `(1/M) Σ ‖z2 − W z1‖²`.
pub fn alignment_mse(view1: &DMatrix<f64>, view2: &DMatrix<f64>, map: &AlignmentMap) -> Result<f64> {
    check_samples(view1, view2)?;
    if view1.ncols() == 0 {
        return Err(Error::InvalidArgument("no test points".into()));
    }
    let pred = map.apply(view1)?;
    if pred.nrows() != view2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "map produces dim {}, view 2 has dim {}",
            pred.nrows(),
            view2.nrows()
        )));
    }
    Ok((view2 - pred).norm_squared() / view1.ncols() as f64)
}

/// `1 − ‖Y − WX‖² / ‖Y − ȳ 1ᵀ‖²` with `ȳ` the reference (train) mean of view 2.
pub fn r_squared(
    view1: &DMatrix<f64>,
    view2: &DMatrix<f64>,
    map: &AlignmentMap,
    reference_mean: &DVector<f64>,
) -> Result<f64> {
    check_samples(view1, view2)?;
    if view1.ncols() < 2 {
        return Err(Error::InvalidArgument("R² needs at least 2 test points".into()));
    }
    if reference_mean.len() != view2.nrows() {
        return Err(Error::DimensionMismatch("reference mean dimension".into()));
    }
    let resid = (view2 - map.apply(view1)?).norm_squared();
    let mut total = 0.0;
    for col in view2.column_iter() {
        total += (col - reference_mean).norm_squared();
    }
    if total <= 0.0 {
        return Err(Error::ZeroVariance("view-2 test latents have zero total variance".into()));
    }
    Ok(1.0 - resid / total)
}

/// Linear CKA `‖Bc Acᵀ‖²_F / (‖Ac Acᵀ‖_F ‖Bc Bcᵀ‖_F)` on column-centered data.
pub fn linear_cka(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_samples(a, b)?;
    if a.ncols() < 3 {
        return Err(Error::InvalidArgument("CKA needs at least 3 points".into()));
    }
    let ac = center_rows(a);
    let bc = center_rows(b);
    let cross = (&bc * ac.transpose()).norm_squared();
    let saa = (&ac * ac.transpose()).norm();
    let sbb = (&bc * bc.transpose()).norm();
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance("CKA input has zero variance".into()));
    }
    Ok((cross / (saa * sbb)).clamp(0.0, 1.0))
}

/// Euclidean distances for all pairs `i < j`, row-major in `i`.
pub fn pairwise_distances(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.ncols();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let ci = m.column(i);
            ((i + 1)..n)
                .map(|j| (ci - m.column(j)).norm())
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Ranks starting at 1 with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Spearman correlation with average-rank ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length samples".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .map(|r| r.clamp(-1.0, 1.0))
        .ok_or_else(|| Error::UndefinedCorrelation("all pairwise distances are identical".into()))
}

/// Distance-structure consistency: Spearman ρ between the pairwise distances
/// of `a` and of `b`. Uses a seed-deterministic subsample of `max_points`
/// points when `M` is larger; the flag reports whether that happened.
pub fn dsc(a: &DMatrix<f64>, b: &DMatrix<f64>, max_points: usize, seed: u64) -> Result<(f64, bool)> {
    check_samples(a, b)?;
    let m = a.ncols();
    if m < 3 {
        return Err(Error::InvalidArgument("DSC needs at least 3 points".into()));
    }
    let max_points = max_points.max(3);
    let (a, b, subsampled) = if m > max_points {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut stream_rng(seed, "dsc-subsample"));
        idx.truncate(max_points);
        idx.sort_unstable();
        (a.select_columns(idx.iter()), b.select_columns(idx.iter()), true)
    } else {
        (a.clone(), b.clone(), false)
    };
    let da = pairwise_distances(&a);
    let db = pairwise_distances(&b);
    Ok((spearman(&da, &db)?, subsampled))
}

/// Indices of the `k` nearest neighbours of every column (self excluded,
/// ties broken by lower index), nearest first.
pub fn knn_lists(m: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = m.ncols();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let ci = m.column(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((ci - m.column(j)).norm_squared(), j))
                .collect();
            let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k, cmp);
                cand.truncate(k);
            }
            cand.sort_by(cmp);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// NOS@k = 1 − NO@k for every requested `k`.
pub fn nos_at_k(a: &DMatrix<f64>, b: &DMatrix<f64>, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_samples(a, b)?;
    let m = a.ncols();
    let Some(&kmax) = ks.iter().max() else {
        return Ok(BTreeMap::new());
    };
    if ks.contains(&0) {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if kmax >= m {
        return Err(Error::InvalidArgument(format!(
            "k = {kmax} needs more than {m} test points"
        )));
    }
    let na = knn_lists(a, kmax);
    let nb = knn_lists(b, kmax);
    // per-point intersection counts for each k, reduced in index order
    let counts: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut mark = vec![false; m];
            ks.iter()
                .map(|&k| {
                    mark.iter_mut().for_each(|x| *x = false);
                    na[i][..k].iter().for_each(|&j| mark[j] = true);
                    nb[i][..k].iter().filter(|&&j| mark[j]).count()
                })
                .collect()
        })
        .collect();
    let mut out = BTreeMap::new();
    for (pos, &k) in ks.iter().enumerate() {
        let total: usize = counts.iter().map(|c| c[pos]).sum();
        let no = total as f64 / (k as f64 * m as f64);
        out.insert(k, 1.0 - no);
    }
    Ok(out)
}

/// All metrics from prepared test matrices.
pub fn report_matrices(
    x_test: &DMatrix<f64>,
    y_test: &DMatrix<f64>,
    y_reference_mean: &DVector<f64>,
    map: &AlignmentMap,
    config: &ReportConfig,
) -> Result<IsomorphismReport> {
    let mse = alignment_mse(x_test, y_test, map)?;
    let r2 = r_squared(x_test, y_test, map, y_reference_mean)?;
    let aligned = aligned_latents(y_test, map)?;
    let cka = linear_cka(x_test, &aligned)?;
    let (dsc, dsc_subsampled) = dsc(x_test, &aligned, config.dsc_max_points, config.dsc_seed)?;
    let nos_at_k = nos_at_k(x_test, &aligned, &config.ks)?;
    Ok(IsomorphismReport {
        mse,
        r2,
        cka,
        dsc,
        nos_at_k,
        n_test: x_test.ncols(),
        dsc_subsampled,
    })
}

/// Metrics for `map` on the test split of `data`, after the same
/// train-statistic standardization that was used for fitting.
pub fn full_report(
    data: &PairedDataset,
    map: &AlignmentMap,
    config: &ReportConfig,
) -> Result<IsomorphismReport> {
    let prepared = Prepared::new(data, config.standardize)?;
    report_prepared(&prepared, map, config)
}

pub fn report_prepared(
    prepared: &Prepared,
    map: &AlignmentMap,
    config: &ReportConfig,
) -> Result<IsomorphismReport> {
    let leaked = overlap(map.fit_ids(), &prepared.test_ids);
    if leaked > 0 {
        return Err(Error::SplitOverlap(leaked));
    }
    let map = if map.inverse().is_none() {
        crate::align::choose_inverse(map)
    } else {
        map.clone()
    };
    report_matrices(
        &prepared.x_test,
        &prepared.y_test,
        &prepared.y_train_mean,
        &map,
        config,
    )
}
