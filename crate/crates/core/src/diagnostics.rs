//! Spectral diagnostics of a fitted map and the stress-test sweeps built on
//! the fit/evaluate pipeline: pair budget, pair noise, distribution shift and
//! seed robustness. Also a PCA projection for plotting before/after alignment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::AlignmentMap;
use crate::error::{Error, Result};
use crate::latentio::{fmt_f64, overlap, LatentSet, PairedDataset};
use crate::linalg;
use crate::metrics::{report_prepared, IsomorphismReport, ReportConfig};
use crate::pipeline::{evaluate_prepared, fit_matrices, fit_prepared, Evaluation, FitConfig, Prepared};
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiagnostics {
    pub singular_values: Vec<f64>,
    /// Infinite when rank-deficient (serialized as null).
    #[serde(with = "inf_as_null")]
    pub condition_number: f64,
    pub orthogonality_deviation: f64,
    pub effective_rank: usize,
}

pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub fn spectrum(map: &AlignmentMap) -> SpectrumDiagnostics {
    let (rows, cols) = map.shape();
    let sv = map.singular_values().to_vec();
    SpectrumDiagnostics {
        condition_number: map.condition_number(),
        orthogonality_deviation: linalg::orthogonality_deviation(map.matrix()),
        effective_rank: linalg::effective_rank(&sv, rows, cols),
        singular_values: sv,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    PairBudget,
    PairNoise,
    #[serde(rename = "seeds", alias = "seed")]
    Seed,
    #[serde(rename = "shift", alias = "shift-split")]
    ShiftSplit,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::PairBudget => "pair-budget",
            SweepAxis::PairNoise => "pair-noise",
            SweepAxis::Seed => "seeds",
            SweepAxis::ShiftSplit => "shift",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair-budget" | "budget" => Ok(SweepAxis::PairBudget),
            "pair-noise" | "noise" => Ok(SweepAxis::PairNoise),
            "seeds" | "seed" => Ok(SweepAxis::Seed),
            "shift" | "shift-split" => Ok(SweepAxis::ShiftSplit),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: IsomorphismReport,
    pub spectrum: SpectrumDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// Per-metric mean and population std across points (seed sweeps).
    pub aggregate: Option<BTreeMap<String, MeanStd>>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len().max(1) as f64;
    // shifted by the first value, so identical inputs give exactly zero spread
    let origin = values.first().copied().unwrap_or(0.0);
    let mean = origin + values.iter().map(|v| v - origin).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

fn point_scalars(p: &SweepPoint) -> Vec<(String, f64)> {
    let mut s = p.report.scalars();
    s.push(("kappa".into(), p.spectrum.condition_number));
    s.push(("orthogonality_deviation".into(), p.spectrum.orthogonality_deviation));
    s.push(("effective_rank".into(), p.spectrum.effective_rank as f64));
    s
}

fn csv_num(v: f64) -> String {
    if v.is_finite() {
        fmt_f64(v)
    } else if v > 0.0 {
        "inf".into()
    } else {
        "nan".into()
    }
}

impl SweepResult {
    fn aggregate_points(points: &[SweepPoint]) -> BTreeMap<String, MeanStd> {
        let Some(first) = points.first() else {
            return BTreeMap::new();
        };
        let names: Vec<String> = point_scalars(first).into_iter().map(|(n, _)| n).collect();
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|p| point_scalars(p).into_iter().map(|(_, v)| v).collect())
            .collect();
        names
            .into_iter()
            .enumerate()
            .map(|(i, name)| {
                let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                (name, mean_std(&col))
            })
            .collect()
    }

    /// One row per point: axis value, every metric, κ, orthogonality
    /// deviation and effective rank; seed sweeps add `<metric>_mean` and
    /// `<metric>_std` columns.
    pub fn to_csv(&self) -> String {
        let Some(first) = self.points.first() else {
            return "value\n".into();
        };
        let names: Vec<String> = point_scalars(first).into_iter().map(|(n, _)| n).collect();
        let mut header = vec!["value".to_string()];
        header.extend(names.iter().cloned());
        if let Some(agg) = &self.aggregate {
            for name in agg.keys() {
                header.push(format!("{name}_mean"));
                header.push(format!("{name}_std"));
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for p in &self.points {
            let mut row = vec![csv_num(p.value)];
            row.extend(point_scalars(p).into_iter().map(|(_, v)| csv_num(v)));
            if let Some(agg) = &self.aggregate {
                for ms in agg.values() {
                    row.push(csv_num(ms.mean));
                    row.push(csv_num(ms.std));
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_increasing(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("empty {what} list")));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

/// Number of train pairs mismatched at rate `eps`: `⌈eps · n⌉`, raised to 2
/// when it would be 1 (a single pair cannot be mismatched by a cyclic shift).
pub fn mismatch_count(eps: f64, n: usize) -> usize {
    let m = (eps * n as f64).ceil() as usize;
    match m.min(n) {
        1 if n >= 2 => 2,
        m => m,
    }
}

/// Cyclically shifts the columns of `y` at the first `mismatch_count(eps)`
/// positions of a seeded permutation, so every selected pair is mismatched.
/// The selection at a larger `eps` contains the selection at a smaller one.
pub fn mismatch_pairs(y: &DMatrix<f64>, eps: f64, seed: u64) -> DMatrix<f64> {
    let n = y.ncols();
    let m = mismatch_count(eps, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, "pair-noise"));
    let sel = &order[..m];
    let mut out = y.clone();
    for (i, &dst) in sel.iter().enumerate() {
        let src = sel[(i + 1) % m];
        out.set_column(dst, &y.column(src));
    }
    out
}

fn eval_point(
    prepared: &Prepared,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    fit: &FitConfig,
    report: &ReportConfig,
    value: f64,
) -> Result<SweepPoint> {
    let map = fit_matrices(x, y, fit)?
        .with_fit_ids(prepared.train_ids.clone())
        .with_standardized(prepared.standardized);
    let rep = report_prepared(prepared, &map, report)?;
    Ok(SweepPoint {
        value,
        report: rep,
        spectrum: spectrum(&map),
    })
}

/// Refits after mismatching a fraction `eps` of the train pairs (test pairs
/// untouched) for each `eps`.
pub fn pair_noise_sweep(
    data: &PairedDataset,
    epsilons: &[f64],
    seed: u64,
    fit: &FitConfig,
    report: &ReportConfig,
) -> Result<SweepResult> {
    check_increasing(epsilons, "epsilon")?;
    if let Some(e) = epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::InvalidArgument(format!("epsilon {e} outside [0, 1]")));
    }
    let prepared = Prepared::new(data, report.standardize)?;
    let points = epsilons
        .par_iter()
        .map(|&eps| {
            let y = mismatch_pairs(&prepared.y_train, eps, seed);
            eval_point(&prepared, &prepared.x_train, &y, fit, report, eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis: SweepAxis::PairNoise,
        points,
        aggregate: None,
    })
}

/// Fits on seed-deterministic nested subsets of the train split (columns kept
/// in train order) and scores each on the full test split. Standardization
/// statistics come from the full train split so every point sees the same
/// test features.
pub fn pair_budget_sweep(
    data: &PairedDataset,
    budgets: &[usize],
    seed: u64,
    fit: &FitConfig,
    report: &ReportConfig,
) -> Result<SweepResult> {
    let as_f: Vec<f64> = budgets.iter().map(|&b| b as f64).collect();
    check_increasing(&as_f, "budget")?;
    let prepared = Prepared::new(data, report.standardize)?;
    let n_train = prepared.x_train.ncols();
    if let Some(b) = budgets.iter().find(|&&b| b == 0 || b > n_train) {
        return Err(Error::InvalidArgument(format!(
            "budget {b} outside 1..={n_train} train pairs"
        )));
    }
    let mut order: Vec<usize> = (0..n_train).collect();
    order.shuffle(&mut stream_rng(seed, "pair-budget"));
    let points = budgets
        .par_iter()
        .map(|&b| {
            let mut idx = order[..b].to_vec();
            idx.sort_unstable();
            let x = prepared.x_train.select_columns(idx.iter());
            let y = prepared.y_train.select_columns(idx.iter());
            eval_point(&prepared, &x, &y, fit, report, b as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis: SweepAxis::PairBudget,
        points,
        aggregate: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReports {
    pub in_domain: IsomorphismReport,
    pub shifted: IsomorphismReport,
}

/// Scores one map on the in-domain test split and on every pair of a shifted
/// dataset. The shifted pairs are transformed with the fit data's train
/// statistics.
pub fn distribution_shift_eval(
    fit_data: &PairedDataset,
    shifted: &PairedDataset,
    map: &AlignmentMap,
    report: &ReportConfig,
) -> Result<ShiftReports> {
    let leaked = overlap(&fit_data.train_ids(), shifted.pairs());
    if leaked > 0 {
        return Err(Error::SplitOverlap(leaked));
    }
    let prepared = Prepared::new(fit_data, report.standardize)?;
    let in_domain = report_prepared(&prepared, map, report)?;
    let shifted_prep = prepared.with_eval_set(shifted)?;
    let shifted = report_prepared(&shifted_prep, map, report)?;
    Ok(ShiftReports { in_domain, shifted })
}

/// Fits one map on `fit_data` and scores it on each shifted dataset; the
/// point value is the label paired with each set.
pub fn shift_sweep(
    fit_data: &PairedDataset,
    shifted: &[(f64, PairedDataset)],
    fit: &FitConfig,
    report: &ReportConfig,
) -> Result<SweepResult> {
    if shifted.is_empty() {
        return Err(Error::InvalidArgument("empty shift list".into()));
    }
    let prepared = Prepared::new(fit_data, report.standardize)?;
    let map = fit_prepared(&prepared, fit)?;
    let spec = spectrum(&map);
    let points = shifted
        .iter()
        .map(|(value, data)| {
            let r = distribution_shift_eval(fit_data, data, &map, report)?;
            Ok(SweepPoint {
                value: *value,
                report: r.shifted,
                spectrum: spec.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis: SweepAxis::ShiftSplit,
        points,
        aggregate: None,
    })
}

/// Runs `run` once per seed and aggregates mean and population std of every
/// metric. Needs at least three seeds.
pub fn seed_sweep<F>(run: F, seeds: &[u64]) -> Result<SweepResult>
where
    F: Fn(u64) -> Result<Evaluation> + Sync,
{
    if seeds.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "seed sweeps need at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    let points = seeds
        .par_iter()
        .map(|&s| {
            run(s).map(|e| SweepPoint {
                value: s as f64,
                report: e.report,
                spectrum: e.spectrum,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Some(SweepResult::aggregate_points(&points));
    Ok(SweepResult {
        axis: SweepAxis::Seed,
        points,
        aggregate,
    })
}

/// Fit-and-evaluate helper for seed sweeps on fixed data.
pub fn evaluate_data(data: &PairedDataset, fit: &FitConfig, report: &ReportConfig) -> Result<Evaluation> {
    evaluate_prepared(&Prepared::new(data, report.standardize)?, fit, report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// `dims x N` coordinates.
    pub coords: DMatrix<f64>,
    /// Fraction of total variance captured by each axis.
    pub explained: Vec<f64>,
    /// Principal axes as columns (`d x dims`).
    pub axes: DMatrix<f64>,
}

/// Projects the centered set onto its top `dims` principal axes. Each axis is
/// signed so that its largest-magnitude loading is positive.
pub fn pca_project(set: &LatentSet, dims: usize) -> Result<PcaProjection> {
    let x = set.values();
    let (d, n) = x.shape();
    if n < 3 {
        return Err(Error::InvalidArgument("PCA needs at least 3 points".into()));
    }
    if dims == 0 || dims > d {
        return Err(Error::InvalidArgument(format!("cannot project {d} dims onto {dims}")));
    }
    let xc = linalg::center_rows(x);
    let cov = (&xc * xc.transpose()) / n as f64;
    let total = cov.trace();
    if total <= 0.0 {
        return Err(Error::ZeroVariance("PCA input has zero variance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = DMatrix::zeros(d, dims);
    let mut explained = Vec::with_capacity(dims);
    for (k, &idx) in order.iter().take(dims).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, val)| val)
            .unwrap_or(1.0);
        if lead < 0.0 {
            v.neg_mut();
        }
        axes.set_column(k, &v);
        explained.push(eig.eigenvalues[idx].max(0.0) / total);
    }
    let coords = axes.transpose() * &xc;
    Ok(PcaProjection {
        coords,
        explained,
        axes,
    })
}

/// CSV rows `state_id,pc1,pc2,...`.
pub fn projection_csv(set: &LatentSet, proj: &PcaProjection) -> String {
    let dims = proj.coords.nrows();
    let mut out = String::from("state_id");
    for k in 0..dims {
        out.push_str(&format!(",pc{}", k + 1));
    }
    out.push('\n');
    for (n, id) in set.state_ids().iter().enumerate() {
        out.push_str(id);
        for k in 0..dims {
            out.push(',');
            out.push_str(&fmt_f64(proj.coords[(k, n)]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{choose_inverse, Method};
    use nalgebra::DVector;

    #[test]
    fn spectrum_hand_cases() {
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0]));
        let s = spectrum(&AlignmentMap::from_matrix(w, Method::Ols, 0.0).unwrap());
        assert!((s.condition_number - 10.0).abs() < 1e-12);
        assert!((s.orthogonality_deviation - 99.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.effective_rank, 2);

        let u = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let rank1 = &u * u.transpose();
        let s = spectrum(&AlignmentMap::from_matrix(rank1, Method::Ols, 0.0).unwrap());
        assert_eq!(s.effective_rank, 1);
        assert!(s.condition_number.is_infinite());

        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let s = spectrum(&AlignmentMap::from_matrix(rot, Method::Procrustes, 0.0).unwrap());
        assert!((s.condition_number - 1.0).abs() < 1e-12);
        assert!(s.orthogonality_deviation <= 1e-10);
    }

    #[test]
    fn spectrum_json_writes_null_for_infinite_kappa() {
        let m = choose_inverse(&AlignmentMap::from_matrix(DMatrix::zeros(2, 2), Method::Ols, 0.0).unwrap());
        let s = spectrum(&m);
        let j = serde_json::to_value(&s).unwrap();
        assert!(j["condition_number"].is_null());
        let back: SpectrumDiagnostics = serde_json::from_value(j).unwrap();
        assert!(back.condition_number.is_infinite());
    }

    #[test]
    fn mean_std_hand_values() {
        let ms = mean_std(&[0.8, 0.9, 1.0]);
        assert!((ms.mean - 0.9).abs() < 1e-15);
        assert!((ms.std - (0.02f64 / 3.0).sqrt()).abs() < 1e-15);
        let ms = mean_std(&[0.5, 0.5, 0.5]);
        assert_eq!(ms.std, 0.0);
    }

    #[test]
    fn mismatch_moves_every_selected_column() {
        let y = DMatrix::from_fn(1, 20, |_, j| j as f64);
        for eps in [0.05, 0.1, 0.5, 1.0] {
            let out = mismatch_pairs(&y, eps, 4);
            let moved = (0..20).filter(|&j| out[(0, j)] != y[(0, j)]).count();
            assert_eq!(moved, mismatch_count(eps, 20));
        }
        assert_eq!(mismatch_pairs(&y, 0.0, 4), y);
        assert_eq!(mismatch_count(0.01, 20), 2);
    }

    #[test]
    fn sweeps_reject_bad_axes() {
        let run = |_s: u64| -> Result<Evaluation> { unreachable!() };
        assert!(seed_sweep(run, &[1, 2]).is_err());
        assert!(check_increasing(&[0.0, 0.3, 0.1], "eps").is_err());
        assert!(check_increasing(&[], "eps").is_err());
    }

    #[test]
    fn pca_axis_aligned_data() {
        let x = DMatrix::from_row_slice(2, 4, &[3.0, -3.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
        let ids = (0..4).map(|i| format!("s{i}")).collect();
        let set = LatentSet::new(x.clone(), ids, "v").unwrap();
        let p = pca_project(&set, 2).unwrap();
        for n in 0..4 {
            assert!((p.coords[(0, n)].abs() - x[(0, n)].abs()).abs() < 1e-12);
            assert!((p.coords[(1, n)].abs() - x[(1, n)].abs()).abs() < 1e-12);
        }
        assert!(p.explained[0] >= p.explained[1]);
        assert!(p.explained.iter().sum::<f64>() <= 1.0 + 1e-12);
        let flat = LatentSet::new(DMatrix::from_element(2, 3, 1.0), vec!["a".into(), "b".into(), "c".into()], "v").unwrap();
        assert!(matches!(pca_project(&flat, 2), Err(Error::ZeroVariance(_))));
    }
}
