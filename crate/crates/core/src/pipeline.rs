//! End-to-end fit and evaluation: standardize with train statistics, fit `W`
//! on the train split, choose its inverse, score the test split.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::align::{self, AlignmentMap, Method, DEFAULT_TAU};
use crate::diagnostics::{spectrum, SpectrumDiagnostics};
use crate::error::{Error, Result};
use crate::latentio::{PairedDataset, Split, StandardizationStats};
use crate::linalg::row_means;
use crate::metrics::{report_prepared, IsomorphismReport, ReportConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: Method,
    pub lambda: f64,
    pub tau: f64,
    /// Retry a singular unregularized fit with a small trace-scaled ridge.
    pub auto_ridge: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::Ridge,
            lambda: 0.0,
            tau: DEFAULT_TAU,
            auto_ridge: true,
        }
    }
}

/// Train/test matrices of a paired dataset, optionally standardized per view
/// with train-split statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x_train: DMatrix<f64>,
    pub y_train: DMatrix<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: DMatrix<f64>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub y_train_mean: DVector<f64>,
    pub stats1: StandardizationStats,
    pub stats2: StandardizationStats,
    pub standardized: bool,
}

impl Prepared {
    pub fn new(data: &PairedDataset, standardize: bool) -> Result<Self> {
        let (x_train, y_train) = data.matrices(Split::Train)?;
        let (x_test, y_test) = data.matrices(Split::Test)?;
        let (stats1, stats2) = if standardize {
            (
                StandardizationStats::from_matrix(&x_train)?,
                StandardizationStats::from_matrix(&y_train)?,
            )
        } else {
            (
                StandardizationStats::identity(x_train.nrows()),
                StandardizationStats::identity(y_train.nrows()),
            )
        };
        let mut p = Self {
            x_train,
            y_train,
            x_test,
            y_test,
            train_ids: data.train_ids(),
            test_ids: data.test_ids(),
            y_train_mean: DVector::zeros(0),
            stats1,
            stats2,
            standardized: standardize,
        };
        if standardize {
            p.x_train = p.stats1.apply_matrix(&p.x_train)?;
            p.y_train = p.stats2.apply_matrix(&p.y_train)?;
            p.x_test = p.stats1.apply_matrix(&p.x_test)?;
            p.y_test = p.stats2.apply_matrix(&p.y_test)?;
        }
        p.y_train_mean = row_means(&p.y_train);
        Ok(p)
    }

    /// Replaces the evaluation side with another dataset's pairs, transformed
    /// with this dataset's train statistics.
    pub fn with_eval_set(&self, eval: &PairedDataset) -> Result<Self> {
        let ids = eval.pairs().to_vec();
        let x = self.stats1.apply_matrix(&eval.view1().gather(&ids)?)?;
        let y = self.stats2.apply_matrix(&eval.view2().gather(&ids)?)?;
        let mut out = self.clone();
        out.x_test = x;
        out.y_test = y;
        out.test_ids = ids;
        Ok(out)
    }
}

/// Fits `W` on raw matrices and chooses its inverse.
pub fn fit_matrices(x: &DMatrix<f64>, y: &DMatrix<f64>, config: &FitConfig) -> Result<AlignmentMap> {
    let map = match config.method {
        Method::Procrustes => align::fit_procrustes(x, y)?,
        Method::Ridge | Method::Ols => {
            let lambda = if config.method == Method::Ols { 0.0 } else { config.lambda };
            if config.auto_ridge {
                align::fit_ridge_auto(x, y, lambda)?
            } else {
                align::fit_ridge(x, y, lambda)?
            }
        }
        Method::Oracle => {
            return Err(Error::InvalidArgument("oracle maps are not fitted".into()));
        }
    };
    Ok(align::choose_inverse(&map.with_tau(config.tau)))
}

pub fn fit_prepared(prepared: &Prepared, config: &FitConfig) -> Result<AlignmentMap> {
    let map = fit_matrices(&prepared.x_train, &prepared.y_train, config)?;
    Ok(map
        .with_fit_ids(prepared.train_ids.clone())
        .with_standardized(prepared.standardized))
}

/// Fits on the train split of `data` (standardized unless `standardize` is
/// false).
pub fn fit_paired(data: &PairedDataset, config: &FitConfig, standardize: bool) -> Result<AlignmentMap> {
    fit_prepared(&Prepared::new(data, standardize)?, config)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub map: AlignmentMap,
    pub report: IsomorphismReport,
    pub spectrum: SpectrumDiagnostics,
}

/// Fit, invert and score in one call.
pub fn evaluate(data: &PairedDataset, fit: &FitConfig, report: &ReportConfig) -> Result<Evaluation> {
    let prepared = Prepared::new(data, report.standardize)?;
    evaluate_prepared(&prepared, fit, report)
}

pub fn evaluate_prepared(prepared: &Prepared, fit: &FitConfig, report: &ReportConfig) -> Result<Evaluation> {
    let map = fit_prepared(prepared, fit)?;
    let rep = report_prepared(prepared, &map, report)?;
    Ok(Evaluation {
        spectrum: spectrum(&map),
        report: rep,
        map,
    })
}
