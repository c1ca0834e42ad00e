//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

/// Singular values in nonincreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Relative cutoff below which singular values count as zero:
/// `sigma_max * max(rows, cols) * eps`.
pub fn rank_cutoff(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    sigma_max * rows.max(cols) as f64 * f64::EPSILON
}

/// `sigma_max / sigma_min`, or infinity when the smallest singular value falls
/// under the rank cutoff.
pub fn condition_number(sv: &[f64], rows: usize, cols: usize) -> f64 {
    let (Some(&max), Some(&min)) = (sv.first(), sv.last()) else {
        return f64::INFINITY;
    };
    if max <= 0.0 || min <= rank_cutoff(max, rows, cols) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Number of singular values at or above the rank cutoff.
pub fn effective_rank(sv: &[f64], rows: usize, cols: usize) -> usize {
    let Some(&max) = sv.first() else { return 0 };
    if max <= 0.0 {
        return 0;
    }
    let cut = rank_cutoff(max, rows, cols);
    sv.iter().filter(|&&s| s >= cut).count()
}

/// Moore-Penrose pseudoinverse with the standard relative rank cutoff.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let svd = SVD::new(m.clone(), true, true);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = rank_cutoff(max, rows, cols);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > 0.0 && s >= cut {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// `‖WᵀW − I‖_F / ‖I‖_F`.
pub fn orthogonality_deviation(w: &DMatrix<f64>) -> f64 {
    let n = w.ncols();
    let gram = w.transpose() * w - DMatrix::<f64>::identity(n, n);
    gram.norm() / (n as f64).sqrt()
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with the
/// sign of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Row means of a `d x N` matrix.
pub fn row_means(m: &DMatrix<f64>) -> nalgebra::DVector<f64> {
    let n = m.ncols().max(1) as f64;
    nalgebra::DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / n))
}

/// Subtracts each row's mean.
pub fn center_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mu = row_means(m);
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mu[i])
}
