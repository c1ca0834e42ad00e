//! Brute-force reference implementations shared by the integration tests and
//! the acceptance harness. Everything here is written with explicit loops and
//! no calls into the library's metric code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Small integer coordinates, so that exact distance ties occur.
pub fn lattice(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2i32..=2) as f64)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

fn sq_dist(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..m.nrows() {
        let d = m[(r, i)] - m[(r, j)];
        s += d * d;
    }
    s
}

pub fn mse(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let pred = matmul(w, x);
    let mut s = 0.0;
    for n in 0..y.ncols() {
        for r in 0..y.nrows() {
            let d = y[(r, n)] - pred[(r, n)];
            s += d * d;
        }
    }
    s / y.ncols() as f64
}

pub fn r2(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, ybar: &[f64]) -> f64 {
    let pred = matmul(w, x);
    let (mut resid, mut total) = (0.0, 0.0);
    for n in 0..y.ncols() {
        for r in 0..y.nrows() {
            resid += (y[(r, n)] - pred[(r, n)]).powi(2);
            total += (y[(r, n)] - ybar[r]).powi(2);
        }
    }
    1.0 - resid / total
}

/// CKA through centered Gram matrices: `tr(KHLH) / sqrt(tr(KHKH) tr(LHLH))`.
pub fn cka_gram(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.ncols();
    let gram = |z: &DMatrix<f64>| {
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for r in 0..z.nrows() {
                    s += z[(r, i)] * z[(r, j)];
                }
                g[(i, j)] = s;
            }
        }
        // double centering H G H
        let mf = m as f64;
        let row: Vec<f64> = (0..m).map(|i| (0..m).map(|j| g[(i, j)]).sum::<f64>() / mf).collect();
        let all = row.iter().sum::<f64>() / mf;
        DMatrix::from_fn(m, m, |i, j| g[(i, j)] - row[i] - row[j] + all)
    };
    let (k, l) = (gram(a), gram(b));
    let dot = |p: &DMatrix<f64>, q: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += p[(i, j)] * q[(i, j)];
            }
        }
        s
    };
    dot(&k, &l) / (dot(&k, &k) * dot(&l, &l)).sqrt()
}

/// Rank by counting: `1 + #less + (#equal − 1)/2`.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn dsc(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.ncols();
    let (mut da, mut db) = (Vec::new(), Vec::new());
    for i in 0..m {
        for j in (i + 1)..m {
            da.push(sq_dist(a, i, j).sqrt());
            db.push(sq_dist(b, i, j).sqrt());
        }
    }
    pearson(&ranks(&da), &ranks(&db))
}

/// `j` is a neighbour of `i` iff fewer than `k` other points precede it in
/// (distance, index) order.
pub fn neighbours(m: &DMatrix<f64>, i: usize, k: usize) -> Vec<usize> {
    let n = m.ncols();
    let key = |j: usize| (sq_dist(m, i, j), j);
    (0..n)
        .filter(|&j| j != i)
        .filter(|&j| {
            let (dj, _) = key(j);
            let before = (0..n)
                .filter(|&l| l != i && l != j)
                .filter(|&l| {
                    let (dl, _) = key(l);
                    dl < dj || (dl == dj && l < j)
                })
                .count();
            before < k
        })
        .collect()
}

pub fn nos(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> f64 {
    let m = a.ncols();
    let mut shared = 0usize;
    for i in 0..m {
        let na = neighbours(a, i, k);
        let nb = neighbours(b, i, k);
        shared += na.iter().filter(|j| nb.contains(j)).count();
    }
    1.0 - shared as f64 / (k * m) as f64
}

/// Frobenius residual `‖Y − WX‖_F`.
pub fn residual(w: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let p = matmul(w, x);
    let mut s = 0.0;
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            s += (y[(i, j)] - p[(i, j)]).powi(2);
        }
    }
    s.sqrt()
}

/// Orthogonal matrix from Gram–Schmidt on a Gaussian matrix, with a uniform
/// (Haar) distribution.
pub fn haar_orthogonal(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = gaussian(d, d, rng);
    let mut q = DMatrix::<f64>::zeros(d, d);
    for c in 0..d {
        let mut v: Vec<f64> = (0..d).map(|r| g[(r, c)]).collect();
        for p in 0..c {
            let dot: f64 = (0..d).map(|r| v[r] * q[(r, p)]).sum();
            for r in 0..d {
                v[r] -= dot * q[(r, p)];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for r in 0..d {
            q[(r, c)] = v[r] / norm;
        }
    }
    q
}
