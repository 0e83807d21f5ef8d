//! Small dense linear-algebra helpers: spectral norms and rank tests.

use nalgebra::{DMatrix, DVector};

/// Relative threshold below which singular values count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Blocks with at most this many rows and columns use a dense SVD for the
/// spectral norm; larger ones fall back to power iteration.
pub const DENSE_SVD_LIMIT: usize = 64;

pub fn spectral_norm_svd(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Largest singular value by power iteration on `mᵀm`.
///
/// Stops once the Rayleigh quotient changes by less than `rel_tol` relative to
/// its current value. If the all-ones start vector lies in the null space the
/// canonical basis vectors are tried in turn.
pub fn spectral_norm_power(m: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let cols = m.ncols();
    if m.nrows() == 0 || cols == 0 {
        return 0.0;
    }
    let starts = std::iter::once(DVector::from_element(cols, 1.0))
        .chain((0..cols).map(|k| DVector::from_fn(cols, |t, _| if t == k { 1.0 } else { 0.0 })));
    for start in starts {
        let mut v = start.normalize();
        let mut w = m.tr_mul(&(m * &v));
        let mut lambda = v.dot(&w);
        if lambda <= 0.0 {
            continue;
        }
        for _ in 0..max_iter {
            v = w.normalize();
            w = m.tr_mul(&(m * &v));
            let next = v.dot(&w);
            let done = (next - lambda).abs() <= rel_tol * next;
            lambda = next;
            if done {
                break;
            }
        }
        return lambda.max(0.0).sqrt();
    }
    0.0
}

/// Spectral norm, choosing the method by block size.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() <= DENSE_SVD_LIMIT && m.ncols() <= DENSE_SVD_LIMIT {
        spectral_norm_svd(m)
    } else {
        spectral_norm_power(m, 1e-10, 100_000)
    }
}

fn rank_with_threshold(m: &DMatrix<f64>, threshold: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone()
        .singular_values()
        .iter()
        .filter(|&&s| s > threshold)
        .count()
}

/// Numerical rank: singular values at most `RANK_TOLERANCE * σ_max` are zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let smax = spectral_norm_svd(m);
    if smax == 0.0 {
        return 0;
    }
    rank_with_threshold(m, RANK_TOLERANCE * smax)
}

/// Rows that are linearly dependent on the rows preceding them.
pub fn dependent_rows(m: &DMatrix<f64>) -> Vec<usize> {
    let smax = spectral_norm_svd(m);
    let threshold = RANK_TOLERANCE * smax;
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for row in 0..m.nrows() {
        let mut rows = kept.clone();
        rows.push(row);
        let sub = m.select_rows(rows.iter());
        if smax == 0.0 || rank_with_threshold(&sub, threshold) < rows.len() {
            dependent.push(row);
        } else {
            kept.push(row);
        }
    }
    dependent
}

/// Stacks per-agent blocks into one vector.
pub fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let total = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(total);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.len()).copy_from(b);
        at += b.len();
    }
    out
}
