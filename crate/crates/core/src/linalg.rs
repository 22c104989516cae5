//! Thin helpers over `faer` for the dense symmetric algebra used throughout.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};

use crate::parallel::tree_reduce;

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Mat<f64>) {
    let p = m.nrows();
    debug_assert_eq!(p, m.ncols());
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. `None` if the factorization fails.
pub fn spd_inverse(m: MatRef<'_, f64>) -> Option<Mat<f64>> {
    let llt = m.llt(Side::Lower).ok()?;
    let mut inv = llt.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn sym_eigenvalues(m: MatRef<'_, f64>) -> Vec<f64> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .expect("symmetric eigenvalue iteration failed to converge")
}

/// Eigenvalues (nondecreasing) and eigenvectors (as columns).
pub fn sym_eigen(m: MatRef<'_, f64>) -> (Vec<f64>, Mat<f64>) {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric eigendecomposition failed to converge");
    let s = evd.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    (values, evd.U().to_owned())
}

/// `(1/scale)·XᵀX`, accumulated over fixed row blocks.
pub fn scaled_gram(x: MatRef<'_, f64>, scale: f64) -> Mat<f64> {
    let p = x.ncols();
    let mut g = tree_reduce(
        x.nrows(),
        |r| {
            let xb = x.subrows(r.start, r.len());
            xb.transpose() * xb
        },
        |a, b| a + b,
    )
    .unwrap_or_else(|| Mat::zeros(p, p));
    g *= faer::Scale(1.0 / scale);
    symmetrize(&mut g);
    g
}

pub fn principal_submatrix(m: MatRef<'_, f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn select_columns(m: MatRef<'_, f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)] * m[(i, j)];
        }
    }
    acc.sqrt()
}

pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut acc: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc = acc.max(m[(i, j)].abs());
        }
    }
    acc
}

pub fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn to_rows(m: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds a matrix from row vectors. `None` for ragged input.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { [4.0, 0.5][i] } else { 0.0 });
        let inv = spd_inverse(m.as_ref()).unwrap();
        assert!((inv[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((inv[(1, 1)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_rejects_indefinite() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(spd_inverse(m.as_ref()).is_none());
    }

    #[test]
    fn gram_matches_direct_product() {
        let x = Mat::from_fn(700, 3, |i, j| ((i * 3 + j) as f64 * 0.13).cos());
        let g = scaled_gram(x.as_ref(), 700.0);
        let direct = x.transpose() * &x;
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[(i, j)] - direct[(i, j)] / 700.0).abs() < 1e-12);
            }
        }
    }
}
