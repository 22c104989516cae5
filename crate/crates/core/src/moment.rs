//! The empirical Stein moment `Â = (1/n) Σᵢ yᵢ T(xᵢ)` and eigen-based
//! feature selection from its leading eigenvectors.

use std::cmp::Ordering;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen};
use crate::parallel::tree_reduce;
use crate::score::CovarianceModel;

/// `Â` with its full eigensystem, ordered by descending `|λ|`.
#[derive(Debug, Clone)]
pub struct SteinMoment {
    a_hat: Mat<f64>,
    eigenvalues: Vec<f64>,
    /// Row `i` is the unit eigenvector for `eigenvalues[i]`.
    eigenvectors: Mat<f64>,
    n_used: usize,
}

impl SteinMoment {
    /// Eigendecomposes an already-formed symmetric moment matrix.
    pub fn from_matrix(mut a_hat: Mat<f64>, n_used: usize) -> Self {
        linalg::symmetrize(&mut a_hat);
        let (values, vectors) = sym_eigen(a_hat.as_ref());
        let p = values.len();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eigen_order(values[i], values[j]).then(i.cmp(&j)));

        let mut eigenvectors = Mat::zeros(p, p);
        for (row, &src) in order.iter().enumerate() {
            let mut lead = 0;
            for k in 1..p {
                if vectors[(k, src)].abs() > vectors[(lead, src)].abs() {
                    lead = k;
                }
            }
            let sign = if vectors[(lead, src)] < 0.0 { -1.0 } else { 1.0 };
            for k in 0..p {
                eigenvectors[(row, k)] = sign * vectors[(k, src)];
            }
        }
        Self {
            eigenvalues: order.iter().map(|&i| values[i]).collect(),
            a_hat,
            eigenvectors,
            n_used,
        }
    }

    pub fn a_hat(&self) -> MatRef<'_, f64> {
        self.a_hat.as_ref()
    }

    /// Signed eigenvalues, sorted by descending magnitude.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn abs_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|v| v.abs()).collect()
    }

    pub fn eigenvectors(&self) -> MatRef<'_, f64> {
        self.eigenvectors.as_ref()
    }

    pub fn n_used(&self) -> usize {
        self.n_used
    }

    pub fn dim(&self) -> usize {
        self.a_hat.nrows()
    }
}

/// Descending `|λ|`, then descending signed value.
fn eigen_order(a: f64, b: f64) -> Ordering {
    b.abs()
        .partial_cmp(&a.abs())
        .unwrap_or(Ordering::Equal)
        .then(b.partial_cmp(&a).unwrap_or(Ordering::Equal))
}

fn check_dims(d: &Dataset, cov: &CovarianceModel) -> Result<()> {
    if d.n() == 0 {
        return Err(Error::Degenerate("no samples".into()));
    }
    if cov.dim() != d.p() {
        return Err(Error::dim("covariance vs dataset columns", d.p(), cov.dim()));
    }
    Ok(())
}

/// Builds `Â = (1/n) Σᵢ yᵢ T(xᵢ)` as `(1/n) Vᵀ diag(y) V − ȳ Σ⁻¹` with
/// `V = X Σ⁻¹`, accumulated over fixed row blocks.
pub fn stein_moment(d: &Dataset, cov: &CovarianceModel) -> Result<SteinMoment> {
    check_dims(d, cov)?;
    let (n, p) = (d.n(), d.p());
    let x = d.x();
    let y = d.y();
    let omega = cov.sigma_inv();
    let (weighted, y_sum) = tree_reduce(
        n,
        |r| {
            let v = x.subrows(r.start, r.len()) * omega;
            let yv = Mat::from_fn(r.len(), p, |i, j| y[r.start + i] * v[(i, j)]);
            let partial = v.transpose() * &yv;
            (partial, y[r].iter().sum::<f64>())
        },
        |(a, sa), (b, sb)| (a + b, sa + sb),
    )
    .expect("n > 0");
    let inv_n = 1.0 / n as f64;
    let y_bar = y_sum * inv_n;
    let a_hat = Mat::from_fn(p, p, |i, j| weighted[(i, j)] * inv_n - y_bar * omega[(i, j)]);
    Ok(SteinMoment::from_matrix(a_hat, n))
}

/// Diagonal of `Â` only; `O(n p²)` without forming the `p × p` moment.
pub fn moment_diagonal(d: &Dataset, cov: &CovarianceModel) -> Result<Vec<f64>> {
    check_dims(d, cov)?;
    let (n, p) = (d.n(), d.p());
    let x = d.x();
    let y = d.y();
    let omega = cov.sigma_inv();
    let (sums, y_sum) = tree_reduce(
        n,
        |r| {
            let v = x.subrows(r.start, r.len()) * omega;
            let mut acc = vec![0.0; p];
            for (k, a) in acc.iter_mut().enumerate() {
                let col = v.col(k);
                for i in 0..r.len() {
                    *a += y[r.start + i] * col[i] * col[i];
                }
            }
            (acc, y[r].iter().sum::<f64>())
        },
        |(mut a, sa), (b, sb)| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            (a, sa + sb)
        },
    )
    .expect("n > 0");
    let inv_n = 1.0 / n as f64;
    let y_bar = y_sum * inv_n;
    Ok((0..p).map(|k| sums[k] * inv_n - y_bar * omega[(k, k)]).collect())
}

/// The `k1` leading eigenvectors as rows of a `k1 × p` matrix.
pub fn top_k_rows(m: &SteinMoment, k1: usize) -> Result<Mat<f64>> {
    let p = m.dim();
    if k1 == 0 || k1 > p {
        return Err(Error::Config(format!("k1 must be in 1..={p}, got {k1}")));
    }
    Ok(m.eigenvectors.subrows(0, k1).to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Keep every feature whose column score is at least `kappa`.
    Threshold { kappa: f64 },
    /// Keep the `s` highest-scoring features.
    TopS { s: usize },
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Sorted feature indices.
    pub selected: Vec<usize>,
    /// `‖Ŵ₁[·, j]‖₂` per feature.
    pub column_scores: Vec<f64>,
    pub k1_used: usize,
    pub rule: SelectionRule,
    /// `k1 × p` leading eigenvectors.
    pub w_hat: Mat<f64>,
    /// Leading signed eigenvalues (up to `2·k1`).
    pub eigenvalues: Vec<f64>,
    /// Set when a threshold rule kept nothing.
    pub empty_selection: bool,
}

impl SelectionResult {
    /// Re-expresses a result computed on the columns `idx` of a
    /// `p`-dimensional problem in the original index space. Dropped
    /// features get a zero score and a zero column in `w_hat`.
    pub fn lift(self, idx: &[usize], p: usize) -> SelectionResult {
        let mut scores = vec![0.0; p];
        let mut w = Mat::zeros(self.w_hat.nrows(), p);
        for (local, &orig) in idx.iter().enumerate() {
            scores[orig] = self.column_scores[local];
            for r in 0..self.w_hat.nrows() {
                w[(r, orig)] = self.w_hat[(r, local)];
            }
        }
        let mut selected: Vec<usize> = self.selected.iter().map(|&j| idx[j]).collect();
        selected.sort_unstable();
        SelectionResult {
            selected,
            column_scores: scores,
            w_hat: w,
            ..self
        }
    }

    pub fn to_document(&self, feature_ids: &[String]) -> SelectionDocument {
        SelectionDocument {
            selected: self.selected.iter().map(|&j| feature_ids[j].clone()).collect(),
            selected_indices: self.selected.clone(),
            scores: self.column_scores.clone(),
            k1: self.k1_used,
            rule: self.rule,
            eigenvalues: self.eigenvalues.clone(),
            empty_selection: self.empty_selection,
        }
    }
}

/// JSON form of a [`SelectionResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub selected: Vec<String>,
    pub selected_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub k1: usize,
    pub rule: SelectionRule,
    pub eigenvalues: Vec<f64>,
    #[serde(default)]
    pub empty_selection: bool,
}

/// `ℓ₂` norm of every column of `w`.
pub fn column_norms(w: MatRef<'_, f64>) -> Vec<f64> {
    (0..w.ncols())
        .map(|j| (0..w.nrows()).map(|r| w[(r, j)] * w[(r, j)]).sum::<f64>().sqrt())
        .collect()
}

/// Indices of the `s` largest scores (ties to the lower index), sorted.
pub fn top_s_indices(scores: &[f64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut keep: Vec<usize> = order.into_iter().take(s.min(scores.len())).collect();
    keep.sort_unstable();
    keep
}

/// Applies `rule` to a list of column scores.
pub fn apply_rule(scores: &[f64], rule: SelectionRule) -> Result<Vec<usize>> {
    match rule {
        SelectionRule::Threshold { kappa } => {
            if !(kappa > 0.0) {
                return Err(Error::Config(format!("kappa must be > 0, got {kappa}")));
            }
            Ok((0..scores.len()).filter(|&j| scores[j] >= kappa).collect())
        }
        SelectionRule::TopS { s } => {
            if s == 0 || s > scores.len() {
                return Err(Error::Config(format!(
                    "s must be in 1..={}, got {s}",
                    scores.len()
                )));
            }
            Ok(top_s_indices(scores, s))
        }
    }
}

/// Column-norm selection from the `k1` leading eigenvectors of `m`.
pub fn select(m: &SteinMoment, k1: usize, rule: SelectionRule) -> Result<SelectionResult> {
    let w_hat = top_k_rows(m, k1)?;
    let column_scores = column_norms(w_hat.as_ref());
    let selected = apply_rule(&column_scores, rule)?;
    let empty_selection = selected.is_empty();
    let head = (2 * k1).min(m.dim());
    Ok(SelectionResult {
        selected,
        column_scores,
        k1_used: k1,
        rule,
        w_hat,
        eigenvalues: m.eigenvalues[..head].to_vec(),
        empty_selection,
    })
}
