//! Covariance estimation and the Gaussian second-order score
//! `T(x) = Σ⁻¹xxᵀΣ⁻¹ − Σ⁻¹`.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::data::{center_columns, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, principal_submatrix, scaled_gram, spd_inverse, sym_eigenvalues};
use crate::parallel::tree_reduce;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMethod {
    Known,
    Sample,
    LedoitWolf,
}

/// A positive-definite covariance together with its inverse.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    sigma: Mat<f64>,
    sigma_inv: Mat<f64>,
    method: CovarianceMethod,
    min_eig: f64,
    shrinkage: Option<f64>,
}

impl CovarianceModel {
    /// Wraps a user-supplied covariance (e.g. the generator's `Σ`).
    pub fn known(sigma: Mat<f64>) -> Result<Self> {
        let p = sigma.nrows();
        if p == 0 || sigma.ncols() != p {
            return Err(Error::dim("covariance (square)", p, sigma.ncols()));
        }
        let scale = linalg::max_abs(sigma.as_ref()).max(f64::MIN_POSITIVE);
        for j in 0..p {
            for i in (j + 1)..p {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::Config(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let mut sigma = sigma;
        linalg::symmetrize(&mut sigma);
        let min_eig = sym_eigenvalues(sigma.as_ref())[0];
        if min_eig <= 0.0 {
            return Err(Error::Rank(format!(
                "supplied covariance has min eigenvalue {min_eig:e}"
            )));
        }
        let sigma_inv = spd_inverse(sigma.as_ref())
            .ok_or_else(|| Error::Rank("cholesky of supplied covariance failed".into()))?;
        Ok(Self {
            sigma,
            sigma_inv,
            method: CovarianceMethod::Known,
            min_eig,
            shrinkage: None,
        })
    }

    pub fn sigma(&self) -> MatRef<'_, f64> {
        self.sigma.as_ref()
    }

    pub fn sigma_inv(&self) -> MatRef<'_, f64> {
        self.sigma_inv.as_ref()
    }

    pub fn method(&self) -> CovarianceMethod {
        self.method
    }

    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    /// Ledoit–Wolf intensity `δ`, when this model came from shrinkage.
    pub fn shrinkage(&self) -> Option<f64> {
        self.shrinkage
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// The marginal covariance of a sub-vector: the principal submatrix of
    /// `Σ` with its own inverse (not a submatrix of `Σ⁻¹`).
    pub fn marginal(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.dim()) {
            return Err(Error::dim("covariance index", self.dim(), bad));
        }
        let sub = principal_submatrix(self.sigma(), idx);
        let mut out = CovarianceModel::known(sub)?;
        out.method = self.method;
        Ok(out)
    }
}

/// How a covariance is obtained from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Sample,
    LedoitWolf,
    /// Ledoit–Wolf when `p > n/2`, the sample covariance otherwise.
    Auto,
}

impl Estimator {
    pub fn estimate(self, d: &Dataset) -> Result<CovarianceModel> {
        match self {
            Estimator::Sample => sample_covariance(d),
            Estimator::LedoitWolf => ledoit_wolf_covariance(d),
            Estimator::Auto if 2 * d.p() > d.n() => ledoit_wolf_covariance(d),
            Estimator::Auto => sample_covariance(d),
        }
    }
}

/// Either a fixed covariance for the full feature set or an estimator that
/// is re-run on whatever column subset is being scored.
#[derive(Debug, Clone)]
pub enum CovarianceSource {
    Known(CovarianceModel),
    Estimated(Estimator),
}

impl CovarianceSource {
    /// Covariance for `sub`, the dataset restricted to the columns `idx`.
    pub fn for_subset(&self, sub: &Dataset, idx: &[usize]) -> Result<CovarianceModel> {
        match self {
            CovarianceSource::Known(full) => {
                if idx.len() == full.dim() && idx.iter().enumerate().all(|(i, &j)| i == j) {
                    Ok(full.clone())
                } else {
                    full.marginal(idx)
                }
            }
            CovarianceSource::Estimated(est) => est.estimate(sub),
        }
    }
}

fn centered_view(d: &Dataset) -> std::borrow::Cow<'_, Dataset> {
    if d.centered() {
        std::borrow::Cow::Borrowed(d)
    } else {
        std::borrow::Cow::Owned(center_columns(d))
    }
}

/// `Σ̂ = (1/n) XᵀX` on centered data (centering is applied if the dataset is
/// not already centered). Fails rather than regularizing when `Σ̂` is
/// singular: its smallest eigenvalue must exceed `1e−10·trace(Σ̂)/p`.
pub fn sample_covariance(d: &Dataset) -> Result<CovarianceModel> {
    if d.n() < 2 {
        return Err(Error::Degenerate("sample covariance needs n >= 2".into()));
    }
    let d = centered_view(d);
    let (n, p) = (d.n(), d.p());
    // Centered data has rank at most n − 1.
    if p >= n {
        return Err(Error::Rank(format!("p = {p} >= n = {n}")));
    }
    let sigma = scaled_gram(d.x(), n as f64);
    let floor = 1e-10 * linalg::trace(sigma.as_ref()) / p as f64;
    let min_eig = sym_eigenvalues(sigma.as_ref())[0];
    if !(min_eig > floor) {
        return Err(Error::Rank(format!(
            "min eigenvalue {min_eig:e} below floor {floor:e}"
        )));
    }
    let sigma_inv =
        spd_inverse(sigma.as_ref()).ok_or_else(|| Error::Rank("cholesky failed".into()))?;
    Ok(CovarianceModel {
        sigma,
        sigma_inv,
        method: CovarianceMethod::Sample,
        min_eig,
        shrinkage: None,
    })
}

/// Ledoit–Wolf (2004) shrinkage toward a scaled identity:
///
/// ```text
/// S  = XᵀX / n                       (second moment of the rows as given)
/// μ  = tr(S) / p
/// d² = ‖S − μI‖²_F / p
/// b̄² = (Σᵢ ‖xᵢ‖⁴ / n − ‖S‖²_F) / (n p)
/// δ  = min(b̄², d²) / d²              (0 when d² = 0)
/// Σ  = (1 − δ) S + δ μ I
/// ```
///
/// Rows are used as given: the pipeline centers beforehand, and an
/// uncentered sample of two rows still yields `δ > 0`.
pub fn ledoit_wolf_covariance(d: &Dataset) -> Result<CovarianceModel> {
    let s = second_moment(d)?;
    let delta = ledoit_wolf_intensity(d.x(), s.as_ref());
    shrink(d, s, delta)
}

/// Ledoit–Wolf estimate with a caller-chosen intensity `δ ∈ [0, 1]`.
pub fn ledoit_wolf_with_intensity(d: &Dataset, delta: f64) -> Result<CovarianceModel> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("shrinkage intensity {delta} outside [0, 1]")));
    }
    let s = second_moment(d)?;
    shrink(d, s, delta)
}

fn second_moment(d: &Dataset) -> Result<Mat<f64>> {
    if d.n() < 2 {
        return Err(Error::Degenerate("Ledoit-Wolf needs n >= 2".into()));
    }
    let s = scaled_gram(d.x(), d.n() as f64);
    if linalg::trace(s.as_ref()) <= 0.0 {
        return Err(Error::Degenerate("all-zero design".into()));
    }
    Ok(s)
}

/// The optimal intensity `δ` for identity-target shrinkage of `s = XᵀX/n`.
pub fn ledoit_wolf_intensity(x: MatRef<'_, f64>, s: MatRef<'_, f64>) -> f64 {
    let (n, p) = (x.nrows() as f64, x.ncols() as f64);
    let mu = linalg::trace(s) / p;
    let s_fro2 = linalg::frobenius(s).powi(2);
    let d2 = (s_fro2 - p * mu * mu).max(0.0) / p;
    if d2 <= 0.0 {
        return 0.0;
    }
    let fourth = tree_reduce(
        x.nrows(),
        |r| {
            r.map(|i| {
                let sq: f64 = (0..x.ncols()).map(|j| x[(i, j)] * x[(i, j)]).sum();
                sq * sq
            })
            .sum::<f64>()
        },
        |a, b| a + b,
    )
    .unwrap_or(0.0);
    let b_bar2 = ((fourth / n - s_fro2) / (n * p)).max(0.0);
    (b_bar2.min(d2) / d2).clamp(0.0, 1.0)
}

fn shrink(d: &Dataset, s: Mat<f64>, delta: f64) -> Result<CovarianceModel> {
    let (n, p) = (d.n(), d.p());
    let mu = linalg::trace(s.as_ref()) / p as f64;
    let mut sigma = s;
    sigma *= faer::Scale(1.0 - delta);
    for j in 0..p {
        sigma[(j, j)] += delta * mu;
    }
    let rank_bound = if d.centered() { n - 1 } else { n };
    let min_eig = if p > rank_bound {
        // λ_min(S) = 0 exactly, so λ_min(Σ) = δμ.
        delta * mu
    } else {
        sym_eigenvalues(sigma.as_ref())[0]
    };
    if !(min_eig > 0.0) {
        return Err(Error::Rank(format!(
            "shrunk covariance is singular (delta = {delta})"
        )));
    }
    let sigma_inv = spd_inverse(sigma.as_ref())
        .ok_or_else(|| Error::Rank("cholesky of shrunk covariance failed".into()))?;
    Ok(CovarianceModel {
        sigma,
        sigma_inv,
        method: CovarianceMethod::LedoitWolf,
        min_eig,
        shrinkage: Some(delta),
    })
}

/// `T(x)` at one sample. Always exactly symmetric.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    t: Mat<f64>,
}

impl ScoreMatrix {
    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.t.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.t
    }
}

/// `T(x) = v vᵀ − Σ⁻¹` with `v = Σ⁻¹ x`.
pub fn second_order_score(x: &[f64], cov: &CovarianceModel) -> Result<ScoreMatrix> {
    let p = cov.dim();
    if x.len() != p {
        return Err(Error::dim("score input", p, x.len()));
    }
    let omega = cov.sigma_inv();
    let v: Vec<f64> = (0..p)
        .map(|i| (0..p).map(|k| omega[(i, k)] * x[k]).sum())
        .collect();
    let mut t = Mat::zeros(p, p);
    for j in 0..p {
        for i in j..p {
            let val = v[i] * v[j] - 0.5 * (omega[(i, j)] + omega[(j, i)]);
            t[(i, j)] = val;
            t[(j, i)] = val;
        }
    }
    Ok(ScoreMatrix { t })
}
