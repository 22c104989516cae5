//! Data-driven choice of the eigenvector count `k1` (eigengap ratio) and of
//! the support size `s` (BIC over refit training error).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::moment::{top_s_indices, SteinMoment};
use crate::parallel::map_collect;
use crate::refit::{train, RefitConfig};

pub const DEFAULT_GAMMA_REL: f64 = 1e-8;
pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_BIC_LAMBDA: f64 = 100.0;

/// How the peak of the eigengap ratio maps to `k1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum K1Rule {
    /// `k1 = argmax r(k) − 1`: the ratio peaks at the first noise index.
    #[default]
    RatioMinusOne,
    /// `k1 = argmax r(k)`.
    Ratio,
}

impl std::str::FromStr for K1Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio-minus-one" => Ok(K1Rule::RatioMinusOne),
            "ratio" => Ok(K1Rule::Ratio),
            other => Err(Error::Config(format!(
                "unknown k1 rule {other:?} (expected ratio-minus-one or ratio)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigengapReport {
    /// `|λ|` in descending order.
    pub abs_eigenvalues: Vec<f64>,
    /// `gaps[j] = |λ_{j+1}| − |λ_{j+2}|` (1-based `g_k`, `k = j + 1`).
    pub gaps: Vec<f64>,
    /// `ratios[j] = r(j + 2)`, covering `k = 2..=k_max`.
    pub ratios: Vec<f64>,
    pub k1_hat: usize,
    pub k_max: usize,
    pub gamma_reg: f64,
    pub rule: K1Rule,
}

impl EigengapReport {
    /// Builds the report from `|λ|` sorted in descending order.
    pub fn from_abs_eigenvalues(
        abs: &[f64],
        k_max: usize,
        gamma_rel: f64,
        rule: K1Rule,
    ) -> Result<Self> {
        let p = abs.len();
        if k_max < 2 {
            return Err(Error::Config(format!("k_max must be >= 2, got {k_max}")));
        }
        if k_max + 2 > p {
            return Err(Error::Config(format!(
                "k_max = {k_max} needs at least {} eigenvalues, have {p}",
                k_max + 2
            )));
        }
        if !(gamma_rel > 0.0 && gamma_rel.is_finite()) {
            return Err(Error::Config(format!("gamma_rel must be > 0, got {gamma_rel}")));
        }
        let gaps: Vec<f64> = abs.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
        let gamma_reg = gamma_rel * abs[0].max(1.0);
        // r(k) = g_{k−1} / (g_k + γ); with 0-based gaps that is gaps[k−2] / (gaps[k−1] + γ).
        let ratios: Vec<f64> = (2..=k_max)
            .map(|k| gaps[k - 2] / (gaps[k - 1] + gamma_reg))
            .collect();
        let mut best = 0;
        for (i, r) in ratios.iter().enumerate() {
            if *r > ratios[best] {
                best = i;
            }
        }
        let k_star = best + 2;
        let k1_hat = match rule {
            K1Rule::RatioMinusOne => k_star - 1,
            K1Rule::Ratio => k_star,
        };
        Ok(Self {
            abs_eigenvalues: abs.to_vec(),
            gaps,
            ratios,
            k1_hat,
            k_max,
            gamma_reg,
            rule,
        })
    }

    /// `(k, r(k))` rows for plotting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "ratio"])?;
        for (i, r) in self.ratios.iter().enumerate() {
            w.write_record([(i + 2).to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Eigengap-ratio estimate of `k1` from the spectrum of `m`.
pub fn estimate_k1(
    m: &SteinMoment,
    k_max: usize,
    gamma_rel: f64,
    rule: K1Rule,
) -> Result<EigengapReport> {
    EigengapReport::from_abs_eigenvalues(&m.abs_eigenvalues(), k_max, gamma_rel, rule)
}

/// `max{j : |λ_j| − |λ_{j+1}| > τ}` over a descending `|λ|` list.
pub fn k1_threshold_from_abs(abs: &[f64], tau: f64) -> Result<usize> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    abs.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] - w[1] > tau)
        .map(|(j, _)| j + 1)
        .last()
        .ok_or(Error::NoGap { tau })
}

pub fn estimate_k1_threshold(m: &SteinMoment, tau: f64) -> Result<usize> {
    k1_threshold_from_abs(&m.abs_eigenvalues(), tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicCandidate {
    pub s: usize,
    pub train_mse: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicReport {
    pub n: usize,
    pub candidates: Vec<BicCandidate>,
    pub s_hat: usize,
    /// Penalty per selected feature; the BIC penalty is `lambda·s·ln(n)`.
    pub lambda: f64,
    pub lambda_rule: String,
}

impl BicReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "bic"])?;
        for c in &self.candidates {
            w.write_record([c.s.to_string(), c.bic.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n·ln(mse) + lambda·s·ln(n)`.
pub fn bic_value(n: usize, mse: f64, s: usize, lambda: f64) -> f64 {
    let n = n as f64;
    n * mse.ln() + lambda * s as f64 * n.ln()
}

/// BIC over a precomputed `(s, training MSE)` table. Ties go to the
/// smaller `s`.
pub fn bic_from_table(n: usize, table: &[(usize, f64)], lambda: f64) -> Result<BicReport> {
    if table.is_empty() {
        return Err(Error::Config("s grid is empty".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("BIC lambda must be >= 0, got {lambda}")));
    }
    let mut candidates: Vec<BicCandidate> = table
        .iter()
        .map(|&(s, mse)| BicCandidate {
            s,
            train_mse: mse,
            bic: bic_value(n, mse, s, lambda),
        })
        .collect();
    candidates.sort_by_key(|c| c.s);
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if c.bic < best.bic {
            best = c;
        }
    }
    Ok(BicReport {
        n,
        s_hat: best.s,
        candidates,
        lambda,
        lambda_rule: format!("lambda_s = {lambda}*s"),
    })
}

/// Trains one refit per grid point on the top-`s` features of `ranking`
/// and picks the size minimizing BIC. Grid points run in parallel; every
/// run uses `refit_cfg.seed`.
pub fn estimate_s_bic(
    d: &Dataset,
    ranking: &[f64],
    s_grid: &[usize],
    refit_cfg: &RefitConfig,
    lambda: f64,
) -> Result<BicReport> {
    if ranking.len() != d.p() {
        return Err(Error::dim("ranking length", d.p(), ranking.len()));
    }
    if s_grid.is_empty() {
        return Err(Error::Config("s grid is empty".into()));
    }
    if let Some(&bad) = s_grid.iter().find(|&&s| s == 0 || s > d.p()) {
        return Err(Error::Config(format!("grid value s = {bad} outside 1..={}", d.p())));
    }
    refit_cfg.validate()?;
    let mut grid = s_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let fits = map_collect(&grid, |_, &s| {
        let features = top_s_indices(ranking, s);
        train(d, &features, refit_cfg)
            .map(|m| (s, m.final_mse))
            .map_err(|e| Error::Refit {
                s,
                source: Box::new(e),
            })
    });
    let table = fits.into_iter().collect::<Result<Vec<_>>>()?;
    bic_from_table(d.n(), &table, lambda)
}
