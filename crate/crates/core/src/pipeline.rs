//! End-to-end selection: center, estimate the covariance, optionally
//! screen, build the moment, resolve `k1` and the selection rule, select.

use serde::{Deserialize, Serialize};

use crate::data::{ar1_covariance, center_columns, Dataset, SimSpec};
use crate::error::{Error, Result};
use crate::moment::{column_norms, select, stein_moment, top_k_rows, SelectionResult, SelectionRule};
use crate::refit::RefitConfig;
use crate::score::{CovarianceModel, CovarianceSource, Estimator};
use crate::screening::{screen, ScreeningConfig, ScreeningTrace};
use crate::tuning::{
    estimate_k1, estimate_s_bic, BicReport, EigengapReport, K1Rule, DEFAULT_BIC_LAMBDA,
    DEFAULT_GAMMA_REL, DEFAULT_K_MAX,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceChoice {
    /// The generator's `Σ` (simulations only).
    Known,
    Sample,
    LedoitWolf,
    /// Ledoit–Wolf when `p > n/2`, otherwise the sample covariance.
    #[default]
    Auto,
}

impl CovarianceChoice {
    /// The covariance source for a simulated dataset.
    pub fn source_for(self, spec: &SimSpec) -> Result<CovarianceSource> {
        Ok(match self {
            CovarianceChoice::Known => {
                CovarianceSource::Known(CovarianceModel::known(ar1_covariance(spec.p, spec.rho))?)
            }
            other => CovarianceSource::Estimated(other.estimator().expect("estimated")),
        })
    }

    pub fn estimator(self) -> Option<Estimator> {
        match self {
            CovarianceChoice::Known => None,
            CovarianceChoice::Sample => Some(Estimator::Sample),
            CovarianceChoice::LedoitWolf => Some(Estimator::LedoitWolf),
            CovarianceChoice::Auto => Some(Estimator::Auto),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum K1Choice {
    Fixed(usize),
    Auto {
        k_max: usize,
        gamma_rel: f64,
        rule: K1Rule,
    },
}

impl K1Choice {
    pub fn auto() -> Self {
        K1Choice::Auto {
            k_max: DEFAULT_K_MAX,
            gamma_rel: DEFAULT_GAMMA_REL,
            rule: K1Rule::RatioMinusOne,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityChoice {
    TopS(usize),
    Threshold(f64),
    Bic { grid: Vec<usize>, lambda: f64 },
}

impl SparsityChoice {
    pub fn bic(grid: Vec<usize>) -> Self {
        SparsityChoice::Bic {
            grid,
            lambda: DEFAULT_BIC_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plain,
    Screened(ScreeningConfig),
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Plain => "plain",
            Method::Screened(_) => "screened",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub covariance: CovarianceChoice,
    pub k1: K1Choice,
    pub sparsity: SparsityChoice,
    pub method: Method,
    /// Used for BIC and, in replications, for held-out prediction error.
    pub refit: RefitConfig,
    /// Subtract `ȳ` before forming the moment. `E[T(x)] = 0`, so the target
    /// is unchanged, but this removes the `ȳ·(Σ̂⁻¹SΣ̂⁻¹ − Σ̂⁻¹)` term that
    /// survives whenever `Σ̂` is not the sample covariance (shrinkage or a
    /// known `Σ`).
    #[serde(default)]
    pub center_response: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceChoice::Auto,
            k1: K1Choice::auto(),
            sparsity: SparsityChoice::TopS(5),
            method: Method::Plain,
            refit: RefitConfig::default(),
            center_response: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        match self.k1 {
            K1Choice::Fixed(0) => return Err(Error::Config("k1 must be >= 1".into())),
            K1Choice::Auto { k_max, gamma_rel, .. } => {
                if k_max < 2 {
                    return Err(Error::Config(format!("k_max must be >= 2, got {k_max}")));
                }
                if !(gamma_rel > 0.0) {
                    return Err(Error::Config(format!("gamma_rel must be > 0, got {gamma_rel}")));
                }
            }
            K1Choice::Fixed(_) => {}
        }
        match &self.sparsity {
            SparsityChoice::TopS(0) => return Err(Error::Config("s must be >= 1".into())),
            SparsityChoice::Threshold(k) if !(*k > 0.0) => {
                return Err(Error::Config(format!("kappa must be > 0, got {k}")))
            }
            SparsityChoice::Bic { grid, lambda } => {
                if grid.is_empty() || grid.contains(&0) {
                    return Err(Error::Config("s grid must be nonempty with values >= 1".into()));
                }
                if !(*lambda >= 0.0) {
                    return Err(Error::Config(format!("BIC lambda must be >= 0, got {lambda}")));
                }
                self.refit.validate()?;
            }
            _ => {}
        }
        if let Method::Screened(cfg) = &self.method {
            cfg.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub result: SelectionResult,
    pub trace: Option<ScreeningTrace>,
    pub eigengap: Option<EigengapReport>,
    pub bic: Option<BicReport>,
}

/// Runs the selection pipeline on `d`. `source` supplies the covariance
/// of whatever column subset ends up being scored.
pub fn run_pipeline(
    d: &Dataset,
    source: &CovarianceSource,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    if let CovarianceSource::Known(m) = source {
        if m.dim() != d.p() {
            return Err(Error::dim("known covariance", d.p(), m.dim()));
        }
    }
    let mut centered = if d.centered() {
        d.clone()
    } else {
        center_columns(d)
    };
    if cfg.center_response {
        let ybar = d.y().iter().sum::<f64>() / d.n() as f64;
        centered = centered.with_response(d.y().iter().map(|v| v - ybar).collect())?;
    }

    let (indices, trace) = match &cfg.method {
        Method::Plain => ((0..d.p()).collect::<Vec<_>>(), None),
        Method::Screened(sc) => {
            let (idx, trace) = screen(&centered, sc, source)?;
            (idx, Some(trace))
        }
    };
    let sub = centered.subset_columns(&indices)?;
    let cov = source.for_subset(&sub, &indices)?;
    let moment = stein_moment(&sub, &cov)?;

    let (k1, eigengap) = match cfg.k1 {
        K1Choice::Fixed(k) => (k, None),
        K1Choice::Auto {
            k_max,
            gamma_rel,
            rule,
        } => {
            let k_max = k_max.min(moment.dim().saturating_sub(2));
            let report = estimate_k1(&moment, k_max, gamma_rel, rule)?;
            (report.k1_hat, Some(report))
        }
    };
    if let (Method::Screened(_), K1Choice::Fixed(k)) = (&cfg.method, cfg.k1) {
        if k > indices.len() {
            return Err(Error::Config(format!(
                "k1 = {k} exceeds the {} screened features",
                indices.len()
            )));
        }
    }

    let (rule, bic) = match &cfg.sparsity {
        SparsityChoice::TopS(s) => (SelectionRule::TopS { s: *s }, None),
        SparsityChoice::Threshold(kappa) => (SelectionRule::Threshold { kappa: *kappa }, None),
        SparsityChoice::Bic { grid, lambda } => {
            let local = column_norms(top_k_rows(&moment, k1)?.as_ref());
            let mut ranking = vec![0.0; d.p()];
            for (l, &j) in indices.iter().enumerate() {
                ranking[j] = local[l];
            }
            let grid: Vec<usize> = grid.iter().copied().filter(|&s| s <= indices.len()).collect();
            let report = estimate_s_bic(d, &ranking, &grid, &cfg.refit, *lambda)?;
            (SelectionRule::TopS { s: report.s_hat }, Some(report))
        }
    };
    if let SelectionRule::TopS { s } = rule {
        if s > indices.len() {
            return Err(Error::Config(format!(
                "s = {s} exceeds the {} candidate features",
                indices.len()
            )));
        }
    }

    let result = select(&moment, k1, rule)?.lift(&indices, d.p());
    Ok(PipelineOutcome {
        result,
        trace,
        eigengap,
        bic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate, Case};

    fn fixed(k1: usize, s: usize) -> PipelineConfig {
        PipelineConfig {
            covariance: CovarianceChoice::Sample,
            k1: K1Choice::Fixed(k1),
            sparsity: SparsityChoice::TopS(s),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(fixed(0, 5).validate().is_err());
        assert!(fixed(5, 0).validate().is_err());
        let mut c = fixed(5, 5);
        c.sparsity = SparsityChoice::Threshold(0.0);
        assert!(c.validate().is_err());
        c.sparsity = SparsityChoice::Bic {
            grid: vec![],
            lambda: 100.0,
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn case1_recovers_most_of_the_support() {
        // At n = 2000 a support column of a random W1 can carry very little
        // weight, so exact recovery is seed dependent.
        let spec = SimSpec::new(Case::Case1, 2000, 200, 11);
        let cfg = fixed(5, 5);
        let src = cfg.covariance.source_for(&spec).unwrap();
        let (d, truth) = simulate(&spec).unwrap();
        let out = run_pipeline(&d, &src, &cfg).unwrap();
        let hits = out.result.selected.iter().filter(|j| truth.support.contains(j)).count();
        assert!(hits >= 4, "{:?} vs {:?}", out.result.selected, truth.support);
    }

    #[test]
    fn screened_equals_plain_when_p_is_small() {
        let spec = SimSpec::new(Case::Case1, 500, 20, 3);
        let (d, _) = simulate(&spec).unwrap();
        let plain = fixed(5, 5);
        let screened = PipelineConfig {
            method: Method::Screened(ScreeningConfig::fixed(0.5, 20)),
            ..plain.clone()
        };
        let src = plain.covariance.source_for(&spec).unwrap();
        let a = run_pipeline(&d, &src, &plain).unwrap();
        let b = run_pipeline(&d, &src, &screened).unwrap();
        assert_eq!(a.result.selected, b.result.selected);
        assert_eq!(a.result.column_scores, b.result.column_scores);
        assert!(b.trace.unwrap().rounds.is_empty());
    }

    #[test]
    fn response_centering_is_neutral_for_the_sample_covariance() {
        let spec = SimSpec::new(Case::Case1, 400, 12, 5);
        let (d, _) = simulate(&spec).unwrap();
        let raw = fixed(3, 4);
        let centered = PipelineConfig {
            center_response: true,
            ..raw.clone()
        };
        let src = raw.covariance.source_for(&spec).unwrap();
        let a = run_pipeline(&d, &src, &raw).unwrap();
        let b = run_pipeline(&d, &src, &centered).unwrap();
        assert_eq!(a.result.selected, b.result.selected);
        for (u, v) in a.result.column_scores.iter().zip(&b.result.column_scores) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn known_covariance_dimension_checked() {
        let spec = SimSpec::new(Case::Case1, 100, 10, 3);
        let (d, _) = simulate(&spec).unwrap();
        let src = CovarianceSource::Known(CovarianceModel::known(ar1_covariance(9, 0.0)).unwrap());
        assert!(matches!(
            run_pipeline(&d, &src, &fixed(2, 2)),
            Err(Error::Dimension { .. })
        ));
    }
}
