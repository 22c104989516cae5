//! Iterative screening on `|Â_kk|` followed by eigen-selection, for the
//! regime where `p` is too large for a full moment eigendecomposition.
//!
//! Each round keeps the `⌊ζ·|I|⌋` coordinates of the current set `I` with
//! the largest diagonal magnitude of the moment matrix recomputed on `I`
//! (with the covariance re-derived for `I`), until `|I| ≤ p0`. Selection then
//! runs on the survivors and is reported in the original index space.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::moment::{moment_diagonal, select, stein_moment, SelectionResult, SelectionRule};
use crate::score::CovarianceSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningConfig {
    /// Fraction of coordinates kept per round.
    pub zeta: f64,
    /// Stop once at most this many coordinates remain.
    pub p0: usize,
    /// Derive `zeta` and `p0` from `n` instead (see [`ScreeningConfig::resolve`]).
    pub auto_defaults: bool,
    pub max_rounds: usize,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self::auto()
    }
}

/// `ζ = min(0.9, C_ZETA·n^{−1/3})`.
pub const C_ZETA: f64 = 2.0;
/// `p0 = ⌈C_P0·n^{1/3}⌉`.
pub const C_P0: f64 = 2.0;
pub const ZETA_CAP: f64 = 0.9;

impl ScreeningConfig {
    pub fn auto() -> Self {
        Self {
            zeta: ZETA_CAP,
            p0: 1,
            auto_defaults: true,
            max_rounds: 64,
        }
    }

    pub fn fixed(zeta: f64, p0: usize) -> Self {
        Self {
            zeta,
            p0,
            auto_defaults: false,
            max_rounds: 64,
        }
    }

    /// The `(zeta, p0)` actually used for a sample of size `n`.
    pub fn resolve(&self, n: usize) -> (f64, usize) {
        if self.auto_defaults {
            let cube = (n as f64).cbrt();
            let zeta = (C_ZETA / cube).min(ZETA_CAP);
            let p0 = ((C_P0 * cube).ceil() as usize).max(1);
            (zeta, p0)
        } else {
            (self.zeta, self.p0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be >= 1".into()));
        }
        if self.auto_defaults {
            return Ok(());
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Config(format!("zeta must be in (0, 1), got {}", self.zeta)));
        }
        if self.p0 == 0 {
            return Err(Error::Config("p0 must be >= 1".into()));
        }
        Ok(())
    }
}

/// `⌊ζ·m⌋`, tolerant of representation error in `ζ` (so `0.29·100 = 29`).
pub fn keep_count(zeta: f64, m: usize) -> usize {
    (zeta * m as f64 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRound {
    /// Coordinates entering the round (original indices).
    pub input: Vec<usize>,
    /// `|Â_kk|` for each entry of `input`.
    pub diagonal: Vec<f64>,
    /// Survivors, sorted.
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreeningTrace {
    pub rounds: Vec<ScreeningRound>,
    pub final_indices: Vec<usize>,
}

impl ScreeningTrace {
    /// Size of the surviving set after each round, starting with the input.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.rounds.iter().map(|r| r.input.len()).collect();
        out.push(self.final_indices.len());
        out
    }
}

/// The `keep` entries of `indices` with the largest `|diag|`, ties to the
/// lower original index, returned sorted.
pub fn rank_by_magnitude(diag: &[f64], indices: &[usize], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|&a, &b| {
        diag[b]
            .abs()
            .partial_cmp(&diag[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(indices[a].cmp(&indices[b]))
    });
    let mut kept: Vec<usize> = order.into_iter().take(keep).map(|i| indices[i]).collect();
    kept.sort_unstable();
    kept
}

/// One screening round on the columns `indices` of `d`, with `cov` the
/// covariance of those columns. Returns the kept original indices and the
/// diagonal used to rank them.
pub fn screen_once(
    d: &Dataset,
    indices: &[usize],
    cov: &crate::score::CovarianceModel,
    zeta: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if indices.len() < 2 {
        return Err(Error::Config("screening needs at least 2 coordinates".into()));
    }
    let keep = keep_count(zeta, indices.len());
    if keep == 0 {
        return Err(Error::Config(format!(
            "zeta = {zeta} keeps no coordinate out of {}",
            indices.len()
        )));
    }
    let sub = d.subset_columns(indices)?;
    let diag = moment_diagonal(&sub, cov)?;
    Ok((rank_by_magnitude(&diag, indices, keep), diag))
}

/// Screens until at most `p0` coordinates remain, then selects with `k1`
/// eigenvectors under `rule`. Indices in the result are original.
pub fn screen_and_select(
    d: &Dataset,
    cfg: &ScreeningConfig,
    source: &CovarianceSource,
    k1: usize,
    rule: SelectionRule,
) -> Result<(SelectionResult, ScreeningTrace)> {
    let (indices, trace) = screen(d, cfg, source)?;
    let (_, p0) = cfg.resolve(d.n());
    if k1 > p0 {
        return Err(Error::Config(format!("k1 = {k1} exceeds p0 = {p0}")));
    }
    let result = select_on(d, &indices, source, k1, rule)?;
    Ok((result, trace))
}

/// Runs the screening rounds only.
pub fn screen(
    d: &Dataset,
    cfg: &ScreeningConfig,
    source: &CovarianceSource,
) -> Result<(Vec<usize>, ScreeningTrace)> {
    cfg.validate()?;
    let (zeta, p0) = cfg.resolve(d.n());
    let mut indices: Vec<usize> = (0..d.p()).collect();
    let mut trace = ScreeningTrace::default();
    while indices.len() > p0 {
        if trace.rounds.len() == cfg.max_rounds {
            trace.final_indices = indices.clone();
            return Err(Error::IterationLimit {
                rounds: trace.rounds.len(),
                remaining: indices.len(),
                trace: Box::new(trace),
            });
        }
        let sub = d.subset_columns(&indices)?;
        let cov = source.for_subset(&sub, &indices)?;
        let (kept, diag) = screen_once(d, &indices, &cov, zeta)?;
        trace.rounds.push(ScreeningRound {
            input: std::mem::take(&mut indices),
            diagonal: diag.iter().map(|v| v.abs()).collect(),
            kept: kept.clone(),
        });
        indices = kept;
    }
    trace.final_indices = indices.clone();
    Ok((indices, trace))
}

/// Eigen-selection restricted to the columns `indices`, lifted back to the
/// full index space.
pub fn select_on(
    d: &Dataset,
    indices: &[usize],
    source: &CovarianceSource,
    k1: usize,
    rule: SelectionRule,
) -> Result<SelectionResult> {
    let sub = d.subset_columns(indices)?;
    let cov = source.for_subset(&sub, indices)?;
    let moment = stein_moment(&sub, &cov)?;
    Ok(select(&moment, k1, rule)?.lift(indices, d.p()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{center_columns, simulate, Case, SimSpec};
    use crate::score::{CovarianceModel, Estimator};
    use faer::Mat;

    #[test]
    fn top_two_by_magnitude() {
        let kept = rank_by_magnitude(&[3.0, 5.0, 1.0, 0.5], &[0, 1, 2, 3], 2);
        assert_eq!(kept, vec![0, 1]);
        let kept = rank_by_magnitude(&[-3.0, 5.0, 1.0, 0.5], &[10, 11, 12, 13], 3);
        assert_eq!(kept, vec![10, 11, 12]);
        // Ties go to the lower original index.
        assert_eq!(rank_by_magnitude(&[1.0, -1.0, 1.0], &[7, 3, 5], 1), vec![3]);
    }

    #[test]
    fn single_elimination() {
        let diag = [0.4, 0.9, 0.05, 0.7, 0.3];
        let zeta = 0.8; // ⌊0.8·5⌋ = 4
        assert_eq!(keep_count(zeta, 5), 4);
        assert_eq!(rank_by_magnitude(&diag, &[0, 1, 2, 3, 4], 4), vec![0, 1, 3, 4]);
    }

    #[test]
    fn floor_sequence() {
        let mut m = 1000;
        let mut seq = vec![m];
        while m > 100 {
            m = keep_count(0.5, m);
            seq.push(m);
        }
        assert_eq!(seq, vec![1000, 500, 250, 125, 62]);
        assert_eq!(keep_count(0.29, 100), 29);
    }

    #[test]
    fn auto_defaults_at_n_2000() {
        let (zeta, p0) = ScreeningConfig::auto().resolve(2000);
        assert!((zeta - 2.0 / 2000f64.cbrt()).abs() < 1e-12);
        assert!((zeta - 0.1587).abs() < 1e-3);
        assert_eq!(p0, 26);
        let (zeta, _) = ScreeningConfig::auto().resolve(5);
        assert_eq!(zeta, 0.9);
    }

    #[test]
    fn config_validation() {
        assert!(ScreeningConfig::fixed(1.5, 10).validate().is_err());
        assert!(ScreeningConfig::fixed(0.0, 10).validate().is_err());
        assert!(ScreeningConfig::fixed(0.5, 0).validate().is_err());
        ScreeningConfig::fixed(0.5, 10).validate().unwrap();
    }

    fn known_identity(p: usize) -> CovarianceSource {
        CovarianceSource::Known(CovarianceModel::known(Mat::identity(p, p)).unwrap())
    }

    #[test]
    fn bypass_when_p_within_target() {
        let (d, _) = simulate(&SimSpec::new(Case::Case1, 300, 20, 2)).unwrap();
        let d = center_columns(&d);
        let src = known_identity(20);
        let rule = SelectionRule::TopS { s: 5 };
        let (res, trace) =
            screen_and_select(&d, &ScreeningConfig::fixed(0.5, 20), &src, 5, rule).unwrap();
        assert!(trace.rounds.is_empty());
        assert_eq!(trace.final_indices, (0..20).collect::<Vec<_>>());
        let cov = CovarianceModel::known(Mat::identity(20, 20)).unwrap();
        let plain = select(&stein_moment(&d, &cov).unwrap(), 5, rule).unwrap();
        assert_eq!(res.selected, plain.selected);
        assert_eq!(res.column_scores, plain.column_scores);
    }

    #[test]
    fn trace_invariants_and_iteration_limit() {
        let (d, _) = simulate(&SimSpec::new(Case::Case1, 400, 64, 8)).unwrap();
        let d = center_columns(&d);
        let src = CovarianceSource::Estimated(Estimator::Auto);
        let cfg = ScreeningConfig::fixed(0.5, 8);
        let (res, trace) = screen_and_select(&d, &cfg, &src, 3, SelectionRule::TopS { s: 5 }).unwrap();
        assert_eq!(trace.sizes(), vec![64, 32, 16, 8]);
        for w in trace.rounds.windows(2) {
            assert!(w[1].input.len() < w[0].input.len());
            assert!(w[1].input.iter().all(|j| w[0].kept.contains(j)));
        }
        assert_eq!(trace.rounds.last().unwrap().kept, trace.final_indices);
        assert!(res.selected.iter().all(|j| trace.final_indices.contains(j)));

        let (again, trace2) = screen_and_select(&d, &cfg, &src, 3, SelectionRule::TopS { s: 5 }).unwrap();
        assert_eq!(trace, trace2);
        assert_eq!(again.selected, res.selected);

        let mut tight = cfg;
        tight.max_rounds = 2;
        match screen_and_select(&d, &tight, &src, 3, SelectionRule::TopS { s: 5 }) {
            Err(Error::IterationLimit { rounds, remaining, trace }) => {
                assert_eq!((rounds, remaining), (2, 16));
                assert_eq!(trace.rounds.len(), 2);
            }
            other => panic!("expected iteration limit, got {other:?}"),
        }
    }

    #[test]
    fn known_subset_uses_marginal_covariance() {
        let mut spec = SimSpec::new(Case::Case1, 200, 12, 5);
        spec.rho = 0.5;
        let (d, _) = simulate(&spec).unwrap();
        let full = CovarianceModel::known(crate::data::ar1_covariance(12, 0.5)).unwrap();
        let src = CovarianceSource::Known(full.clone());
        let idx = [2, 5, 6];
        let sub = d.subset_columns(&idx).unwrap();
        let c = src.for_subset(&sub, &idx).unwrap();
        let expect = full.marginal(&idx).unwrap();
        assert_eq!(c.sigma_inv(), expect.sigma_inv());
    }

    #[test]
    fn case2_one_round_keeps_support() {
        let (d, truth) = simulate(&SimSpec::new(Case::Case2, 2000, 2000, 3)).unwrap();
        let d = center_columns(&d);
        let idx: Vec<usize> = (0..d.p()).collect();
        let cov = crate::score::ledoit_wolf_covariance(&d).unwrap();
        let (kept, _) = screen_once(&d, &idx, &cov, 0.1).unwrap();
        assert_eq!(kept.len(), 200);
        assert!(truth.support.iter().all(|j| kept.contains(j)));
    }
}
