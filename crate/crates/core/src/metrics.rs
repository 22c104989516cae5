//! Selection quality (TPR/FPR), held-out prediction error and aggregation
//! over replications.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{sample_given, simulate, SimSpec};
use crate::error::{Error, Result};
use crate::parallel::map_collect;
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::refit::{evaluate_mse, train, RefitConfig};
use crate::rng::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub selected_count: usize,
    pub truth_count: usize,
}

/// `TPR = |Ŝ ∩ S₀| / |S₀|`, `FPR = |Ŝ \ S₀| / (p − |S₀|)`.
pub fn selection_metrics(selected: &[usize], truth: &[usize], p: usize) -> Result<SelectionMetrics> {
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    let selected: BTreeSet<usize> = selected.iter().copied().collect();
    if truth.is_empty() {
        return Err(Error::Config("true support is empty".into()));
    }
    if truth.len() >= p {
        return Err(Error::Config(format!(
            "support covers all {p} features; FPR is undefined"
        )));
    }
    if let Some(&bad) = truth.iter().chain(&selected).find(|&&j| j >= p) {
        return Err(Error::dim("feature index bound", p, bad));
    }
    let hits = selected.intersection(&truth).count();
    let false_pos = selected.len() - hits;
    Ok(SelectionMetrics {
        tpr: hits as f64 / truth.len() as f64,
        fpr: false_pos as f64 / (p - truth.len()) as f64,
        selected_count: selected.len(),
        truth_count: truth.len(),
    })
}

/// One seed of a replication study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub seed: u64,
    pub metrics: Option<SelectionMetrics>,
    pub selected: Vec<usize>,
    pub support: Vec<usize>,
    pub mse: Option<f64>,
    pub error: Option<String>,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub spec: SimSpec,
    pub method: String,
    /// Sorted by seed.
    pub records: Vec<ReplicationRecord>,
    pub tpr_mean: f64,
    pub tpr_sd: f64,
    pub fpr_mean: f64,
    pub fpr_sd: f64,
    pub mse_mean: Option<f64>,
    pub mse_sd: Option<f64>,
    pub failures: usize,
    /// Mean wall time per replication.
    pub runtime_ms: f64,
    /// FNV-1a hash of the configuration and seed list.
    pub fingerprint: String,
}

/// Mean and population standard deviation (divisor `k`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    (mean, var.sqrt())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Held-out evaluation settings for replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldOut {
    pub n_test: usize,
    pub refit: RefitConfig,
}

fn one_replication(
    spec: &SimSpec,
    cfg: &PipelineConfig,
    holdout: Option<&HoldOut>,
    seed: u64,
) -> ReplicationRecord {
    let start = Instant::now();
    let mut record = ReplicationRecord {
        seed,
        metrics: None,
        selected: Vec::new(),
        support: Vec::new(),
        mse: None,
        error: None,
        runtime_ms: 0.0,
    };
    let mut run = || -> Result<()> {
        let spec = SimSpec { seed, ..spec.clone() };
        let (d, truth) = simulate(&spec)?;
        record.support = truth.support.clone();
        let source = cfg.covariance.source_for(&spec)?;
        let out = run_pipeline(&d, &source, cfg)?;
        record.metrics = Some(selection_metrics(&out.result.selected, &truth.support, spec.p)?);
        record.selected = out.result.selected.clone();
        if let Some(h) = holdout {
            if !out.result.selected.is_empty() {
                let test_spec = SimSpec {
                    n: h.n_test,
                    ..spec.clone()
                };
                let test = sample_given(&test_spec, &truth, child_seed(seed, 1))?;
                let refit = RefitConfig {
                    seed: child_seed(seed, 2),
                    ..h.refit.clone()
                };
                let model = train(&d, &out.result.selected, &refit)?;
                record.mse = Some(evaluate_mse(&model, &test)?);
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        record.error = Some(e.to_string());
        record.metrics = None;
        record.mse = None;
    }
    record.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    record
}

/// Runs the pipeline once per seed (in parallel) and aggregates. A failing
/// seed is recorded and excluded from the statistics.
pub fn run_replications(
    spec: &SimSpec,
    cfg: &PipelineConfig,
    seeds: &[u64],
    holdout: Option<&HoldOut>,
) -> Result<ReplicationSummary> {
    spec.validate()?;
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("no replication seeds".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("replication seeds must be distinct".into()));
    }
    if let Some(h) = holdout {
        if h.n_test == 0 {
            return Err(Error::Config("n_test must be >= 1".into()));
        }
        h.refit.validate()?;
    }
    let records = map_collect(&sorted, |_, &seed| one_replication(spec, cfg, holdout, seed));
    Ok(summarize(spec, cfg, holdout, records))
}

fn summarize(
    spec: &SimSpec,
    cfg: &PipelineConfig,
    holdout: Option<&HoldOut>,
    records: Vec<ReplicationRecord>,
) -> ReplicationSummary {
    let ok: Vec<&SelectionMetrics> = records.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let (tpr_mean, tpr_sd) = mean_sd(&ok.iter().map(|m| m.tpr).collect::<Vec<_>>());
    let (fpr_mean, fpr_sd) = mean_sd(&ok.iter().map(|m| m.fpr).collect::<Vec<_>>());
    let mses: Vec<f64> = records.iter().filter_map(|r| r.mse).collect();
    let (mse_mean, mse_sd) = if mses.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_sd(&mses);
        (Some(m), Some(s))
    };
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    let runtime_ms = records.iter().map(|r| r.runtime_ms).sum::<f64>() / records.len() as f64;

    let base = SimSpec { seed: 0, ..spec.clone() };
    let seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    let key = serde_json::to_vec(&(&base, cfg, holdout, &seeds)).unwrap_or_default();
    ReplicationSummary {
        spec: base,
        method: cfg.method.label().to_string(),
        records,
        tpr_mean,
        tpr_sd,
        fpr_mean,
        fpr_sd,
        mse_mean,
        mse_sd,
        failures,
        runtime_ms,
        fingerprint: format!("{:016x}", fnv1a(&key)),
    }
}

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "case", "n", "p", "rho", "design", "method", "tpr_mean", "tpr_sd", "fpr_mean", "fpr_sd",
    "mse_mean", "mse_sd", "runtime_ms", "failures", "fingerprint",
];

/// One row per summary, in the column order of [`SUMMARY_COLUMNS`].
/// Missing MSE statistics are written as empty fields.
pub fn write_summary_csv<W: Write>(summaries: &[ReplicationSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in summaries {
        w.write_record([
            s.spec.case.number().to_string(),
            s.spec.n.to_string(),
            s.spec.p.to_string(),
            s.spec.rho.to_string(),
            s.spec.design.to_string(),
            s.method.clone(),
            s.tpr_mean.to_string(),
            s.tpr_sd.to_string(),
            s.fpr_mean.to_string(),
            s.fpr_sd.to_string(),
            opt(s.mse_mean),
            opt(s.mse_sd),
            format!("{:.3}", s.runtime_ms),
            s.failures.to_string(),
            s.fingerprint.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
