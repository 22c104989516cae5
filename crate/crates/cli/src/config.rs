//! The TOML run configuration. Every field is optional so that command-line
//! flags can override any of them; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use steinselect::tuning::K1Rule;
use steinselect::{RefitConfig, WeightNorm};

use crate::CliError;

/// A setting that is either `auto` or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: FromStr> FromStr for Auto<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(Auto::Auto)
        } else {
            s.parse()
                .map(Auto::Value)
                .map_err(|e| format!("expected a value or \"auto\": {e}"))
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Auto<T> {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Value(T),
            Word(String),
        }
        match Raw::deserialize(de)? {
            Raw::Value(v) => Ok(Auto::Value(v)),
            Raw::Word(w) if w.eq_ignore_ascii_case("auto") => Ok(Auto::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a value or \"auto\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Name of the response column in input CSVs.
    pub response: Option<String>,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub screening: ScreeningSection,
    pub refit: Option<RefitConfig>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub k1: Option<Auto<usize>>,
    pub k1_rule: Option<K1Rule>,
    pub k_max: Option<usize>,
    pub gamma_rel: Option<f64>,
    pub s: Option<Auto<usize>>,
    pub s_grid: Option<Vec<usize>>,
    pub bic_lambda: Option<f64>,
    pub kappa: Option<f64>,
    /// `sample`, `ledoit-wolf`, `auto`, `known` or `known:<path>`.
    pub cov: Option<String>,
    pub center_response: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningSection {
    pub zeta: Option<Auto<f64>>,
    pub p0: Option<Auto<usize>>,
    pub max_rounds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub case: Option<u8>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub s: Option<usize>,
    pub k1: Option<usize>,
    pub rho: Option<f64>,
    pub design: Option<String>,
    pub noise_sd: Option<f64>,
    pub weight_norm: Option<WeightNorm>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub cases: Option<Vec<u8>>,
    pub n: Option<Vec<usize>>,
    pub p: Option<Vec<usize>>,
    pub rho: Option<Vec<f64>>,
    pub design: Option<Vec<String>>,
    pub methods: Option<Vec<String>>,
    pub replications: Option<usize>,
    /// Held-out sample size for refit MSE; omitted or 0 skips the refit.
    pub holdout_n: Option<usize>,
    pub s: Option<usize>,
    pub k1: Option<usize>,
    pub noise_sd: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::Validation(format!("invalid config {}: {}", path.display(), e.message()))
        })
    }
}

/// Parsed `--cov` value.
#[derive(Debug, Clone, PartialEq)]
pub enum CovSetting {
    Sample,
    LedoitWolf,
    Auto,
    /// The generator's covariance (simulations only).
    Known,
    KnownFile(PathBuf),
}

impl FromStr for CovSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sample" => Ok(CovSetting::Sample),
            "ledoit-wolf" | "lw" => Ok(CovSetting::LedoitWolf),
            "auto" => Ok(CovSetting::Auto),
            "known" => Ok(CovSetting::Known),
            _ => match s.strip_prefix("known:") {
                Some(path) if !path.is_empty() => Ok(CovSetting::KnownFile(PathBuf::from(path))),
                _ => Err(format!(
                    "unknown covariance {s:?} (expected sample, ledoit-wolf, auto or known:<path>)"
                )),
            },
        }
    }
}

impl fmt::Display for CovSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovSetting::Sample => write!(f, "sample"),
            CovSetting::LedoitWolf => write!(f, "ledoit-wolf"),
            CovSetting::Auto => write!(f, "auto"),
            CovSetting::Known => write!(f, "known"),
            CovSetting::KnownFile(p) => write!(f, "known:{}", p.display()),
        }
    }
}

/// Parses `1,2,5` or a range `1..10` (inclusive).
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: usize = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        return Ok((a..=b).collect());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|e| format!("bad integer {t:?}: {e}")))
        .collect()
}
