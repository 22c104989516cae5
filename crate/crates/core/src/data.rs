//! Datasets, CSV ingestion and the synthetic generators.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// An `n × p` design with its response.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Mat<f64>,
    y: Vec<f64>,
    feature_ids: Vec<String>,
    centered: bool,
}

impl Dataset {
    pub fn new(x: Mat<f64>, y: Vec<f64>, feature_ids: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Schema(format!(
                "dataset needs n >= 1 and p >= 1, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::dim("response length", x.nrows(), y.len()));
        }
        if feature_ids.len() != x.ncols() {
            return Err(Error::dim("feature ids", x.ncols(), feature_ids.len()));
        }
        let mut seen = HashSet::new();
        for id in &feature_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Schema(format!("duplicate feature id {id:?}")));
            }
        }
        Ok(Self {
            x,
            y,
            feature_ids,
            centered: false,
        })
    }

    /// Builds a dataset with ids `x0, x1, …`.
    pub fn with_default_ids(x: Mat<f64>, y: Vec<f64>) -> Result<Self> {
        let ids = default_ids(x.ncols());
        Self::new(x, y, ids)
    }

    pub fn x(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.feature_ids.iter().position(|f| f == id)
    }

    /// Keeps the listed columns, in the given order.
    pub fn subset_columns(&self, idx: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.p()) {
            return Err(Error::dim("column index", self.p(), bad));
        }
        let x = crate::linalg::select_columns(self.x(), idx);
        let ids = idx.iter().map(|&j| self.feature_ids[j].clone()).collect();
        let mut out = Dataset::new(x, self.y.clone(), ids)?;
        out.centered = self.centered;
        Ok(out)
    }

    pub fn with_response(&self, y: Vec<f64>) -> Result<Dataset> {
        let mut out = Dataset::new(self.x.clone(), y, self.feature_ids.clone())?;
        out.centered = self.centered;
        Ok(out)
    }

    /// Writes the dataset as CSV with the response first.
    pub fn write_csv<W: Write>(&self, out: W, response_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = Vec::with_capacity(self.p() + 1);
        header.push(response_column.to_string());
        header.extend(self.feature_ids.iter().cloned());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.p() + 1);
        for i in 0..self.n() {
            row.clear();
            row.push(self.y[i].to_string());
            for j in 0..self.p() {
                row.push(self.x[(i, j)].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, response_column: &str) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), response_column)
    }
}

pub fn default_ids(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Loads a headered CSV; `response_column` becomes `y`, every other column
/// a feature in file order.
pub fn load_csv(path: impl AsRef<Path>, response_column: &str) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(f), response_column)
}

pub fn read_csv<R: Read>(input: R, response_column: &str) -> Result<Dataset> {
    read_csv_inner(input, response_column, true).map(|(d, _)| d)
}

/// Like [`load_csv`], but a missing response column is allowed: `y` is then
/// all zeros and the flag is `false`.
pub fn load_features_csv(path: impl AsRef<Path>, response_column: &str) -> Result<(Dataset, bool)> {
    let f = std::fs::File::open(path)?;
    read_csv_inner(std::io::BufReader::new(f), response_column, false)
}

fn read_csv_inner<R: Read>(
    input: R,
    response_column: &str,
    require_response: bool,
) -> Result<(Dataset, bool)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate column {h:?}")));
        }
    }
    let response = header.iter().position(|h| h == response_column);
    if response.is_none() && require_response {
        return Err(Error::Schema(format!("response column {response_column:?} not found")));
    }
    let feature_ids: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != response)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_ids.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let p = feature_ids.len();
    let mut y = Vec::new();
    let mut cells: Vec<f64> = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v = parse_cell(field, row, &header[j])?;
            if Some(j) == response {
                y.push(v);
            } else {
                cells.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Schema("no data rows".into()));
    }
    if response.is_none() {
        y = vec![0.0; rows];
    }
    let x = Mat::from_fn(rows, p, |i, j| cells[i * p + j]);
    Ok((Dataset::new(x, y, feature_ids)?, response.is_some()))
}

fn parse_cell(field: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("non-finite value {field:?}"),
        });
    }
    Ok(v)
}

/// Subtracts each column's sample mean. `y` is left alone.
pub fn center_columns(d: &Dataset) -> Dataset {
    let n = d.n();
    let mut x = d.x.clone();
    for j in 0..d.p() {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            x[(i, j)] -= mean;
        }
    }
    Dataset {
        x,
        y: d.y.clone(),
        feature_ids: d.feature_ids.clone(),
        centered: true,
    }
}

/// Reads a headerless numeric CSV into a matrix.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<Mat<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, f)| parse_cell(f, r + 1, &j.to_string()))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    crate::linalg::from_rows(&rows).ok_or_else(|| Error::Schema("ragged matrix rows".into()))
}

pub fn write_matrix_csv<W: Write>(m: MatRef<'_, f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

impl Case {
    pub fn from_number(k: u8) -> Option<Case> {
        Some(match k {
            1 => Case::Case1,
            2 => Case::Case2,
            3 => Case::Case3,
            4 => Case::Case4,
            5 => Case::Case5,
            _ => return None,
        })
    }

    pub fn number(self) -> u8 {
        match self {
            Case::Case1 => 1,
            Case::Case2 => 2,
            Case::Case3 => 3,
            Case::Case4 => 4,
            Case::Case5 => 5,
        }
    }

    /// Cases 1–3 are multi-index models `y = aᵀ f(W1 x) + ε`.
    pub fn is_index_model(self) -> bool {
        matches!(self, Case::Case1 | Case::Case2 | Case::Case3)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

pub fn f1(z: f64) -> f64 {
    z * z
}

pub fn f2(z: f64) -> f64 {
    z.powi(4) + 2.0 * z * z - 10.0 * z.cos()
}

pub fn f3(z: f64) -> f64 {
    z.exp() + z.powi(4) - z * z
}

pub fn f5(z: f64) -> f64 {
    z.powi(4) + z * z - z.cos()
}

/// Which slices of the support block of `W1` get unit `ℓ₂` norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightNorm {
    /// Every row of `W1` (one per index direction).
    #[default]
    Rows,
    /// Every support column, so all relevant features carry equal weight.
    Columns,
}

impl FromStr for WeightNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(WeightNorm::Rows),
            "columns" => Ok(WeightNorm::Columns),
            other => Err(Error::Spec(format!(
                "unknown weight normalization {other:?} (expected rows or columns)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Gaussian,
    /// Student t marginals with the given degrees of freedom, scaled to unit
    /// variance before the AR(1) correlation is applied. Needs `dof > 2`.
    StudentT(f64),
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Gaussian => write!(f, "gaussian"),
            Design::StudentT(dof) => write!(f, "t{dof}"),
        }
    }
}

impl FromStr for Design {
    type Err = Error;

    /// Accepts `gaussian` or `t<dof>` (e.g. `t7`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "gaussian" || s == "normal" {
            return Ok(Design::Gaussian);
        }
        if let Some(rest) = s.strip_prefix('t') {
            if let Ok(dof) = rest.parse::<f64>() {
                return Ok(Design::StudentT(dof));
            }
        }
        Err(Error::Spec(format!("unknown design {s:?} (expected gaussian or t<dof>)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub case: Case,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_five")]
    pub s: usize,
    #[serde(default = "default_five")]
    pub k1: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_design")]
    pub design: Design,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weight_norm: WeightNorm,
}

fn default_five() -> usize {
    5
}

fn default_design() -> Design {
    Design::Gaussian
}

fn default_noise() -> f64 {
    1.0
}

impl SimSpec {
    pub fn new(case: Case, n: usize, p: usize, seed: u64) -> Self {
        Self {
            case,
            n,
            p,
            s: 5,
            k1: 5,
            rho: 0.0,
            design: Design::Gaussian,
            noise_sd: 1.0,
            seed,
            weight_norm: WeightNorm::Rows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.s == 0 {
            return Err(Error::Spec("n, p and s must be positive".into()));
        }
        if self.s > self.p {
            return Err(Error::Spec(format!("s = {} exceeds p = {}", self.s, self.p)));
        }
        if self.case.is_index_model() && (self.k1 == 0 || self.k1 > self.s) {
            return Err(Error::Spec(format!(
                "k1 must be in 1..=s for index models, got k1 = {} with s = {}",
                self.k1, self.s
            )));
        }
        if !self.case.is_index_model() && self.s != 5 {
            return Err(Error::Spec(format!(
                "case {} has a fixed arity of 5 (got s = {})",
                self.case, self.s
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Spec(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Spec(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if let Design::StudentT(dof) = self.design {
            if !(dof > 2.0 && dof.is_finite()) {
                return Err(Error::Spec(format!(
                    "student t design needs dof > 2 for unit variance, got {dof}"
                )));
            }
        }
        Ok(())
    }
}

/// The generating structure behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub case: Case,
    /// Sorted relevant feature indices.
    pub support: Vec<usize>,
    /// `k1 × p` first-layer weights (index cases only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w1: Option<Vec<Vec<f64>>>,
    /// Output weights (index cases only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a: Option<Vec<f64>>,
}

impl GroundTruth {
    /// Noiseless response at `x`.
    pub fn signal(&self, x: &[f64]) -> f64 {
        match self.case {
            Case::Case1 | Case::Case2 | Case::Case3 => {
                let f = match self.case {
                    Case::Case1 => f1,
                    Case::Case2 => f2,
                    _ => f3,
                };
                let w1 = self.w1.as_ref().expect("index case without W1");
                let a = self.a.as_ref().expect("index case without a");
                w1.iter()
                    .zip(a)
                    .map(|(row, &ak)| {
                        let z: f64 = self.support.iter().map(|&j| row[j] * x[j]).sum();
                        ak * f(z)
                    })
                    .sum()
            }
            Case::Case4 => {
                let z: Vec<f64> = self.support.iter().map(|&j| x[j]).collect();
                f1(z[0]) + f2(z[1]) + f3(z[2]) + f2(z[3]) + f5(z[4])
            }
            Case::Case5 => {
                let z: Vec<f64> = self.support.iter().map(|&j| x[j]).collect();
                f1(z[0]) * f2(z[1]) + f3(z[2]) + f1(z[3]) * f5(z[4])
            }
        }
    }
}

/// `Σ_{jk} = ρ^{|j−k|}`.
pub fn ar1_covariance(p: usize, rho: f64) -> Mat<f64> {
    Mat::from_fn(p, p, |j, k| rho.powi(j.abs_diff(k) as i32))
}

/// Draws a dataset and its ground truth. Deterministic in `spec`.
pub fn simulate(spec: &SimSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let p = spec.p;

    let mut rng = stream(spec.seed, Stream::Support);
    let mut support = rand::seq::index::sample(&mut rng, p, spec.s).into_vec();
    support.sort_unstable();

    let (w1, a) = if spec.case.is_index_model() {
        let mut rng = stream(spec.seed, Stream::Weights);
        let mut w1 = vec![vec![0.0; p]; spec.k1];
        for row in w1.iter_mut() {
            for &j in &support {
                row[j] = StandardNormal.sample(&mut rng);
            }
        }
        match spec.weight_norm {
            WeightNorm::Rows => {
                for row in w1.iter_mut() {
                    let norm = support.iter().map(|&j| row[j] * row[j]).sum::<f64>().sqrt();
                    for &j in &support {
                        row[j] /= norm;
                    }
                }
            }
            WeightNorm::Columns => {
                for &j in &support {
                    let norm = w1.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
                    for row in w1.iter_mut() {
                        row[j] /= norm;
                    }
                }
            }
        }
        let unif = Uniform::new(0.5, 1.5).expect("valid range");
        let a: Vec<f64> = (0..spec.k1).map(|_| unif.sample(&mut rng)).collect();
        (Some(w1), Some(a))
    } else {
        (None, None)
    };
    let truth = GroundTruth {
        case: spec.case,
        support,
        w1,
        a,
    };

    let d = sample_given(spec, &truth, spec.seed)?;
    Ok((d, truth))
}

/// Fresh rows from the same generating model: design and noise come from
/// `seed`, the structure from `truth`. Used for held-out test sets.
pub fn sample_given(spec: &SimSpec, truth: &GroundTruth, seed: u64) -> Result<Dataset> {
    let (n, p) = (spec.n, spec.p);
    let x = draw_design(n, p, spec.rho, spec.design, seed);

    let mut noise_rng = stream(seed, Stream::Noise);
    let mut row = vec![0.0; p];
    let y: Vec<f64> = (0..n)
        .map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            let eps: f64 = StandardNormal.sample(&mut noise_rng);
            truth.signal(&row) + spec.noise_sd * eps
        })
        .collect();

    Dataset::with_default_ids(x, y)
}

/// Rows of unit-variance i.i.d. coordinates colored by the Cholesky factor of
/// the AR(1) covariance, which is the recursion
/// `x_j = ρ x_{j−1} + √(1−ρ²) z_j`.
fn draw_design(n: usize, p: usize, rho: f64, design: Design, seed: u64) -> Mat<f64> {
    let mut rng = stream(seed, Stream::Design);
    let innov = (1.0 - rho * rho).sqrt();
    let t = match design {
        Design::Gaussian => None,
        Design::StudentT(dof) => Some((
            StudentT::new(dof).expect("dof validated"),
            ((dof - 2.0) / dof).sqrt(),
        )),
    };
    let mut x = Mat::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = match &t {
                None => StandardNormal.sample(&mut rng),
                Some((dist, scale)) => scale * dist.sample(&mut rng),
            };
            let v = if j == 0 { z } else { rho * prev + innov * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(s: &str) -> Result<Dataset> {
        read_csv(s.as_bytes(), "y")
    }

    #[test]
    fn load_basic() {
        let d = csv_of("y,a,b\n1,0.5,2\n2,1.5,3\n3,2.5,4\n").unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.y(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.feature_ids(), &["a".to_string(), "b".to_string()]);
        assert_eq!(d.x()[(2, 1)], 4.0);
        assert!(!d.centered());
    }

    #[test]
    fn load_nan_reports_location() {
        let err = csv_of("y,a,b\n1,0.5,2\n2,NaN,3\n").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(csv_of("y,a\n1,abc\n"), Err(Error::Parse { .. })));
        assert!(matches!(csv_of("y,a\n1,inf\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn load_schema_errors() {
        assert!(matches!(read_csv("a,b\n1,2\n".as_bytes(), "y"), Err(Error::Schema(_))));
        assert!(matches!(csv_of("y,a,a\n1,2,3\n"), Err(Error::Schema(_))));
        assert!(matches!(csv_of("y\n1\n"), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut spec = SimSpec::new(Case::Case3, 20, 4, 9);
        spec.s = 3;
        spec.k1 = 2;
        let (d, _) = simulate(&spec).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, "y").unwrap();
        let back = read_csv(buf.as_slice(), "y").unwrap();
        assert_eq!(back.y(), d.y());
        for i in 0..d.n() {
            for j in 0..d.p() {
                assert_eq!(back.x()[(i, j)].to_bits(), d.x()[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn features_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n").unwrap();
        let (d, has_y) = load_features_csv(&path, "y").unwrap();
        assert!(!has_y);
        assert_eq!(d.feature_ids(), ["a", "b"]);
        assert_eq!(d.y(), [0.0, 0.0]);
        std::fs::write(&path, "a,y\n1,2\n").unwrap();
        let (d, has_y) = load_features_csv(&path, "y").unwrap();
        assert!(has_y);
        assert_eq!((d.p(), d.y()), (1, &[2.0][..]));
        assert!(load_csv(&path, "z").is_err());
    }

    #[test]
    fn centering() {
        let x = Mat::from_fn(3, 1, |i, _| (i + 1) as f64);
        let d = Dataset::with_default_ids(x, vec![0.0; 3]).unwrap();
        let c = center_columns(&d);
        assert!(c.centered());
        assert_eq!(
            (0..3).map(|i| c.x()[(i, 0)]).collect::<Vec<_>>(),
            vec![-1.0, 0.0, 1.0]
        );
        let twice = center_columns(&c);
        assert_eq!(twice.x()[(0, 0)], -1.0);

        let x = Mat::from_fn(2, 1, |i, _| if i == 0 { -1.0 } else { 1.0 });
        let c = center_columns(&Dataset::with_default_ids(x, vec![0.0; 2]).unwrap());
        assert_eq!((c.x()[(0, 0)], c.x()[(1, 0)]), (-1.0, 1.0));

        let x = Mat::from_fn(1, 1, |_, _| 5.0);
        let c = center_columns(&Dataset::with_default_ids(x, vec![2.0]).unwrap());
        assert_eq!(c.x()[(0, 0)], 0.0);
        assert_eq!(c.y(), &[2.0]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let x = Mat::zeros(2, 2);
        let err = Dataset::new(x, vec![0.0; 2], vec!["a".into(), "a".into()]);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn simulate_is_deterministic() {
        let mut spec = SimSpec::new(Case::Case1, 4, 6, 7);
        spec.s = 2;
        spec.k1 = 2;
        let (d1, t1) = simulate(&spec).unwrap();
        let (d2, t2) = simulate(&spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(d1.y(), d2.y());
        assert_eq!(d1.x(), d2.x());
    }

    #[test]
    fn hand_evaluated_case1_signal() {
        let mut w = vec![0.0; 6];
        w[0] = 1.0;
        let truth = GroundTruth {
            case: Case::Case1,
            support: vec![0],
            w1: Some(vec![w]),
            a: Some(vec![1.0]),
        };
        assert_eq!(truth.signal(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 4.0);
    }

    #[test]
    fn w1_column_support_and_unit_rows() {
        for case in [Case::Case1, Case::Case2, Case::Case3] {
            let mut spec = SimSpec::new(case, 10, 30, 3);
            spec.s = 6;
            spec.k1 = 4;
            let (_, t) = simulate(&spec).unwrap();
            let w1 = t.w1.unwrap();
            assert_eq!(w1.len(), 4);
            let nonzero: Vec<usize> = (0..30)
                .filter(|&j| w1.iter().any(|r| r[j] != 0.0))
                .collect();
            assert_eq!(nonzero, t.support);
            for row in &w1 {
                let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
            assert!(t.a.unwrap().iter().all(|&a| (0.5..1.5).contains(&a)));
        }
    }

    #[test]
    fn w1_unit_columns() {
        let mut spec = SimSpec::new(Case::Case2, 10, 30, 4);
        spec.weight_norm = WeightNorm::Columns;
        let (_, t) = simulate(&spec).unwrap();
        let w1 = t.w1.unwrap();
        for &j in &t.support {
            let norm: f64 = w1.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert_eq!("columns".parse::<WeightNorm>().unwrap(), WeightNorm::Columns);
        assert!("diag".parse::<WeightNorm>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = SimSpec::new(Case::Case4, 10, 10, 0);
        spec.s = 3;
        assert!(matches!(simulate(&spec), Err(Error::Spec(_))));
        let mut spec = SimSpec::new(Case::Case1, 10, 10, 0);
        spec.k1 = 6;
        assert!(spec.validate().is_err());
        spec.k1 = 5;
        spec.rho = 1.0;
        assert!(spec.validate().is_err());
        spec.rho = 0.5;
        spec.design = Design::StudentT(2.0);
        assert!(spec.validate().is_err());
        spec.design = Design::StudentT(7.0);
        spec.validate().unwrap();
        spec.s = 11;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn ar1_covariance_monte_carlo() {
        let mut spec = SimSpec::new(Case::Case1, 5000, 10, 21);
        spec.rho = 0.3;
        let (d, _) = simulate(&spec).unwrap();
        let n = d.n() as f64;
        let x = d.x();
        for j in 0..10 {
            for k in 0..10 {
                let cov = (0..d.n()).map(|i| x[(i, j)] * x[(i, k)]).sum::<f64>() / n;
                let expect = 0.3f64.powi(j.abs_diff(k) as i32);
                assert!((cov - expect).abs() < 0.05, "({j},{k}): {cov} vs {expect}");
            }
        }
    }

    #[test]
    fn design_parsing() {
        assert_eq!("gaussian".parse::<Design>().unwrap(), Design::Gaussian);
        assert_eq!("t7".parse::<Design>().unwrap(), Design::StudentT(7.0));
        assert!("cauchy".parse::<Design>().is_err());
    }
}
