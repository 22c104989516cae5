//! Two-step prediction: a small fully-connected ReLU regressor trained on
//! the selected features by mini-batch gradient descent.
//!
//! The network is hand-written with explicit backpropagation. Parameters
//! live in one flat vector (per layer: the `in × out` weight matrix in
//! column-major order, then the bias), which keeps the optimizers and the
//! finite-difference checks trivial.

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum { momentum: f64 },
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub standardize_inputs: bool,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 32]
}
fn default_epochs() -> usize {
    300
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_optimizer() -> Optimizer {
    Optimizer::SgdMomentum { momentum: 0.9 }
}
fn default_true() -> bool {
    true
}

impl Default for RefitConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            optimizer: default_optimizer(),
            seed: 0,
            standardize_inputs: true,
        }
    }
}

impl RefitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::Config("refit needs at least one hidden layer".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if let Optimizer::SgdMomentum { momentum } = self.optimizer {
            if !(0.0..1.0).contains(&momentum) {
                return Err(Error::Config(format!("momentum must be in [0, 1), got {momentum}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayerShape {
    input: usize,
    output: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.input * self.output
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.input * self.output;
        start..start + self.output
    }
}

/// Dense ReLU network with a scalar linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights `U(−a, a)`, `a = √(6/(fan_in + fan_out))`, zero
    /// biases.
    pub fn new(input: usize, hidden: &[usize], seed: u64) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            layers.push(LayerShape {
                input: w[0],
                output: w[1],
                offset,
            });
            offset += w[0] * w[1] + w[1];
        }
        let mut params = vec![0.0; offset];
        let mut rng = stream(seed, Stream::Init);
        for l in &layers {
            let a = (6.0 / (l.input + l.output) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
            for v in &mut params[l.weights()] {
                *v = dist.sample(&mut rng);
            }
        }
        Self { layers, params }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    fn weight(&self, l: &LayerShape) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.params[l.weights()], l.input, l.output)
    }

    /// Pre-activations of every layer for the rows of `x`.
    fn pre_activations(&self, x: MatRef<'_, f64>) -> Vec<Mat<f64>> {
        let mut out: Vec<Mat<f64>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let mut z = match out.last() {
                None => x * self.weight(l),
                Some(prev) => relu(prev.as_ref()) * self.weight(l),
            };
            let b = &self.params[l.bias()];
            for j in 0..l.output {
                for r in 0..z.nrows() {
                    z[(r, j)] += b[j];
                }
            }
            out.push(z);
        }
        out
    }

    pub fn forward(&self, x: MatRef<'_, f64>) -> Vec<f64> {
        let z = self.pre_activations(x);
        let out = z.last().expect("at least one layer");
        (0..out.nrows()).map(|r| out[(r, 0)]).collect()
    }

    /// Mean squared error on `(x, t)` and its gradient with respect to
    /// [`Mlp::parameters`].
    pub fn loss_and_gradient(&self, x: MatRef<'_, f64>, t: &[f64]) -> (f64, Vec<f64>) {
        let b = x.nrows();
        let z = self.pre_activations(x);
        let out = z.last().expect("at least one layer");
        let mut loss = 0.0;
        let mut g = Mat::zeros(b, 1);
        for r in 0..b {
            let e = out[(r, 0)] - t[r];
            loss += e * e;
            g[(r, 0)] = 2.0 * e / b as f64;
        }
        loss /= b as f64;

        let mut grad = vec![0.0; self.params.len()];
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = if li == 0 { x.to_owned() } else { relu(z[li - 1].as_ref()) };
            let dw = input.transpose() * &g;
            let slot = &mut grad[l.weights()];
            for j in 0..l.output {
                for i in 0..l.input {
                    slot[j * l.input + i] = dw[(i, j)];
                }
            }
            let slot = &mut grad[l.bias()];
            for (j, s) in slot.iter_mut().enumerate() {
                *s = (0..b).map(|r| g[(r, j)]).sum();
            }
            if li > 0 {
                let mut prev = &g * self.weight(l).transpose();
                let zp = &z[li - 1];
                for j in 0..prev.ncols() {
                    for r in 0..b {
                        if zp[(r, j)] <= 0.0 {
                            prev[(r, j)] = 0.0;
                        }
                    }
                }
                g = prev;
            }
        }
        (loss, grad)
    }
}

fn relu(z: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)].max(0.0))
}

enum OptimizerState {
    Sgd { momentum: f64, velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl OptimizerState {
    fn new(opt: Optimizer, len: usize) -> Self {
        match opt {
            Optimizer::SgdMomentum { momentum } => OptimizerState::Sgd {
                momentum,
                velocity: vec![0.0; len],
            },
            Optimizer::Adam => OptimizerState::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptimizerState::Sgd { momentum, velocity } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *v = *momentum * *v - lr * g;
                    *p += *v;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let c1 = 1.0 - B1.powi(*t);
                let c2 = 1.0 - B2.powi(*t);
                for i in 0..params.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

/// A trained regressor over a fixed feature subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitModel {
    pub network: Mlp,
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
    pub selected_ids: Vec<String>,
    pub selected_indices: Vec<usize>,
    /// Column count of the training dataset.
    pub source_dim: usize,
    /// Mean mini-batch MSE per epoch, in response units.
    pub loss_curve: Vec<f64>,
    pub initial_mse: f64,
    pub final_mse: f64,
    pub config: RefitConfig,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Fits the network on the columns `selected` of `d`.
pub fn train(d: &Dataset, selected: &[usize], cfg: &RefitConfig) -> Result<RefitModel> {
    cfg.validate()?;
    if selected.is_empty() {
        return Err(Error::Config("refit needs a nonempty feature set".into()));
    }
    let sub = d.subset_columns(selected)?;
    let (n, k) = (sub.n(), sub.p());
    let x = sub.x();

    let (input_mean, input_sd): (Vec<f64>, Vec<f64>) = if cfg.standardize_inputs {
        (0..k).map(|j| mean_sd((0..n).map(move |i| x[(i, j)]))).unzip()
    } else {
        (vec![0.0; k], vec![1.0; k])
    };
    let (target_mean, target_sd) = mean_sd(sub.y().iter().copied());
    let xs = Mat::from_fn(n, k, |i, j| (x[(i, j)] - input_mean[j]) / input_sd[j]);
    let ts: Vec<f64> = sub.y().iter().map(|v| (v - target_mean) / target_sd).collect();
    let to_response = target_sd * target_sd;

    let mut net = Mlp::new(k, &cfg.hidden, cfg.seed);
    let initial_mse = mse_of(&net.forward(xs.as_ref()), &ts) * to_response;

    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = stream(cfg.seed, Stream::Shuffle);
    let mut opt = OptimizerState::new(cfg.optimizer, net.params.len());
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut params = net.params.clone();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = Mat::from_fn(chunk.len(), k, |r, j| xs[(chunk[r], j)]);
            let tb: Vec<f64> = chunk.iter().map(|&i| ts[i]).collect();
            let (loss, grad) = net.loss_and_gradient(xb.as_ref(), &tb);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { step });
            }
            epoch_loss += loss * chunk.len() as f64;
            opt.step(&mut params, &grad, cfg.learning_rate);
            net.params.copy_from_slice(&params);
            step += 1;
        }
        loss_curve.push(epoch_loss / n as f64 * to_response);
    }

    let final_mse = mse_of(&net.forward(xs.as_ref()), &ts) * to_response;
    if !final_mse.is_finite() {
        return Err(Error::Divergence { step });
    }
    if final_mse > initial_mse {
        return Err(Error::NotImproved {
            initial: initial_mse,
            last: final_mse,
        });
    }

    Ok(RefitModel {
        network: net,
        input_mean,
        input_sd,
        target_mean,
        target_sd,
        selected_ids: sub.feature_ids().to_vec(),
        selected_indices: selected.to_vec(),
        source_dim: d.p(),
        loss_curve,
        initial_mse,
        final_mse,
        config: cfg.clone(),
    })
}

fn mse_of(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

impl RefitModel {
    /// Predictions for raw rows. `x` has either one column per selected
    /// feature or the full training width (the model picks its columns).
    pub fn predict(&self, x: MatRef<'_, f64>) -> Result<Vec<f64>> {
        let k = self.selected_indices.len();
        let cols: Vec<usize> = if x.ncols() == k {
            (0..k).collect()
        } else if x.ncols() == self.source_dim {
            self.selected_indices.clone()
        } else {
            return Err(Error::dim("prediction input columns", k, x.ncols()));
        };
        Ok(self.predict_columns(x, &cols))
    }

    /// Predictions for a dataset, matching columns by feature id.
    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<f64>> {
        let cols: Vec<usize> = self
            .selected_ids
            .iter()
            .filter_map(|id| d.index_of(id))
            .collect();
        if cols.len() != self.selected_ids.len() {
            return Err(Error::dim(
                "model feature ids present in data",
                self.selected_ids.len(),
                cols.len(),
            ));
        }
        Ok(self.predict_columns(d.x(), &cols))
    }

    fn predict_columns(&self, x: MatRef<'_, f64>, cols: &[usize]) -> Vec<f64> {
        let xs = Mat::from_fn(x.nrows(), cols.len(), |i, j| {
            (x[(i, cols[j])] - self.input_mean[j]) / self.input_sd[j]
        });
        self.network
            .forward(xs.as_ref())
            .into_iter()
            .map(|v| v * self.target_sd + self.target_mean)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: RefitModel = serde_json::from_str(s)?;
        let k = m.selected_ids.len();
        if m.network.input_dim() != k
            || m.input_mean.len() != k
            || m.input_sd.len() != k
            || m.selected_indices.len() != k
        {
            return Err(Error::Schema("inconsistent model document".into()));
        }
        Ok(m)
    }
}

/// Mean squared prediction error on `d_test`.
pub fn evaluate_mse(m: &RefitModel, d_test: &Dataset) -> Result<f64> {
    let pred = m.predict_dataset(d_test)?;
    Ok(mse_of(&pred, d_test.y()))
}
