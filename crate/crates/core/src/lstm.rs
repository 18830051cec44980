//! A small stacked LSTM regressor over sliding windows of feature rows,
//! trained with Adam on mean squared error.
//!
//! Gate order inside every weight block is input, forget, candidate, output:
//!
//! ```text
//! i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
//! c_t = f * c_{t-1} + i * g            h_t = o * tanh(c_t)
//! ```
//!
//! with `z = Wx x_t + Wh h_{t-1} + b`. The prediction is `w . h_T + b_out`
//! from the top layer's final hidden state.

use std::io::{Read, Write};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::linalg::{mean, variance};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub window: usize,
    pub hidden: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Per-block L2 norm cap on applied gradients.
    pub grad_clip: Option<f64>,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            window: 14,
            hidden: 32,
            layers: 1,
            learning_rate: 1e-3,
            epochs: 50,
            batch: 32,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("window, hidden and layers must be at least 1".into()));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("epochs and batch must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Weights of one recurrent layer; matrices are row-major with `4 * hidden` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub wx: Vec<f64>,
    pub wh: Vec<f64>,
    pub b: Vec<f64>,
}

impl LayerParams {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        LayerParams {
            input_dim,
            hidden,
            wx: vec![0.0; 4 * hidden * input_dim],
            wh: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: Vec<LayerParams>,
    pub readout_w: Vec<f64>,
    pub readout_b: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize, layers: usize) -> Self {
        LstmParams {
            input_dim,
            hidden,
            layers: (0..layers)
                .map(|l| LayerParams::zeros(if l == 0 { input_dim } else { hidden }, hidden))
                .collect(),
            readout_w: vec![0.0; hidden],
            readout_b: 0.0,
        }
    }

    /// Uniform in `+-1/sqrt(hidden)`, forget-gate biases set to 1.
    pub fn init(input_dim: usize, hidden: usize, layers: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden, layers);
        let a = 1.0 / (hidden as f64).sqrt();
        for block in p.blocks_mut() {
            for v in block.iter_mut() {
                *v = rng.random_range(-a..a);
            }
        }
        for layer in &mut p.layers {
            layer.b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden, self.layers.len())
    }

    pub fn manifest(&self) -> Vec<BlockShape> {
        let h4 = 4 * self.hidden;
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(BlockShape { name: format!("layer{l}.wx"), rows: h4, cols: layer.input_dim });
            out.push(BlockShape { name: format!("layer{l}.wh"), rows: h4, cols: self.hidden });
            out.push(BlockShape { name: format!("layer{l}.b"), rows: h4, cols: 1 });
        }
        out.push(BlockShape { name: "readout.w".into(), rows: self.hidden, cols: 1 });
        out.push(BlockShape { name: "readout.b".into(), rows: 1, cols: 1 });
        out
    }

    /// Parameter blocks in manifest order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            out.extend([&layer.wx[..], &layer.wh[..], &layer.b[..]]);
        }
        out.push(&self.readout_w);
        out.push(std::slice::from_ref(&self.readout_b));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.wx);
            out.push(&mut layer.wh);
            out.push(&mut layer.b);
        }
        out.push(&mut self.readout_w);
        out.push(std::slice::from_mut(&mut self.readout_b));
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn same_shape(&self, other: &LstmParams) -> bool {
        self.manifest() == other.manifest()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one layer over a window.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// `steps * input_dim` inputs.
    inputs: Vec<f64>,
    /// `steps * 4H` post-activation gates.
    gates: Vec<f64>,
    /// `(steps + 1) * H`, with the zero initial state first.
    c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub steps: usize,
    hidden: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Cell state of `layer` after step `t` (1-based; 0 is the initial state).
    pub fn cell(&self, layer: usize, t: usize) -> &[f64] {
        &self.layers[layer].c[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn hidden_state(&self, layer: usize, t: usize) -> &[f64] {
        &self.layers[layer].h[t * self.hidden..(t + 1) * self.hidden]
    }
}

fn layer_forward(p: &LayerParams, inputs: Vec<f64>, steps: usize) -> LayerCache {
    let (d, h) = (p.input_dim, p.hidden);
    let mut gates = vec![0.0; steps * 4 * h];
    let mut c = vec![0.0; (steps + 1) * h];
    let mut hs = vec![0.0; (steps + 1) * h];
    for t in 0..steps {
        let x = &inputs[t * d..(t + 1) * d];
        let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        z.copy_from_slice(&p.b);
        for (r, zr) in z.iter_mut().enumerate() {
            let wx = &p.wx[r * d..(r + 1) * d];
            let wh = &p.wh[r * h..(r + 1) * h];
            let hp = &hs[t * h..(t + 1) * h];
            *zr += wx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + wh.iter().zip(hp).map(|(a, b)| a * b).sum::<f64>();
        }
        for k in 0..h {
            z[k] = sigmoid(z[k]);
            z[h + k] = sigmoid(z[h + k]);
            z[2 * h + k] = z[2 * h + k].tanh();
            z[3 * h + k] = sigmoid(z[3 * h + k]);
            let cn = z[h + k] * c[t * h + k] + z[k] * z[2 * h + k];
            c[(t + 1) * h + k] = cn;
            hs[(t + 1) * h + k] = z[3 * h + k] * cn.tanh();
        }
    }
    LayerCache { inputs, gates, c, h: hs }
}

/// Runs one window (`steps * input_dim` row-major values) through the network.
pub fn lstm_forward(params: &LstmParams, window: &[f64]) -> Result<(f64, ForwardCache)> {
    let d = params.input_dim;
    if d == 0 || window.is_empty() || window.len() % d != 0 {
        return Err(Error::Shape(format!("window of {} values for input dim {d}", window.len())));
    }
    let steps = window.len() / d;
    let h = params.hidden;
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut inputs = window.to_vec();
    for p in &params.layers {
        let cache = layer_forward(p, inputs, steps);
        inputs = cache.h[h..].to_vec();
        layers.push(cache);
    }
    let top = &layers.last().expect("at least one layer").h[steps * h..];
    let y = params.readout_b + params.readout_w.iter().zip(top).map(|(a, b)| a * b).sum::<f64>();
    if !y.is_finite() {
        return Err(Error::NonFinite("LSTM activation".into()));
    }
    Ok((y, ForwardCache { steps, hidden: h, layers }))
}

fn backward_into(params: &LstmParams, cache: &ForwardCache, dy: f64, grads: &mut LstmParams) -> Result<()> {
    let h = params.hidden;
    if cache.hidden != h || cache.layers.len() != params.layers.len() || !params.same_shape(grads) {
        return Err(Error::Shape("cache or gradient does not match the parameters".into()));
    }
    let steps = cache.steps;
    let top = &cache.layers.last().expect("at least one layer").h[steps * h..];
    for k in 0..h {
        grads.readout_w[k] += dy * top[k];
    }
    grads.readout_b += dy;
    // Gradient flowing into each layer's hidden outputs from above.
    let mut dh_above = vec![0.0; steps * h];
    for k in 0..h {
        dh_above[(steps - 1) * h + k] = dy * params.readout_w[k];
    }
    for l in (0..params.layers.len()).rev() {
        let p = &params.layers[l];
        let g = &mut grads.layers[l];
        let lc = &cache.layers[l];
        let d = p.input_dim;
        let mut dx = vec![0.0; steps * d];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gate = &lc.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &lc.c[t * h..(t + 1) * h];
            let c_cur = &lc.c[(t + 1) * h..(t + 2) * h];
            for k in 0..h {
                let (i, f, gg, o) = (gate[k], gate[h + k], gate[2 * h + k], gate[3 * h + k]);
                let dh = dh_above[t * h + k] + dh_next[k];
                let tc = c_cur[k].tanh();
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                dz[k] = dc * gg * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - gg * gg);
                dz[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            let x = &lc.inputs[t * d..(t + 1) * d];
            let h_prev = &lc.h[t * h..(t + 1) * h];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let dxt = &mut dx[t * d..(t + 1) * d];
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                g.b[r] += dzr;
                let gx = &mut g.wx[r * d..(r + 1) * d];
                let wx = &p.wx[r * d..(r + 1) * d];
                for j in 0..d {
                    gx[j] += dzr * x[j];
                    dxt[j] += dzr * wx[j];
                }
                let gh = &mut g.wh[r * h..(r + 1) * h];
                let wh = &p.wh[r * h..(r + 1) * h];
                for j in 0..h {
                    gh[j] += dzr * h_prev[j];
                    dh_next[j] += dzr * wh[j];
                }
            }
        }
        dh_above = dx;
    }
    Ok(())
}

/// Gradients of the prediction scaled by `dy` (the loss derivative with
/// respect to the prediction) for every parameter.
pub fn lstm_backward(params: &LstmParams, cache: &ForwardCache, dy: f64) -> Result<LstmParams> {
    let mut grads = params.zeros_like();
    backward_into(params, cache, dy, &mut grads)?;
    Ok(grads)
}

/// Mean squared error over a batch and its gradient.
pub fn batch_gradient(params: &LstmParams, windows: &[&[f64]], targets: &[f64]) -> Result<(f64, LstmParams)> {
    if windows.len() != targets.len() || windows.is_empty() {
        return Err(Error::Shape(format!("{} windows for {} targets", windows.len(), targets.len())));
    }
    let n = windows.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for (w, &y) in windows.iter().zip(targets) {
        let (pred, cache) = lstm_forward(params, w)?;
        let err = pred - y;
        loss += err * err / n;
        backward_into(params, &cache, 2.0 * err / n, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Scales each gradient block down to `max_norm`; returns the largest
/// block norm after clipping.
pub fn clip_gradients(grads: &mut LstmParams, max_norm: f64) -> f64 {
    let mut largest = 0.0f64;
    for block in grads.blocks_mut() {
        let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            block.iter_mut().for_each(|v| *v *= s);
        }
        largest = largest.max(norm.min(max_norm));
    }
    largest
}

fn max_block_norm(grads: &LstmParams) -> f64 {
    grads
        .blocks()
        .iter()
        .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: LstmParams,
    pub v: LstmParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &LstmParams) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

pub fn adam_step(params: &mut LstmParams, grads: &LstmParams, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let c1 = 1.0 - BETA1.powi(state.step as i32);
    let c2 = 1.0 - BETA2.powi(state.step as i32);
    let gb = grads.blocks();
    let mb = state.m.blocks_mut();
    let vb = state.v.blocks_mut();
    for (((p, g), m), v) in params.blocks_mut().into_iter().zip(gb).zip(mb).zip(vb) {
        for k in 0..p.len() {
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            p[k] -= lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

/// A trained network with the target scaling used during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: LstmParams,
    pub feature_names: Vec<String>,
    pub target_mean: f64,
    pub target_scale: f64,
    /// Mean training MSE per epoch, in standardized target units.
    pub loss_history: Vec<f64>,
    /// Largest gradient block norm applied in any step.
    pub max_applied_norm: f64,
}

/// Row-major copy of a matrix, so each window is one contiguous slice.
fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = x.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        out.extend(x.row(i).iter());
    }
    out
}

fn window_at(data: &[f64], d: usize, end_row: usize, window: usize) -> &[f64] {
    &data[(end_row + 1 - window) * d..(end_row + 1) * d]
}

/// Trains on windows ending at every row with `window - 1` predecessors.
pub fn train_lstm_matrix(x: &DMatrix<f64>, y: &[f64], names: &[String], config: &LstmConfig) -> Result<LstmModel> {
    config.validate()?;
    let (n, d) = x.shape();
    if n != y.len() || names.len() != d {
        return Err(Error::Shape(format!("{n} rows, {} targets, {} names, {d} columns", y.len(), names.len())));
    }
    if n < config.window + 1 {
        return Err(Error::InsufficientData(format!(
            "window {} needs at least {} training days, got {n}",
            config.window,
            config.window + 1
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LSTM training inputs".into()));
    }
    let target_mean = mean(y);
    let sd = variance(y).sqrt();
    let target_scale = if sd > 0.0 { sd } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - target_mean) / target_scale).collect();
    let data = row_major(x);

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(d, config.hidden, config.layers, &mut init_rng);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (config.window - 1..n).collect();
    let n_samples = order.len() as f64;
    let mut history = Vec::with_capacity(config.epochs);
    let mut max_applied = 0.0f64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch) {
            let windows: Vec<&[f64]> = chunk.iter().map(|&t| window_at(&data, d, t, config.window)).collect();
            let targets: Vec<f64> = chunk.iter().map(|&t| ys[t]).collect();
            let (loss, mut grads) = match batch_gradient(&params, &windows, &targets) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => (f64::NAN, params.zeros_like()),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss became non-finite in epoch {}; try a lower learning rate than {}",
                    epoch + 1,
                    config.learning_rate
                )));
            }
            let applied = match config.grad_clip {
                Some(c) => clip_gradients(&mut grads, c),
                None => max_block_norm(&grads),
            };
            max_applied = max_applied.max(applied);
            adam_step(&mut params, &grads, &mut adam, config.learning_rate);
            total += loss * chunk.len() as f64;
        }
        history.push(total / n_samples);
    }
    if !params.is_finite() {
        return Err(Error::Diverged(format!(
            "parameters became non-finite; try a lower learning rate than {}",
            config.learning_rate
        )));
    }
    Ok(LstmModel {
        config: config.clone(),
        params,
        feature_names: names.to_vec(),
        target_mean,
        target_scale,
        loss_history: history,
        max_applied_norm: max_applied,
    })
}

/// Trains on a standardized feature matrix.
pub fn train_lstm(train: &FeatureMatrix, config: &LstmConfig) -> Result<LstmModel> {
    if !train.is_standardized() {
        return Err(Error::InvalidInput("LSTM expects standardized features".into()));
    }
    train_lstm_matrix(&train.values, &train.target, &train.columns, config)
}

/// Predictions in target units for windows ending at each of `rows`.
pub fn predict_lstm_matrix(model: &LstmModel, x: &DMatrix<f64>, rows: &[usize]) -> Result<Vec<f64>> {
    let d = model.params.input_dim;
    if x.ncols() != d {
        return Err(Error::Shape(format!("{} columns for input dim {d}", x.ncols())));
    }
    let w = model.config.window;
    if let Some(&bad) = rows.iter().find(|&&r| r + 1 < w || r >= x.nrows()) {
        return Err(Error::InsufficientData(format!("row {bad} lacks {} preceding rows of history", w - 1)));
    }
    let data = row_major(x);
    rows.iter()
        .map(|&r| {
            let (p, _) = lstm_forward(&model.params, window_at(&data, d, r, w))?;
            Ok(p * model.target_scale + model.target_mean)
        })
        .collect()
}

/// One prediction per requested date; `features` must hold the preceding
/// `window - 1` days of each date.
pub fn predict_lstm(model: &LstmModel, features: &FeatureMatrix, dates: &[NaiveDate]) -> Result<Vec<f64>> {
    if features.columns != model.feature_names {
        return Err(Error::Shape("feature names differ from the model's".into()));
    }
    let rows: Vec<usize> = dates
        .iter()
        .map(|d| {
            features
                .dates
                .binary_search(d)
                .map_err(|_| Error::RangeNotCovered(format!("{d} is not in the feature matrix")))
        })
        .collect::<Result<_>>()?;
    predict_lstm_matrix(model, &features.values, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: LstmConfig,
    /// Validation MSE (target units) per configuration, in grid order.
    pub scores: Vec<(LstmConfig, f64)>,
}

/// Cartesian product of windows, hidden sizes and learning rates over `base`.
pub fn expand_grid(base: &LstmConfig, windows: &[usize], hiddens: &[usize], rates: &[f64]) -> Vec<LstmConfig> {
    let mut out = Vec::new();
    for &window in windows {
        for &hidden in hiddens {
            for &learning_rate in rates {
                out.push(LstmConfig { window, hidden, learning_rate, ..base.clone() });
            }
        }
    }
    out
}

/// Trains every configuration on the leading 80% of rows and scores it on
/// the trailing 20%; ties go to the smaller hidden size, then the smaller window.
pub fn grid_search_matrix(
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    grid: &[LstmConfig],
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty LSTM grid".into()));
    }
    let n = x.nrows();
    let split = n - n / 5;
    if split == n {
        return Err(Error::InsufficientData(format!("{n} rows leave no validation days")));
    }
    let fit_x = x.rows(0, split).into_owned();
    let valid_rows: Vec<usize> = (split..n).collect();
    let scores: Vec<(LstmConfig, f64)> = grid
        .par_iter()
        .map(|cfg| {
            let model = train_lstm_matrix(&fit_x, &y[..split], names, cfg)?;
            let preds = predict_lstm_matrix(&model, x, &valid_rows)?;
            let mse = valid_rows.iter().zip(&preds).map(|(&r, p)| (y[r] - p).powi(2)).sum::<f64>()
                / valid_rows.len() as f64;
            Ok((cfg.clone(), mse))
        })
        .collect::<Result<_>>()?;
    let best = scores
        .iter()
        .min_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(a.0.hidden.cmp(&b.0.hidden))
                .then(a.0.window.cmp(&b.0.window))
        })
        .expect("non-empty grid")
        .0
        .clone();
    Ok(GridResult { best, scores })
}

pub fn grid_search(train: &FeatureMatrix, grid: &[LstmConfig]) -> Result<GridResult> {
    if !train.is_standardized() {
        return Err(Error::InvalidInput("LSTM expects standardized features".into()));
    }
    grid_search_matrix(&train.values, &train.target, &train.columns, grid)
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    manifest: Vec<BlockShape>,
    model: LstmModel,
}

/// JSON dump of the model with a block shape manifest.
pub fn write_checkpoint<W: Write>(model: &LstmModel, out: W) -> Result<()> {
    let ck = Checkpoint { manifest: model.params.manifest(), model: model.clone() };
    serde_json::to_writer_pretty(out, &ck)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(source: R) -> Result<LstmModel> {
    let ck: Checkpoint = serde_json::from_reader(source)?;
    if ck.manifest != ck.model.params.manifest() {
        return Err(Error::Shape("checkpoint manifest does not match its tensors".into()));
    }
    for (shape, block) in ck.manifest.iter().zip(ck.model.params.blocks()) {
        if shape.rows * shape.cols != block.len() {
            return Err(Error::Shape(format!("block {} has {} values", shape.name, block.len())));
        }
    }
    Ok(ck.model)
}

/// Writes `epoch,mse` rows, epochs counted from 1.
pub fn write_loss_history<W: Write>(model: &LstmModel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "mse"])?;
    for (e, l) in model.loss_history.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_matches_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = LstmParams::init(5, 3, 2, &mut rng);
        let m = p.manifest();
        assert_eq!(m.len(), 8);
        for (s, b) in m.iter().zip(p.blocks()) {
            assert_eq!(s.rows * s.cols, b.len());
        }
        assert_eq!(p.n_params(), 4 * 3 * (5 + 3 + 1) + 4 * 3 * (3 + 3 + 1) + 3 + 1);
        assert!(p.layers.iter().all(|l| l.b[3..6].iter().all(|v| *v == 1.0)));
    }

    #[test]
    fn config_validation() {
        assert!(LstmConfig::default().validate().is_ok());
        assert!(LstmConfig { window: 0, ..Default::default() }.validate().is_err());
        assert!(LstmConfig { grad_clip: Some(0.0), ..Default::default() }.validate().is_err());
        assert!(LstmConfig { learning_rate: f64::NAN, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn bad_window_shape_rejected() {
        let p = LstmParams::zeros(3, 2, 1);
        assert!(lstm_forward(&p, &[1.0, 2.0]).is_err());
        assert!(lstm_forward(&p, &[]).is_err());
    }
}
