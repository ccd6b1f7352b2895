//! Single-layer LSTM with a linear head, trained with backpropagation
//! through time.
//!
//! The cell uses the usual gate equations, with `x_t` a scalar input:
//!
//! ```text
//! i_t = σ(W_i x_t + U_i h_{t-1} + b_i)
//! f_t = σ(W_f x_t + U_f h_{t-1} + b_f)
//! o_t = σ(W_o x_t + U_o h_{t-1} + b_o)
//! g_t = tanh(W_g x_t + U_g h_{t-1} + b_g)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t
//! h_t = o_t ⊙ tanh(c_t)
//! ŷ   = v · h_T + d
//! ```
//!
//! Parameters live in one flat vector so the optimizer and the gradient
//! checker can treat them uniformly; [`LstmParams`] exposes named views.

use std::io::{Read, Write};
use std::ops::Range;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluation::{mae, rmse};
use crate::preprocess::{ScalerParams, WindowedDataset};
use crate::{Error, Result, SCHEMA_VERSION};

/// Rows per gradient work unit. Fixed so the reduction order, and hence the
/// result, does not depend on the number of threads.
const GRADIENT_CHUNK: usize = 32;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// Finite-difference step for [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
/// Minimum number of parameters compared by [`gradient_check`].
pub const GRADIENT_CHECK_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub lookback: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs without improvement before training stops.
    pub patience: usize,
    /// Improvement in epoch loss that resets the patience counter.
    pub min_improvement: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            lookback: 100,
            hidden_size: 32,
            epochs: 20,
            batch_size: 1024,
            learning_rate: 1e-3,
            seed: 0,
            patience: 3,
            min_improvement: 1e-6,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lookback", self.lookback),
            ("hidden_size", self.hidden_size),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("lstm.{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("lstm.learning_rate must be positive".into()));
        }
        if self.min_improvement.is_nan() || self.min_improvement < 0.0 {
            return Err(Error::InvalidConfig("lstm.min_improvement must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    fn index(self) -> usize {
        self as usize
    }
}

/// Number of trainable parameters for a given hidden size.
pub fn param_count(hidden_size: usize) -> usize {
    4 * gate_block(hidden_size) + hidden_size + 1
}

fn gate_block(h: usize) -> usize {
    h + h * h + h
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    hidden_size: usize,
    lookback: usize,
    weights: Vec<f64>,
    scaler: ScalerParams,
}

impl LstmParams {
    /// All-zero parameters.
    pub fn zeros(hidden_size: usize, lookback: usize) -> Self {
        Self {
            hidden_size,
            lookback,
            weights: vec![0.0; param_count(hidden_size)],
            scaler: ScalerParams {
                min_value: 0.0,
                max_value: 1.0,
            },
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn scaler(&self) -> ScalerParams {
        self.scaler
    }

    pub fn set_scaler(&mut self, scaler: ScalerParams) {
        self.scaler = scaler;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Index range of everything belonging to one gate in the flat vector.
    pub fn gate_range(&self, gate: Gate) -> Range<usize> {
        let block = gate_block(self.hidden_size);
        gate.index() * block..(gate.index() + 1) * block
    }

    fn input_range(&self, gate: Gate) -> Range<usize> {
        let start = self.gate_range(gate).start;
        start..start + self.hidden_size
    }

    fn recurrent_range(&self, gate: Gate) -> Range<usize> {
        let h = self.hidden_size;
        let start = self.gate_range(gate).start + h;
        start..start + h * h
    }

    fn bias_range(&self, gate: Gate) -> Range<usize> {
        let h = self.hidden_size;
        let start = self.gate_range(gate).start + h + h * h;
        start..start + h
    }

    fn head_range(&self) -> Range<usize> {
        let start = 4 * gate_block(self.hidden_size);
        start..start + self.hidden_size
    }

    fn head_bias_index(&self) -> usize {
        4 * gate_block(self.hidden_size) + self.hidden_size
    }

    /// Input-to-hidden weights of a gate (length `hidden_size`).
    pub fn input_weights(&self, gate: Gate) -> &[f64] {
        &self.weights[self.input_range(gate)]
    }

    pub fn input_weights_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.input_range(gate);
        &mut self.weights[r]
    }

    /// Hidden-to-hidden weights, row-major: entry `(j, k)` feeds `h[k]` into unit `j`.
    pub fn recurrent_weights(&self, gate: Gate) -> &[f64] {
        &self.weights[self.recurrent_range(gate)]
    }

    pub fn recurrent_weights_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.recurrent_range(gate);
        &mut self.weights[r]
    }

    pub fn bias(&self, gate: Gate) -> &[f64] {
        &self.weights[self.bias_range(gate)]
    }

    pub fn bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.bias_range(gate);
        &mut self.weights[r]
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.weights[self.head_range()]
    }

    pub fn head_weights_mut(&mut self) -> &mut [f64] {
        let r = self.head_range();
        &mut self.weights[r]
    }

    pub fn head_bias(&self) -> f64 {
        self.weights[self.head_bias_index()]
    }

    pub fn set_head_bias(&mut self, b: f64) {
        let i = self.head_bias_index();
        self.weights[i] = b;
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.lookback {
            return Err(Error::LengthMismatch {
                expected: self.lookback,
                actual: window.len(),
            });
        }
        Ok(())
    }

    /// Squared-error loss of one sample and its gradient.
    pub fn loss_gradient(&self, window: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
        self.check_window(window)?;
        let trace = self.run(window);
        let y = trace.output;
        let mut grad = vec![0.0; self.weights.len()];
        self.backward(window, &trace, 2.0 * (y - target), &mut grad);
        Ok(((y - target).powi(2), grad))
    }
}

/// Uniform Glorot initialization; forget-gate biases start at 1.
pub fn init_params(config: &LstmConfig) -> LstmParams {
    let h = config.hidden_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::zeros(h, config.lookback);

    let input_bound = glorot_bound(1, h);
    let recurrent_bound = glorot_bound(h, h);
    for gate in Gate::ALL {
        for w in params.input_weights_mut(gate) {
            *w = rng.gen_range(-input_bound..=input_bound);
        }
        for w in params.recurrent_weights_mut(gate) {
            *w = rng.gen_range(-recurrent_bound..=recurrent_bound);
        }
    }
    params.bias_mut(Gate::Forget).fill(1.0);
    let head_bound = glorot_bound(h, 1);
    for w in params.head_weights_mut() {
        *w = rng.gen_range(-head_bound..=head_bound);
    }
    params
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations recorded during a forward pass.
struct Trace {
    /// `T × 4H` post-activation gate values, ordered input, forget, output, candidate.
    gates: Vec<f64>,
    /// `(T + 1) × H`, row 0 is the zero initial state.
    cells: Vec<f64>,
    hidden: Vec<f64>,
    output: f64,
}

impl LstmParams {
    fn run(&self, window: &[f64]) -> Trace {
        let h = self.hidden_size;
        let steps = window.len();
        let mut gates = vec![0.0; steps * 4 * h];
        let mut cells = vec![0.0; (steps + 1) * h];
        let mut hidden = vec![0.0; (steps + 1) * h];

        for (t, &x) in window.iter().enumerate() {
            let (h_prev, h_next) = hidden.split_at_mut((t + 1) * h);
            let h_prev = &h_prev[t * h..];
            let h_next = &mut h_next[..h];
            let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];

            for gate in Gate::ALL {
                let wx = self.input_weights(gate);
                let wh = self.recurrent_weights(gate);
                let b = self.bias(gate);
                let out = &mut z[gate.index() * h..(gate.index() + 1) * h];
                for j in 0..h {
                    let row = &wh[j * h..(j + 1) * h];
                    let dot: f64 = row.iter().zip(h_prev).map(|(w, hv)| w * hv).sum();
                    let pre = wx[j] * x + b[j] + dot;
                    out[j] = if gate == Gate::Candidate {
                        pre.tanh()
                    } else {
                        sigmoid(pre)
                    };
                }
            }

            let (c_prev, c_next) = cells.split_at_mut((t + 1) * h);
            let c_prev = &c_prev[t * h..];
            for j in 0..h {
                let (i, f, o, g) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let c = f * c_prev[j] + i * g;
                c_next[j] = c;
                h_next[j] = o * c.tanh();
            }
        }

        let last = &hidden[steps * h..];
        let output = self
            .head_weights()
            .iter()
            .zip(last)
            .map(|(w, hv)| w * hv)
            .sum::<f64>()
            + self.head_bias();
        Trace {
            gates,
            cells,
            hidden,
            output,
        }
    }

    /// Accumulates `d_output * ∂ŷ/∂θ` into `grad`.
    fn backward(&self, window: &[f64], trace: &Trace, d_output: f64, grad: &mut [f64]) {
        let h = self.hidden_size;
        let steps = window.len();
        let last = &trace.hidden[steps * h..];

        let head = self.head_range();
        for (g, hv) in grad[head].iter_mut().zip(last) {
            *g += d_output * hv;
        }
        grad[self.head_bias_index()] += d_output;

        let mut dh: Vec<f64> = self.head_weights().iter().map(|w| w * d_output).collect();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let mut dh_prev = vec![0.0; h];

        for t in (0..steps).rev() {
            let z = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &trace.cells[t * h..(t + 1) * h];
            let c = &trace.cells[(t + 1) * h..(t + 2) * h];
            let h_prev = &trace.hidden[t * h..(t + 1) * h];

            for j in 0..h {
                let (i, f, o, g) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let tc = c[j].tanh();
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                let d_i = dcj * g;
                let d_g = dcj * i;
                let d_f = dcj * c_prev[j];
                dc[j] = dcj * f;
                dz[j] = d_i * i * (1.0 - i);
                dz[h + j] = d_f * f * (1.0 - f);
                dz[2 * h + j] = d_o * o * (1.0 - o);
                dz[3 * h + j] = d_g * (1.0 - g * g);
            }

            let x = window[t];
            dh_prev.fill(0.0);
            for gate in Gate::ALL {
                let dzg = &dz[gate.index() * h..(gate.index() + 1) * h];
                let input = self.input_range(gate);
                for (gw, d) in grad[input].iter_mut().zip(dzg) {
                    *gw += d * x;
                }
                let bias = self.bias_range(gate);
                for (gb, d) in grad[bias].iter_mut().zip(dzg) {
                    *gb += d;
                }
                let rec = self.recurrent_range(gate);
                let wh = &self.weights[rec.clone()];
                let grad_rec = &mut grad[rec];
                for j in 0..h {
                    let d = dzg[j];
                    if d == 0.0 {
                        continue;
                    }
                    let grow = &mut grad_rec[j * h..(j + 1) * h];
                    let wrow = &wh[j * h..(j + 1) * h];
                    for k in 0..h {
                        grow[k] += d * h_prev[k];
                        dh_prev[k] += wrow[k] * d;
                    }
                }
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
    }
}

/// Runs the recurrence over one window from a zero state.
pub fn forward(params: &LstmParams, window: &[f64]) -> Result<f64> {
    params.check_window(window)?;
    Ok(params.run(window).output)
}

/// One prediction per window row, in row order.
pub fn predict(params: &LstmParams, windows: &WindowedDataset) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    if windows.lookback() != params.lookback {
        return Err(Error::LengthMismatch {
            expected: params.lookback,
            actual: windows.lookback(),
        });
    }
    Ok(windows
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| params.run(row).output)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error per completed epoch, normalized units.
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
    pub train_mae: f64,
    pub train_rmse: f64,
    pub test_mae: f64,
    pub test_rmse: f64,
}

/// Sum of squared errors and the gradient of `scale * Σ (ŷ - y)²` over `rows`.
fn chunk_gradient(
    params: &LstmParams,
    data: &WindowedDataset,
    rows: Range<usize>,
    scale: f64,
) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; params.weights.len()];
    let mut loss = 0.0;
    for r in rows {
        let window = data.row(r);
        let trace = params.run(window);
        let err = trace.output - data.targets()[r];
        loss += err * err;
        params.backward(window, &trace, 2.0 * err * scale, &mut grad);
    }
    (grad, loss)
}

fn batch_gradient(params: &LstmParams, data: &WindowedDataset, rows: Range<usize>) -> (Vec<f64>, f64) {
    let scale = 1.0 / rows.len() as f64;
    let chunks: Vec<Range<usize>> = rows
        .clone()
        .step_by(GRADIENT_CHUNK)
        .map(|s| s..(s + GRADIENT_CHUNK).min(rows.end))
        .collect();
    let parts: Vec<(Vec<f64>, f64)> = chunks
        .into_par_iter()
        .map(|c| chunk_gradient(params, data, c, scale))
        .collect();
    let mut grad = vec![0.0; params.weights.len()];
    let mut loss = 0.0;
    for (g, l) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        loss += l;
    }
    (grad, loss)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    learning_rate: f64,
}

impl Adam {
    fn new(n: usize, learning_rate: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            learning_rate,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

/// Trains on chronological mini-batches and reports train/test errors in
/// normalized units.
pub fn train(
    config: &LstmConfig,
    train: &WindowedDataset,
    test: &WindowedDataset,
) -> Result<(LstmParams, TrainReport)> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput);
    }
    for ds in [train, test] {
        if ds.lookback() != config.lookback {
            return Err(Error::LengthMismatch {
                expected: config.lookback,
                actual: ds.lookback(),
            });
        }
    }

    let mut params = init_params(config);
    let mut adam = Adam::new(params.weights.len(), config.learning_rate);
    let n = train.len();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let mut total = 0.0;
        for start in (0..n).step_by(config.batch_size) {
            let rows = start..(start + config.batch_size).min(n);
            let (grad, loss) = batch_gradient(&params, train, rows);
            total += loss;
            adam.update(&mut params.weights, &grad);
        }
        let epoch_loss = total / n as f64;
        if !epoch_loss.is_finite() || params.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        epoch_losses.push(epoch_loss);

        if epoch_loss < best - config.min_improvement {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience && epoch < config.epochs {
                stopped_early = true;
                break;
            }
        }
    }

    let train_pred = predict(&params, train)?;
    let test_pred = predict(&params, test)?;
    let report = TrainReport {
        epoch_losses,
        stopped_early,
        train_mae: mae(train.targets(), &train_pred)?,
        train_rmse: rmse(train.targets(), &train_pred)?,
        test_mae: mae(test.targets(), &test_pred)?,
        test_rmse: rmse(test.targets(), &test_pred)?,
    };
    Ok((params, report))
}

/// Largest relative disagreement between the analytic squared-error
/// gradient and central finite differences, over a random subset of at
/// least [`GRADIENT_CHECK_SAMPLES`] parameters (all of them if fewer exist).
pub fn gradient_check(params: &LstmParams, window: &[f64], target: f64, seed: u64) -> Result<f64> {
    let (_, analytic) = params.loss_gradient(window, target)?;
    gradient_check_against(params, window, target, &analytic, seed)
}

/// As [`gradient_check`], with the analytic gradient supplied by the caller.
pub fn gradient_check_against(
    params: &LstmParams,
    window: &[f64],
    target: f64,
    analytic: &[f64],
    seed: u64,
) -> Result<f64> {
    params.check_window(window)?;
    if analytic.len() != params.weights.len() {
        return Err(Error::LengthMismatch {
            expected: params.weights.len(),
            actual: analytic.len(),
        });
    }
    let total = params.weights.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, total, GRADIENT_CHECK_SAMPLES.min(total));

    let loss_at = |p: &LstmParams| (p.run(window).output - target).powi(2);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for idx in picked.iter() {
        let original = probe.weights[idx];
        probe.weights[idx] = original + GRADIENT_CHECK_STEP;
        let up = loss_at(&probe);
        probe.weights[idx] = original - GRADIENT_CHECK_STEP;
        let down = loss_at(&probe);
        probe.weights[idx] = original;

        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Describes how weights are written in model files.
pub const WEIGHTS_ENCODING: &str =
    "decimal f64, shortest round-trip form; matrices row-major, recurrent[j][k] maps h[k] into unit j";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GateWeights {
    input_weights: Vec<f64>,
    recurrent: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GateSet {
    input: GateWeights,
    forget: GateWeights,
    output: GateWeights,
    candidate: GateWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HeadWeights {
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    model: String,
    weights_encoding: String,
    config: LstmConfig,
    scaler: ScalerParams,
    hidden_size: usize,
    gates: GateSet,
    head: HeadWeights,
    report: Option<TrainReport>,
}

/// A trained network with the configuration and report that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: LstmParams,
    pub report: Option<TrainReport>,
}

impl LstmModel {
    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let p = &self.params;
        let h = p.hidden_size;
        let gate = |g: Gate| GateWeights {
            input_weights: p.input_weights(g).to_vec(),
            recurrent: p.recurrent_weights(g).chunks(h).map(<[f64]>::to_vec).collect(),
            bias: p.bias(g).to_vec(),
        };
        let file = ModelFile {
            schema_version: SCHEMA_VERSION,
            model: "lstm".into(),
            weights_encoding: WEIGHTS_ENCODING.into(),
            config: self.config.clone(),
            scaler: p.scaler,
            hidden_size: h,
            gates: GateSet {
                input: gate(Gate::Input),
                forget: gate(Gate::Forget),
                output: gate(Gate::Output),
                candidate: gate(Gate::Candidate),
            },
            head: HeadWeights {
                weights: p.head_weights().to_vec(),
                bias: p.head_bias(),
            },
            report: self.report.clone(),
        };
        serde_json::to_writer_pretty(writer, &file)?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        if file.schema_version != SCHEMA_VERSION || file.model != "lstm" {
            return Err(Error::ModelFile(format!(
                "expected lstm schema {SCHEMA_VERSION}, found {} schema {}",
                file.model, file.schema_version
            )));
        }
        let h = file.hidden_size;
        let mut params = LstmParams::zeros(h, file.config.lookback);
        params.scaler = file.scaler;
        let gates = [
            (Gate::Input, &file.gates.input),
            (Gate::Forget, &file.gates.forget),
            (Gate::Output, &file.gates.output),
            (Gate::Candidate, &file.gates.candidate),
        ];
        for (gate, w) in gates {
            let recurrent: Vec<f64> = w.recurrent.iter().flatten().copied().collect();
            if w.input_weights.len() != h
                || w.bias.len() != h
                || w.recurrent.len() != h
                || recurrent.len() != h * h
            {
                return Err(Error::ModelFile(format!("{gate:?} gate shape does not match hidden_size {h}")));
            }
            params.input_weights_mut(gate).copy_from_slice(&w.input_weights);
            params.recurrent_weights_mut(gate).copy_from_slice(&recurrent);
            params.bias_mut(gate).copy_from_slice(&w.bias);
        }
        if file.head.weights.len() != h {
            return Err(Error::ModelFile("head shape does not match hidden_size".into()));
        }
        params.head_weights_mut().copy_from_slice(&file.head.weights);
        params.set_head_bias(file.head.bias);
        if params.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ModelFile("non-finite weight".into()));
        }
        Ok(Self {
            config: file.config,
            params,
            report: file.report,
        })
    }
}
