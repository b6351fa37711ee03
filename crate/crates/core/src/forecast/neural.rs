//! Single-layer LSTM forecaster with a linear output head.
//!
//! The network reads a sequence of resilience vectors (scaled to `[0, 1]`)
//! and predicts the next one. Training uses full backpropagation through
//! time and plain full-batch gradient descent; [`gradient_check`] compares
//! the analytic gradients against central finite differences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdriError, Result};
use crate::ingest::SeriesPanel;
use crate::model::{DIMENSION_COUNT, SCORE_MIN};
use crate::rng::generator;

const INPUT: usize = DIMENSION_COUNT;
const SCALE_SPAN: f64 = 4.0;

/// Maximum relative error accepted by [`gradient_check`].
pub const GRAD_CHECK_THRESHOLD: f64 = 1e-4;

pub fn scale(score: f64) -> f64 {
    (score - SCORE_MIN) / SCALE_SPAN
}

pub fn unscale(value: f64) -> f64 {
    value * SCALE_SPAN + SCORE_MIN
}

/// All trainable parameters. Gate matrices are row-major `H x (5 + H)`
/// acting on `[x_t, h_{t-1}]`; the output head is row-major `5 x H`.
///
/// The same struct doubles as a gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub hidden: usize,
    pub w_input: Vec<f64>,
    pub w_forget: Vec<f64>,
    pub w_output: Vec<f64>,
    pub w_candidate: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_forget: Vec<f64>,
    pub b_output: Vec<f64>,
    pub b_candidate: Vec<f64>,
    pub w_head: Vec<f64>,
    pub b_head: Vec<f64>,
}

pub const BLOCK_NAMES: [&str; 10] = [
    "w_input",
    "w_forget",
    "w_output",
    "w_candidate",
    "b_input",
    "b_forget",
    "b_output",
    "b_candidate",
    "w_head",
    "b_head",
];

impl LstmWeights {
    pub fn zeros(hidden: usize) -> Self {
        let gate = vec![0.0; hidden * (INPUT + hidden)];
        let bias = vec![0.0; hidden];
        Self {
            hidden,
            w_input: gate.clone(),
            w_forget: gate.clone(),
            w_output: gate.clone(),
            w_candidate: gate,
            b_input: bias.clone(),
            b_forget: bias.clone(),
            b_output: bias.clone(),
            b_candidate: bias,
            w_head: vec![0.0; INPUT * hidden],
            b_head: vec![0.0; INPUT],
        }
    }

    /// Every parameter drawn from `U(-0.5/sqrt(H), 0.5/sqrt(H))`.
    pub fn seeded(hidden: usize, seed: u64) -> Self {
        let mut weights = Self::zeros(hidden);
        let bound = 0.5 / (hidden as f64).sqrt();
        let mut rng = generator(seed);
        for block in weights.blocks_mut() {
            for v in block.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        weights
    }

    /// Parameter blocks in [`BLOCK_NAMES`] order.
    pub fn blocks(&self) -> [&[f64]; 10] {
        [
            &self.w_input,
            &self.w_forget,
            &self.w_output,
            &self.w_candidate,
            &self.b_input,
            &self.b_forget,
            &self.b_output,
            &self.b_candidate,
            &self.w_head,
            &self.b_head,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.w_input,
            &mut self.w_forget,
            &mut self.w_output,
            &mut self.w_candidate,
            &mut self.b_input,
            &mut self.b_forget,
            &mut self.b_output,
            &mut self.b_candidate,
            &mut self.w_head,
            &mut self.b_head,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn gate(&self, k: usize) -> (&[f64], &[f64]) {
        match k {
            0 => (&self.w_input, &self.b_input),
            1 => (&self.w_forget, &self.b_forget),
            2 => (&self.w_output, &self.b_output),
            _ => (&self.w_candidate, &self.b_candidate),
        }
    }

    fn gate_mut(&mut self, k: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
        match k {
            0 => (&mut self.w_input, &mut self.b_input),
            1 => (&mut self.w_forget, &mut self.b_forget),
            2 => (&mut self.w_output, &mut self.b_output),
            _ => (&mut self.w_candidate, &mut self.b_candidate),
        }
    }

    fn add_scaled(&mut self, other: &LstmWeights, factor: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += factor * s;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    z: Vec<f64>,
    gates: [Vec<f64>; 4],
    cell_prev: Vec<f64>,
    cell_tanh: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: Vec<StepCache>,
    last_hidden: Vec<f64>,
}

/// Runs the cell over `sequence` from zero state and applies the head to the
/// final hidden state.
pub fn lstm_forward(weights: &LstmWeights, sequence: &[[f64; DIMENSION_COUNT]]) -> Result<([f64; DIMENSION_COUNT], ForwardCache)> {
    if sequence.is_empty() {
        return Err(CdriError::EmptyInput);
    }
    let h_size = weights.hidden;
    let width = INPUT + h_size;
    let mut h = vec![0.0; h_size];
    let mut c = vec![0.0; h_size];
    let mut steps = Vec::with_capacity(sequence.len());
    for x in sequence {
        let mut z = Vec::with_capacity(width);
        z.extend_from_slice(x);
        z.extend_from_slice(&h);
        let gates: [Vec<f64>; 4] = std::array::from_fn(|k| {
            let (w, b) = weights.gate(k);
            (0..h_size)
                .map(|r| {
                    let pre = b[r] + w[r * width..(r + 1) * width].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
                    if k == 3 {
                        pre.tanh()
                    } else {
                        sigmoid(pre)
                    }
                })
                .collect()
        });
        let cell_prev = c.clone();
        for r in 0..h_size {
            c[r] = gates[1][r] * cell_prev[r] + gates[0][r] * gates[3][r];
        }
        let cell_tanh: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        for r in 0..h_size {
            h[r] = gates[2][r] * cell_tanh[r];
        }
        steps.push(StepCache {
            z,
            gates,
            cell_prev,
            cell_tanh,
        });
    }
    let prediction: [f64; DIMENSION_COUNT] = std::array::from_fn(|j| {
        weights.b_head[j]
            + weights.w_head[j * h_size..(j + 1) * h_size]
                .iter()
                .zip(&h)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    });
    Ok((
        prediction,
        ForwardCache {
            steps,
            last_hidden: h,
        },
    ))
}

fn mse(prediction: &[f64; DIMENSION_COUNT], target: &[f64; DIMENSION_COUNT]) -> f64 {
    prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / DIMENSION_COUNT as f64
}

/// Backpropagates `d_prediction` through the cached forward pass and adds
/// the parameter gradients into `grad`.
fn backward(weights: &LstmWeights, cache: &ForwardCache, d_prediction: &[f64; DIMENSION_COUNT], grad: &mut LstmWeights) {
    let h_size = weights.hidden;
    let width = INPUT + h_size;
    let mut dh = vec![0.0; h_size];
    for j in 0..INPUT {
        grad.b_head[j] += d_prediction[j];
        for r in 0..h_size {
            grad.w_head[j * h_size + r] += d_prediction[j] * cache.last_hidden[r];
            dh[r] += weights.w_head[j * h_size + r] * d_prediction[j];
        }
    }
    let mut dc = vec![0.0; h_size];
    for step in cache.steps.iter().rev() {
        let [i, f, o, g] = &step.gates;
        let mut d_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h_size]);
        for r in 0..h_size {
            let tc = step.cell_tanh[r];
            let d_cell = dc[r] + dh[r] * o[r] * (1.0 - tc * tc);
            d_pre[0][r] = d_cell * g[r] * i[r] * (1.0 - i[r]);
            d_pre[1][r] = d_cell * step.cell_prev[r] * f[r] * (1.0 - f[r]);
            d_pre[2][r] = dh[r] * tc * o[r] * (1.0 - o[r]);
            d_pre[3][r] = d_cell * i[r] * (1.0 - g[r] * g[r]);
            dc[r] = d_cell * f[r];
        }
        let mut dz = vec![0.0; width];
        for (k, d) in d_pre.iter().enumerate() {
            let (w, _) = weights.gate(k);
            let (gw, gb) = grad.gate_mut(k);
            for r in 0..h_size {
                gb[r] += d[r];
                let row = r * width;
                for col in 0..width {
                    gw[row + col] += d[r] * step.z[col];
                    dz[col] += w[row + col] * d[r];
                }
            }
        }
        dh.copy_from_slice(&dz[INPUT..]);
    }
}

/// Mean squared error of one (sequence, target) pair and its exact gradient.
pub fn loss_and_gradient(
    weights: &LstmWeights,
    sequence: &[[f64; DIMENSION_COUNT]],
    target: &[f64; DIMENSION_COUNT],
) -> Result<(f64, LstmWeights)> {
    let (prediction, cache) = lstm_forward(weights, sequence)?;
    let d: [f64; DIMENSION_COUNT] =
        std::array::from_fn(|j| 2.0 * (prediction[j] - target[j]) / DIMENSION_COUNT as f64);
    let mut grad = LstmWeights::zeros(weights.hidden);
    backward(weights, &cache, &d, &mut grad);
    Ok((mse(&prediction, target), grad))
}

fn pair_loss(weights: &LstmWeights, sequence: &[[f64; DIMENSION_COUNT]], target: &[f64; DIMENSION_COUNT]) -> f64 {
    let (prediction, _) = lstm_forward(weights, sequence).expect("non-empty sequence");
    mse(&prediction, target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub block: String,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of the pair loss over
/// every parameter.
pub fn compare_gradients(
    weights: &LstmWeights,
    sequence: &[[f64; DIMENSION_COUNT]],
    target: &[f64; DIMENSION_COUNT],
    epsilon: f64,
    analytic: &LstmWeights,
) -> Result<GradCheckReport> {
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(CdriError::InvalidHyperparameter(format!(
            "finite-difference step {epsilon} is outside [1e-6, 1e-4]"
        )));
    }
    if sequence.is_empty() {
        return Err(CdriError::EmptyInput);
    }
    let mut probe = weights.clone();
    let mut blocks = Vec::with_capacity(BLOCK_NAMES.len());
    for (b, name) in BLOCK_NAMES.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..weights.blocks()[b].len() {
            let original = weights.blocks()[b][idx];
            probe.blocks_mut()[b][idx] = original + epsilon;
            let up = pair_loss(&probe, sequence, target);
            probe.blocks_mut()[b][idx] = original - epsilon;
            let down = pair_loss(&probe, sequence, target);
            probe.blocks_mut()[b][idx] = original;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic.blocks()[b][idx], numeric));
        }
        blocks.push(BlockError {
            block: (*name).to_string(),
            max_relative_error: worst,
        });
    }
    let max_relative_error = blocks.iter().map(|b| b.max_relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        blocks,
        max_relative_error,
        passed: max_relative_error < GRAD_CHECK_THRESHOLD,
    })
}

/// Checks the BPTT gradient of one pair against finite differences.
pub fn gradient_check(
    weights: &LstmWeights,
    sequence: &[[f64; DIMENSION_COUNT]],
    target: &[f64; DIMENSION_COUNT],
    epsilon: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_gradient(weights, sequence, target)?;
    compare_gradients(weights, sequence, target, epsilon, &analytic)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            epochs: 1000,
            step_size: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub weights: LstmWeights,
    /// Full-batch training loss measured at the start of each epoch.
    pub loss_history: Vec<f64>,
}

fn scaled_series(panel: &SeriesPanel) -> Vec<[f64; DIMENSION_COUNT]> {
    panel.aggregate.iter().map(|row| row.map(scale)).collect()
}

/// Mean pair loss and gradient over all (prefix -> next vector) pairs.
pub fn batch_loss_and_gradient(weights: &LstmWeights, series: &[[f64; DIMENSION_COUNT]]) -> Result<(f64, LstmWeights)> {
    if series.len() < 2 {
        return Err(CdriError::TooFewYears {
            needed: 2,
            found: series.len(),
        });
    }
    let pairs = series.len() - 1;
    let mut total = 0.0;
    let mut grad = LstmWeights::zeros(weights.hidden);
    for k in 1..series.len() {
        let (loss, g) = loss_and_gradient(weights, &series[..k], &series[k])?;
        total += loss;
        grad.add_scaled(&g, 1.0 / pairs as f64);
    }
    Ok((total / pairs as f64, grad))
}

/// Trains on the scaled aggregate series of `panel`.
pub fn lstm_train(panel: &SeriesPanel, config: LstmConfig) -> Result<LstmModel> {
    if config.hidden == 0 {
        return Err(CdriError::InvalidHyperparameter("hidden size must be positive".into()));
    }
    if !(config.step_size.is_finite() && config.step_size > 0.0) {
        return Err(CdriError::InvalidHyperparameter(format!(
            "step size {} must be positive",
            config.step_size
        )));
    }
    let series = scaled_series(panel);
    if series.len() < 2 {
        return Err(CdriError::TooFewYears {
            needed: 2,
            found: series.len(),
        });
    }
    let mut weights = LstmWeights::seeded(config.hidden, config.seed);
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (loss, grad) = batch_loss_and_gradient(&weights, &series)?;
        loss_history.push(loss);
        weights.add_scaled(&grad, -config.step_size);
    }
    Ok(LstmModel {
        config,
        weights,
        loss_history,
    })
}

/// Feeds the whole aggregate history, then appends its own predictions
/// `steps - 1` times; returns the last prediction on the 1..=5 scale
/// (unclamped).
pub fn lstm_predict(model: &LstmModel, panel: &SeriesPanel, steps: usize) -> Result<[f64; DIMENSION_COUNT]> {
    if steps == 0 {
        return Err(CdriError::InvalidHyperparameter("steps must be positive".into()));
    }
    let mut sequence = scaled_series(panel);
    let mut last = [0.0; DIMENSION_COUNT];
    for _ in 0..steps {
        let (prediction, _) = lstm_forward(&model.weights, &sequence)?;
        sequence.push(prediction);
        last = prediction;
    }
    Ok(last.map(unscale))
}
