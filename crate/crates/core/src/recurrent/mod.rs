//! LSTM and GRU cells written out by hand, with backpropagation through time.
//!
//! Both cells read the concatenation `[h_{t-1}, x_t]` and end in a scalar
//! linear readout of the hidden state. Weight matrices are stored row-major
//! as `hidden_size × (hidden_size + input_size)`.

mod gru;
mod lstm;
mod train;

pub use gru::{gru_step, GruParams, GruStep};
pub use lstm::{lstm_step, LstmParams, LstmStep};
pub use train::{
    batch_gradients, forecast, train, Normalization, RecurrentModel, TrainConfig, TrainedNetwork,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RecurrentError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("series of length {len} is too short for window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training loss became non-finite after {restarts} learning-rate halvings")]
    Exploded { restarts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

/// Hidden state, plus the cell vector for LSTMs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Option<Vec<f64>>,
}

/// Behaviour shared by both cells. Gradients come back as a value of the
/// same type, so the parameter layout never has to be described twice.
pub trait Cell: Clone + Send + Sync {
    type Step;

    fn hidden_size(&self) -> usize;
    fn input_size(&self) -> usize;
    fn initial_state(&self) -> CellState;

    /// One time step: new state, scalar output and the activations needed
    /// for the backward pass.
    fn step(&self, state: &CellState, x: &[f64]) -> Result<(CellState, f64, Self::Step), RecurrentError>;

    /// Reverse pass over a cached sequence, given `∂loss/∂output_t`.
    fn backward(&self, steps: &[Self::Step], d_outputs: &[f64]) -> Self;

    /// All parameters in a fixed order.
    fn to_flat(&self) -> Vec<f64>;
    fn set_flat(&mut self, flat: &[f64]);

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        let n = z.to_flat().len();
        z.set_flat(&vec![0.0; n]);
        z
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `w · v + b` for a row-major `rows × v.len()` matrix.
pub(crate) fn affine(w: &[f64], b: Option<&[f64]>, v: &[f64]) -> Vec<f64> {
    let cols = v.len();
    w.chunks_exact(cols)
        .enumerate()
        .map(|(r, row)| row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() + b.map_or(0.0, |b| b[r]))
        .collect()
}

/// Accumulates `delta ⊗ v` into `dw` and returns `wᵀ · delta`.
pub(crate) fn backprop_affine(w: &[f64], dw: &mut [f64], delta: &[f64], v: &[f64]) -> Vec<f64> {
    let cols = v.len();
    let mut dv = vec![0.0; cols];
    for (r, &d) in delta.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let drow = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            drow[c] += d * v[c];
            dv[c] += d * row[c];
        }
    }
    dv
}

pub(crate) fn concat(h: &[f64], x: &[f64]) -> Vec<f64> {
    h.iter().chain(x).copied().collect()
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), RecurrentError> {
    if expected == got {
        Ok(())
    } else {
        Err(RecurrentError::Shape { what, expected, got })
    }
}

/// Runs the cell from its zero state over `inputs` (flattened, `input_size`
/// values per step) and returns the outputs with the cached activations.
pub fn forward_sequence<C: Cell>(cell: &C, inputs: &[f64]) -> Result<(Vec<f64>, Vec<C::Step>), RecurrentError> {
    let width = cell.input_size();
    if !inputs.len().is_multiple_of(width) {
        return Err(RecurrentError::Shape { what: "input sequence", expected: width, got: inputs.len() % width });
    }
    let mut state = cell.initial_state();
    let mut outputs = Vec::with_capacity(inputs.len() / width);
    let mut steps = Vec::with_capacity(inputs.len() / width);
    for x in inputs.chunks_exact(width) {
        let (next, y, cache) = cell.step(&state, x)?;
        outputs.push(y);
        steps.push(cache);
        state = next;
    }
    Ok((outputs, steps))
}

/// Mean squared error of one window and its exact gradient with respect to
/// every parameter.
pub fn bptt_gradients<C: Cell>(cell: &C, inputs: &[f64], targets: &[f64]) -> Result<(f64, C), RecurrentError> {
    let (outputs, steps) = forward_sequence(cell, inputs)?;
    check_len("targets", outputs.len(), targets.len())?;
    let t = outputs.len() as f64;
    let loss = outputs.iter().zip(targets).map(|(y, g)| (y - g).powi(2)).sum::<f64>() / t;
    let d_outputs: Vec<f64> = outputs.iter().zip(targets).map(|(y, g)| 2.0 * (y - g) / t).collect();
    Ok((loss, cell.backward(&steps, &d_outputs)))
}

/// Mean squared error of one window without building gradients.
pub fn sequence_loss<C: Cell>(cell: &C, inputs: &[f64], targets: &[f64]) -> Result<f64, RecurrentError> {
    let (outputs, _) = forward_sequence(cell, inputs)?;
    check_len("targets", outputs.len(), targets.len())?;
    Ok(outputs.iter().zip(targets).map(|(y, g)| (y - g).powi(2)).sum::<f64>() / outputs.len() as f64)
}
