use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bptt_gradients, forward_sequence, sequence_loss, Cell, CellKind, GruParams, LstmParams, RecurrentError};

const MAX_RESTARTS: usize = 5;
const CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// GRU only: train gate and candidate biases.
    pub gru_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_size: 8,
            window: 4,
            epochs: 3000,
            learning_rate: 0.05,
            seed: 0,
            init_scale: 0.3,
            gru_bias: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), RecurrentError> {
        let bad = |m: &str| Err(RecurrentError::Config(m.to_string()));
        if self.hidden_size == 0 {
            return bad("hidden_size must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

/// Min–max scaling to `[0, 1]`. A constant series gets unit span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub lo: f64,
    pub span: f64,
}

impl Normalization {
    pub fn fit(series: &[f64]) -> Normalization {
        let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        Normalization { lo, span: if span > 0.0 { span } else { 1.0 } }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.lo) / self.span
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.span + self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainedNetwork {
    Lstm(LstmParams),
    Gru(GruParams),
}

/// A trained cell together with what is needed to forecast in count units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub kind: CellKind,
    pub hidden_size: usize,
    pub window: usize,
    pub normalization: Normalization,
    pub training_loss: f64,
    pub initial_loss: f64,
    pub weights: TrainedNetwork,
}

type Windows = Vec<(Vec<f64>, Vec<f64>)>;

fn sliding_windows(scaled: &[f64], window: usize) -> Windows {
    (0..scaled.len() - window)
        .map(|i| (scaled[i..i + window].to_vec(), scaled[i + 1..i + window + 1].to_vec()))
        .collect()
}

/// Summed loss and summed gradient over a batch of `(inputs, targets)` windows.
pub fn batch_gradients<C: Cell>(cell: &C, windows: &[(Vec<f64>, Vec<f64>)]) -> Result<(f64, C), RecurrentError> {
    let mut total = 0.0;
    let mut grad = vec![0.0; cell.to_flat().len()];
    for (inputs, targets) in windows {
        let (loss, g) = bptt_gradients(cell, inputs, targets)?;
        total += loss;
        for (a, b) in grad.iter_mut().zip(g.to_flat()) {
            *a += b;
        }
    }
    let mut out = cell.zeros_like();
    out.set_flat(&grad);
    Ok((total, out))
}

fn mean_loss<C: Cell>(cell: &C, windows: &Windows) -> Result<f64, RecurrentError> {
    let mut total = 0.0;
    for (x, y) in windows {
        total += sequence_loss(cell, x, y)?;
    }
    Ok(total / windows.len() as f64)
}

struct Outcome<C> {
    best: C,
    best_loss: f64,
    initial_loss: f64,
}

/// Full-batch gradient descent with global-norm clipping. Returns `None`
/// when the loss goes non-finite.
fn descend<C: Cell>(init: C, windows: &Windows, epochs: usize, lr: f64) -> Result<Option<Outcome<C>>, RecurrentError> {
    let scale = 1.0 / windows.len() as f64;
    let mut params = init.to_flat();
    let mut cell = init;
    let initial_loss = mean_loss(&cell, windows)?;
    if !initial_loss.is_finite() {
        return Ok(None);
    }
    let mut best = (initial_loss, cell.clone());
    for _ in 0..epochs {
        let (loss, grad) = batch_gradients(&cell, windows)?;
        let loss = loss * scale;
        if !loss.is_finite() {
            return Ok(None);
        }
        if loss < best.0 {
            best = (loss, cell.clone());
        }
        let mut g = grad.to_flat();
        g.iter_mut().for_each(|v| *v *= scale);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Ok(None);
        }
        let clip = if norm > CLIP_NORM { CLIP_NORM / norm } else { 1.0 };
        for (p, d) in params.iter_mut().zip(&g) {
            *p -= lr * clip * d;
        }
        cell.set_flat(&params);
    }
    let last = mean_loss(&cell, windows)?;
    if !last.is_finite() {
        return Ok(None);
    }
    if last < best.0 {
        best = (last, cell);
    }
    Ok(Some(Outcome { best: best.1, best_loss: best.0, initial_loss }))
}

fn run<C: Cell>(
    init: impl Fn() -> C,
    windows: &Windows,
    cfg: &TrainConfig,
) -> Result<Outcome<C>, RecurrentError> {
    let mut lr = cfg.learning_rate;
    for _ in 0..=MAX_RESTARTS {
        if let Some(outcome) = descend(init(), windows, cfg.epochs, lr)? {
            return Ok(outcome);
        }
        lr *= 0.5;
    }
    Err(RecurrentError::Exploded { restarts: MAX_RESTARTS })
}

/// Trains an LSTM or GRU on one-step-ahead prediction over every sliding
/// window of the min–max scaled `series`. The parameters with the lowest
/// training loss seen are returned.
pub fn train(series: &[f64], cfg: &TrainConfig, kind: CellKind) -> Result<RecurrentModel, RecurrentError> {
    cfg.validate()?;
    if series.len() <= cfg.window {
        return Err(RecurrentError::SeriesTooShort { len: series.len(), window: cfg.window });
    }
    let normalization = Normalization::fit(series);
    let scaled: Vec<f64> = series.iter().map(|&v| normalization.apply(v)).collect();
    let windows = sliding_windows(&scaled, cfg.window);
    let (weights, training_loss, initial_loss) = match kind {
        CellKind::Lstm => {
            let init = || LstmParams::random(cfg.hidden_size, 1, cfg.init_scale, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
            let o = run(init, &windows, cfg)?;
            (TrainedNetwork::Lstm(o.best), o.best_loss, o.initial_loss)
        }
        CellKind::Gru => {
            let init = || {
                GruParams::random(cfg.hidden_size, 1, cfg.gru_bias, cfg.init_scale, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
            };
            let o = run(init, &windows, cfg)?;
            (TrainedNetwork::Gru(o.best), o.best_loss, o.initial_loss)
        }
    };
    Ok(RecurrentModel {
        kind,
        hidden_size: cfg.hidden_size,
        window: cfg.window,
        normalization,
        training_loss,
        initial_loss,
        weights,
    })
}

fn last_output<C: Cell>(cell: &C, inputs: &[f64]) -> Result<f64, RecurrentError> {
    let (outputs, _) = forward_sequence(cell, inputs)?;
    Ok(*outputs.last().expect("non-empty window"))
}

/// Rolls the model forward `horizon` steps from the end of `history`,
/// feeding each prediction back as the next input. Output is in count units.
pub fn forecast(model: &RecurrentModel, history: &[f64], horizon: usize) -> Result<Vec<f64>, RecurrentError> {
    if horizon == 0 {
        return Ok(Vec::new());
    }
    if history.len() < model.window {
        return Err(RecurrentError::SeriesTooShort { len: history.len(), window: model.window });
    }
    let norm = model.normalization;
    let mut context: Vec<f64> = history[history.len() - model.window..].iter().map(|&v| norm.apply(v)).collect();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = match &model.weights {
            TrainedNetwork::Lstm(p) => last_output(p, &context)?,
            TrainedNetwork::Gru(p) => last_output(p, &context)?,
        };
        out.push(norm.invert(next));
        context.remove(0);
        context.push(next);
    }
    Ok(out)
}
