//! Holdout scoring of every forecaster on every station.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::ingest::SplitSeries;
use crate::linear_models::{LinearKind, TrendModel, DEFAULT_LAMBDA};
use crate::recurrent::{self, CellKind, RecurrentModel, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluateError {
    #[error("prediction has {pred} values but actual has {actual}")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("cannot score an empty forecast")]
    Empty,
    #[error("no series to evaluate")]
    NoSeries,
    #[error("unknown model '{0}' (expected one of poisson, ols, ridge, lasso, lstm, gru)")]
    UnknownModel(String),
    #[error("{0}")]
    Fit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Poisson,
    Ols,
    Ridge,
    Lasso,
    Lstm,
    Gru,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] =
        [ModelKind::Poisson, ModelKind::Ols, ModelKind::Ridge, ModelKind::Lasso, ModelKind::Lstm, ModelKind::Gru];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::Ols => "ols",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
        }
    }

    fn linear(self) -> Option<LinearKind> {
        match self {
            ModelKind::Poisson => Some(LinearKind::Poisson),
            ModelKind::Ols => Some(LinearKind::Ols),
            ModelKind::Ridge => Some(LinearKind::Ridge),
            ModelKind::Lasso => Some(LinearKind::Lasso),
            ModelKind::Lstm | ModelKind::Gru => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = EvaluateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| EvaluateError::UnknownModel(s.to_string()))
    }
}

/// Hyperparameters shared by every station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub lambda: f64,
    pub recurrent: TrainConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings { lambda: DEFAULT_LAMBDA, recurrent: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FittedModel {
    Trend { kind: ModelKind, model: TrendModel },
    Recurrent { kind: ModelKind, model: RecurrentModel },
}

impl FittedModel {
    pub fn fit(kind: ModelKind, train: &[f64], settings: &ModelSettings) -> Result<FittedModel, EvaluateError> {
        let fit_err = |e: &dyn fmt::Display| EvaluateError::Fit(e.to_string());
        match kind.linear() {
            Some(lk) => TrendModel::fit(lk, settings.lambda, train)
                .map(|model| FittedModel::Trend { kind, model })
                .map_err(|e| fit_err(&e)),
            None => {
                let cell = if kind == ModelKind::Lstm { CellKind::Lstm } else { CellKind::Gru };
                recurrent::train(train, &settings.recurrent, cell)
                    .map(|model| FittedModel::Recurrent { kind, model })
                    .map_err(|e| fit_err(&e))
            }
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Trend { kind, .. } | FittedModel::Recurrent { kind, .. } => *kind,
        }
    }

    /// The `horizon` buckets that follow `history`.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>, EvaluateError> {
        match self {
            FittedModel::Trend { model, .. } => Ok(model.forecast(history.len(), horizon)),
            FittedModel::Recurrent { model, .. } => {
                recurrent::forecast(model, history, horizon).map_err(|e| EvaluateError::Fit(e.to_string()))
            }
        }
    }
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, EvaluateError> {
    if pred.len() != actual.len() {
        return Err(EvaluateError::LengthMismatch { pred: pred.len(), actual: actual.len() });
    }
    if pred.is_empty() {
        return Err(EvaluateError::Empty);
    }
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub station_id: String,
    pub model_kind: ModelKind,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFailure {
    pub station_id: String,
    pub model_kind: ModelKind,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<EvaluationRow>,
    pub per_model_average: BTreeMap<ModelKind, f64>,
    pub failures: Vec<EvaluationFailure>,
}

impl ComparisonReport {
    /// Builds the report from rows, averaging each model over its rows in
    /// row order. Models with no rows get no average.
    pub fn from_rows(rows: Vec<EvaluationRow>, failures: Vec<EvaluationFailure>) -> ComparisonReport {
        let per_model_average = average_rows(&rows);
        ComparisonReport { rows, per_model_average, failures }
    }

    /// Recomputes the averages from the rows and compares them bit for bit.
    pub fn averages_consistent(&self) -> bool {
        average_rows(&self.rows) == self.per_model_average
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("station,model,rmse\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", csv_field(&r.station_id), r.model_kind, r.rmse));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn average_rows(rows: &[EvaluationRow]) -> BTreeMap<ModelKind, f64> {
    let mut sums: BTreeMap<ModelKind, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = sums.entry(r.model_kind).or_insert((0.0, 0));
        e.0 += r.rmse;
        e.1 += 1;
    }
    sums.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect()
}

/// Fits `kind` on the training part of `split` and scores its forecast of
/// the held-out part.
pub fn evaluate_one(split: &SplitSeries, kind: ModelKind, settings: &ModelSettings) -> Result<f64, EvaluateError> {
    let train = split.train.values();
    let test = split.test.values();
    let model = FittedModel::fit(kind, &train, settings)?;
    let pred = model.forecast(&train, test.len())?;
    let score = rmse(&pred, &test)?;
    if !score.is_finite() {
        return Err(EvaluateError::Fit(format!("non-finite RMSE {score}")));
    }
    Ok(score)
}

/// Scores every model on every station. Failures become entries in
/// [`ComparisonReport::failures`] rather than aborting the run.
pub fn evaluate_all(
    splits: &[SplitSeries],
    models: &[ModelKind],
    settings: &ModelSettings,
    exec: Execution,
) -> Result<ComparisonReport, EvaluateError> {
    if splits.is_empty() {
        return Err(EvaluateError::NoSeries);
    }
    let tasks: Vec<(&SplitSeries, ModelKind)> =
        splits.iter().flat_map(|s| models.iter().map(move |&m| (s, m))).collect();
    let results = exec.map(&tasks, |&(split, kind)| evaluate_one(split, kind, settings));

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((split, kind), result) in tasks.into_iter().zip(results) {
        let station_id = split.train.station_id.clone();
        match result {
            Ok(rmse) => rows.push(EvaluationRow { station_id, model_kind: kind, rmse }),
            Err(e) => failures.push(EvaluationFailure { station_id, model_kind: kind, error: e.to_string() }),
        }
    }
    Ok(ComparisonReport::from_rows(rows, failures))
}
