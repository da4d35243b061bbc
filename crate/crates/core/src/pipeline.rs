//! Glue from raw files to a safety-weighted graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{EvaluationFailure, FittedModel, ModelKind, ModelSettings};
use crate::exec::Execution;
use crate::fixtures;
use crate::graph::{GraphError, RouteGraph, Station};
use crate::ingest::{
    aggregate_all, parse_incidents, safety_coefficients, BucketGrid, IncidentSeries, IngestError, StationForecast,
    DEFAULT_RADIUS_KM,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("every station failed to fit with model {model}")]
    AllFailed { model: ModelKind },
}

/// One fitted model per station plus its next-bucket forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationFit {
    pub station_id: String,
    pub model: FittedModel,
    pub next_bucket: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyFit {
    pub model_kind: ModelKind,
    pub fits: Vec<StationFit>,
    pub failures: Vec<EvaluationFailure>,
    /// Normalized coefficients for the stations that fitted.
    pub safety: BTreeMap<String, f64>,
}

/// Incident series for every station of `graph` that has coordinates.
pub fn station_series(
    graph: &RouteGraph,
    incidents_csv: &str,
    radius_km: f64,
    grid: &BucketGrid,
    exec: Execution,
) -> Result<(Vec<IncidentSeries>, usize), PipelineError> {
    let parsed = parse_incidents(incidents_csv)?;
    let stations: Vec<Station> = graph.stations().filter(|s| s.location.is_some()).cloned().collect();
    let series = aggregate_all(&parsed.records, &stations, radius_km, grid, exec)?;
    Ok((series, parsed.malformed()))
}

/// Fits `kind` on each full series and turns the next-bucket forecasts into
/// safety coefficients. Stations whose fit fails are reported and left at
/// the neutral coefficient.
pub fn fit_safety(
    series: &[IncidentSeries],
    kind: ModelKind,
    settings: &ModelSettings,
    exec: Execution,
) -> Result<SafetyFit, PipelineError> {
    let results = exec.map(series, |s| {
        let values = s.values();
        let model = FittedModel::fit(kind, &values, settings)?;
        let next = model.forecast(&values, 1)?[0];
        Ok::<_, crate::evaluate::EvaluateError>(StationFit { station_id: s.station_id.clone(), model, next_bucket: next })
    });
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in series.iter().zip(results) {
        match r {
            Ok(f) if f.next_bucket.is_finite() => fits.push(f),
            Ok(f) => failures.push(EvaluationFailure {
                station_id: s.station_id.clone(),
                model_kind: kind,
                error: format!("non-finite forecast {}", f.next_bucket),
            }),
            Err(e) => failures.push(EvaluationFailure {
                station_id: s.station_id.clone(),
                model_kind: kind,
                error: e.to_string(),
            }),
        }
    }
    if fits.is_empty() && !series.is_empty() {
        return Err(PipelineError::AllFailed { model: kind });
    }
    let forecasts: Vec<StationForecast> = fits
        .iter()
        .map(|f| StationForecast { station: f.station_id.clone(), model: kind.to_string(), value: f.next_bucket })
        .collect();
    let safety = safety_coefficients(&forecasts)?;
    Ok(SafetyFit { model_kind: kind, fits, failures, safety })
}

/// The bundled station graph weighted by safety from the bundled incidents.
pub fn fixture_graph(kind: ModelKind, settings: &ModelSettings, exec: Execution) -> Result<RouteGraph, PipelineError> {
    let graph = RouteGraph::from_csv(fixtures::STATIONS_CSV)?;
    let grid = BucketGrid::default_monthly();
    let (series, _) = station_series(&graph, fixtures::INCIDENTS_CSV, DEFAULT_RADIUS_KM, &grid, exec)?;
    let fit = fit_safety(&series, kind, settings, exec)?;
    Ok(graph.with_safety(fit.safety)?)
}
