//! Safety-weighted subway routing.
//!
//! The crate is split along the pipeline it implements:
//!
//! * [`ingest`] parses incident and station files, counts incidents around
//!   each station into fixed-stride time series and splits them for holdout
//!   evaluation.
//! * [`linear_models`] and [`recurrent`] forecast the next incident counts
//!   (Poisson GLM, OLS, ridge, lasso, LSTM, GRU).
//! * [`evaluate`] scores every model per station by RMSE on the holdout.
//! * [`graph`] holds the station network; edge cost is safety × travel time.
//! * [`pipeline`] wires ingestion and forecasting into a weighted graph.
//! * [`routing`] finds routes with Dijkstra, Bellman-Ford or tabular
//!   Q-learning.
//!
//! Station × model work fans out over rayon when the `parallel` feature is
//! enabled (the default); see [`exec`].

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod evaluate;
pub mod exec;
pub mod fixtures;
pub mod graph;
pub mod ingest;
pub mod linear_models;
pub mod pipeline;
pub mod recurrent;
pub mod routing;

pub use evaluate::{ComparisonReport, EvaluationRow, FittedModel, ModelKind, ModelSettings};
pub use exec::Execution;
pub use graph::{RouteGraph, SafetyMode, Station, StationRecord, TrackSegment};
pub use ingest::{GeoPoint, IncidentRecord, IncidentSeries, SplitSeries};
pub use routing::{ShortestPathResult, WeightedDigraph};
