//! Subway network model.
//!
//! A [`RouteGraph`] stores stations, directed track segments and a per-station
//! safety coefficient. The cost of traversing a segment is
//! `safety × travel_time`, where the safety coefficient is taken from the
//! station selected by [`SafetyMode`] (the destination by default).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::GeoPoint;
use crate::routing::WeightedDigraph;

/// Safety coefficient assigned to stations without incident data.
pub const NEUTRAL_SAFETY: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("row {row}: invalid travel time {value:?} (expected a positive number of minutes)")]
    InvalidTime { row: usize, value: String },
    #[error("row {row}: empty station name")]
    EmptyStation { row: usize },
    #[error("row {row}: station {station:?} lists itself as a neighbouring stop")]
    SelfLoop { row: usize, station: String },
    #[error("row {row}: invalid coordinates ({lat}, {lon})")]
    InvalidCoordinates { row: usize, lat: f64, lon: f64 },
    #[error("stops referenced but never defined: {}", .0.join(", "))]
    DanglingStops(Vec<String>),
    #[error("unknown station {0:?}")]
    UnknownStation(String),
    #[error("edge weight domain error: safety {safety} must be >= 0 and travel time {time} > 0")]
    Domain { safety: f64, time: f64 },
    #[error("invalid safety coefficient {value} for station {station:?}")]
    InvalidSafety { station: String, value: f64 },
    #[error("station csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub lines: BTreeSet<String>,
    pub location: Option<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSegment {
    pub from: String,
    pub to: String,
    /// Minutes, strictly positive.
    pub travel_time: f64,
}

/// One row of the station connectivity file, before validation.
///
/// `time_min` is kept as text so that [`RouteGraph::build`] can report the
/// offending row index when it is not a positive number.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StationRecord {
    pub station: String,
    pub train: String,
    pub prev_stop: Option<String>,
    pub next_stop: Option<String>,
    pub time_min: String,
    pub location: Option<(f64, f64)>,
}

impl StationRecord {
    pub fn new(station: &str, train: &str, prev: Option<&str>, next: Option<&str>, time: f64) -> Self {
        StationRecord {
            station: station.to_string(),
            train: train.to_string(),
            prev_stop: prev.map(str::to_string),
            next_stop: next.map(str::to_string),
            time_min: time.to_string(),
            location: None,
        }
    }
}

/// Which station's safety coefficient prices a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafetyMode {
    Source,
    #[default]
    Destination,
    Mean,
}

impl std::str::FromStr for SafetyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(SafetyMode::Source),
            "destination" => Ok(SafetyMode::Destination),
            "mean" => Ok(SafetyMode::Mean),
            other => Err(format!("unknown safety mode {other:?} (source|destination|mean)")),
        }
    }
}

/// Combined safety–time cost of one segment.
pub fn edge_weight(safety: f64, travel_time: f64) -> Result<f64, GraphError> {
    if !(safety >= 0.0) || !(travel_time > 0.0) || !safety.is_finite() || !travel_time.is_finite() {
        return Err(GraphError::Domain { safety, time: travel_time });
    }
    Ok(safety * travel_time)
}

/// Parses the connectivity CSV (`station,train,prev_stop,next_stop,time_min`
/// plus optional `lat,lon` columns).
pub fn parse_station_csv(text: &str) -> Result<Vec<StationRecord>, GraphError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| GraphError::Csv(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx
        .iter_mut()
        .zip(["station", "train", "prev_stop", "next_stop", "time_min"])
    {
        *slot = column(name).ok_or_else(|| GraphError::Csv(format!("missing column {name:?}")))?;
    }
    let lat_col = column("lat");
    let lon_col = column("lon");

    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| GraphError::Csv(format!("row {row}: {e}")))?;
        let cell = |i: usize| rec.get(i).unwrap_or("").to_string();
        let opt = |i: usize| Some(cell(i)).filter(|s| !s.is_empty());
        let location = match (lat_col.and_then(&opt), lon_col.and_then(&opt)) {
            (Some(lat), Some(lon)) => {
                let lat: f64 = lat
                    .parse()
                    .map_err(|_| GraphError::Csv(format!("row {row}: bad latitude {lat:?}")))?;
                let lon: f64 = lon
                    .parse()
                    .map_err(|_| GraphError::Csv(format!("row {row}: bad longitude {lon:?}")))?;
                Some((lat, lon))
            }
            _ => None,
        };
        out.push(StationRecord {
            station: cell(idx[0]),
            train: cell(idx[1]),
            prev_stop: opt(idx[2]),
            next_stop: opt(idx[3]),
            time_min: cell(idx[4]),
            location,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteGraph {
    stations: BTreeMap<String, Station>,
    /// Outgoing segments per station, sorted by destination id.
    segments: BTreeMap<String, Vec<TrackSegment>>,
    safety: BTreeMap<String, f64>,
    safety_mode: SafetyMode,
}

impl RouteGraph {
    /// Builds the network from connectivity rows.
    ///
    /// Every (station, prev_stop) and (station, next_stop) pair becomes a
    /// segment in both directions. Repeated pairs keep the smallest travel
    /// time, so duplicate rows are harmless.
    pub fn build(records: &[StationRecord]) -> Result<RouteGraph, GraphError> {
        let mut stations: BTreeMap<String, Station> = BTreeMap::new();
        let mut times: BTreeMap<(String, String), f64> = BTreeMap::new();
        let mut referenced = BTreeSet::new();

        for (row, rec) in records.iter().enumerate() {
            let id = rec.station.trim();
            if id.is_empty() {
                return Err(GraphError::EmptyStation { row });
            }
            let station = stations.entry(id.to_string()).or_insert_with(|| Station {
                id: id.to_string(),
                name: id.to_string(),
                lines: BTreeSet::new(),
                location: None,
            });
            if !rec.train.trim().is_empty() {
                station.lines.insert(rec.train.trim().to_string());
            }
            if let Some((lat, lon)) = rec.location {
                let point = GeoPoint::new(lat, lon)
                    .map_err(|_| GraphError::InvalidCoordinates { row, lat, lon })?;
                station.location.get_or_insert(point);
            }

            let stops: Vec<&str> = [&rec.prev_stop, &rec.next_stop]
                .into_iter()
                .flatten()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .collect();
            if stops.is_empty() {
                continue;
            }
            let time = rec
                .time_min
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite() && *t > 0.0)
                .ok_or_else(|| GraphError::InvalidTime { row, value: rec.time_min.clone() })?;
            for stop in stops {
                if stop == id {
                    return Err(GraphError::SelfLoop { row, station: id.to_string() });
                }
                referenced.insert(stop.to_string());
                for key in [(id.to_string(), stop.to_string()), (stop.to_string(), id.to_string())] {
                    times
                        .entry(key)
                        .and_modify(|t| *t = t.min(time))
                        .or_insert(time);
                }
            }
        }

        let dangling: Vec<String> = referenced
            .into_iter()
            .filter(|name| !stations.contains_key(name))
            .collect();
        if !dangling.is_empty() {
            return Err(GraphError::DanglingStops(dangling));
        }

        let mut segments: BTreeMap<String, Vec<TrackSegment>> =
            stations.keys().map(|k| (k.clone(), Vec::new())).collect();
        // BTreeMap iteration keeps each adjacency list sorted by destination.
        for ((from, to), travel_time) in times {
            segments
                .get_mut(&from)
                .expect("segment source is a known station")
                .push(TrackSegment { from, to, travel_time });
        }
        Ok(RouteGraph { stations, segments, safety: BTreeMap::new(), safety_mode: SafetyMode::default() })
    }

    pub fn from_csv(text: &str) -> Result<RouteGraph, GraphError> {
        RouteGraph::build(&parse_station_csv(text)?)
    }

    /// Replaces the safety coefficients. Stations not listed keep the
    /// neutral coefficient.
    pub fn with_safety(mut self, safety: BTreeMap<String, f64>) -> Result<RouteGraph, GraphError> {
        for (id, &value) in &safety {
            if !self.stations.contains_key(id) {
                return Err(GraphError::UnknownStation(id.clone()));
            }
            if !(value >= 0.0) || !value.is_finite() {
                return Err(GraphError::InvalidSafety { station: id.clone(), value });
            }
        }
        self.safety = safety;
        Ok(self)
    }

    pub fn with_safety_mode(mut self, mode: SafetyMode) -> RouteGraph {
        self.safety_mode = mode;
        self
    }

    pub fn safety_mode(&self) -> SafetyMode {
        self.safety_mode
    }

    pub fn safety_of(&self, id: &str) -> f64 {
        self.safety.get(id).copied().unwrap_or(NEUTRAL_SAFETY)
    }

    pub fn safety(&self) -> &BTreeMap<String, f64> {
        &self.safety
    }

    pub fn stations(&self) -> impl Iterator<Item = &Station> {
        self.stations.values()
    }

    pub fn station(&self, id: &str) -> Option<&Station> {
        self.stations.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.stations.contains_key(id)
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.values().map(Vec::len).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = &TrackSegment> {
        self.segments.values().flatten()
    }

    pub fn segment(&self, from: &str, to: &str) -> Option<&TrackSegment> {
        self.segments.get(from)?.iter().find(|s| s.to == to)
    }

    /// Cost of one segment under the current safety mode.
    pub fn segment_weight(&self, seg: &TrackSegment) -> Result<f64, GraphError> {
        let safety = match self.safety_mode {
            SafetyMode::Source => self.safety_of(&seg.from),
            SafetyMode::Destination => self.safety_of(&seg.to),
            SafetyMode::Mean => 0.5 * (self.safety_of(&seg.from) + self.safety_of(&seg.to)),
        };
        edge_weight(safety, seg.travel_time)
    }

    /// Outgoing neighbours of `id` with their edge weights, sorted by neighbour id.
    pub fn neighbors(&self, id: &str) -> Result<Vec<(String, f64)>, GraphError> {
        let segs = self
            .segments
            .get(id)
            .ok_or_else(|| GraphError::UnknownStation(id.to_string()))?;
        segs.iter()
            .map(|s| Ok((s.to.clone(), self.segment_weight(s)?)))
            .collect()
    }

    /// Freezes the current weights into an index-based digraph for the
    /// routing engines. Node indices follow id order.
    pub fn to_weighted(&self) -> Result<WeightedDigraph, GraphError> {
        let ids: Vec<String> = self.stations.keys().cloned().collect();
        let mut edges = Vec::with_capacity(self.segment_count());
        for seg in self.segments() {
            edges.push((seg.from.clone(), seg.to.clone(), self.segment_weight(seg)?));
        }
        Ok(WeightedDigraph::from_edges(ids, edges).expect("segment endpoints are stations"))
    }
}
