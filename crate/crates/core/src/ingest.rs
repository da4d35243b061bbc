//! Incident ingestion: parsing, spatial filtering, time bucketing and the
//! holdout split.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Months, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::graph::Station;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const DEFAULT_RADIUS_KM: f64 = 8.0;
/// Number of trailing buckets held out for evaluation.
pub const TEST_LEN: usize = 5;
/// Shortest series that leaves at least three training points.
pub const MIN_SERIES_LEN: usize = TEST_LEN + 3;
/// Lower clamp applied to forecasts before they become safety coefficients.
pub const SAFETY_FLOOR: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("incident csv is missing required column {0:?}")]
    MissingColumn(String),
    #[error("incident csv: {0}")]
    Csv(String),
    #[error("coordinates out of range: ({lat}, {lon})")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error("empty date range [{start}, {end})")]
    EmptyRange { start: NaiveDate, end: NaiveDate },
    #[error("{bucket} buckets do not divide [{start}, {end}) evenly")]
    UnevenRange { bucket: Bucket, start: NaiveDate, end: NaiveDate },
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("station {0:?} has no coordinates")]
    MissingLocation(String),
    #[error(
        "series for {station:?} has {len} buckets; at least {MIN_SERIES_LEN} are needed \
         (widen the date range or use a finer bucket)"
    )]
    SeriesTooShort { station: String, len: usize },
    #[error("non-finite forecast {value} from model {model} for station {station:?}")]
    NonFiniteForecast { station: String, model: String, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<GeoPoint, IngestError> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(IngestError::InvalidCoordinates { lat, lon })
        }
    }
}

/// Great-circle distance in kilometres on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub timestamp: NaiveDateTime,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedIncidents {
    pub records: Vec<IncidentRecord>,
    /// 1-based line numbers (header is line 1) of skipped rows.
    pub malformed_lines: Vec<usize>,
}

impl ParsedIncidents {
    pub fn malformed(&self) -> usize {
        self.malformed_lines.len()
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const DATETIME: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
        "%m/%d/%Y %H:%M:%S",
        "%m/%d/%Y %I:%M:%S %p",
    ];
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    DATETIME
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            ["%Y-%m-%d", "%m/%d/%Y"]
                .iter()
                .find_map(|f| NaiveDate::parse_from_str(s, f).ok())
                .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
        })
}

/// Parses an incident CSV with header `occurred_at,latitude,longitude`
/// (column order is free, extra columns are ignored). Rows with a bad
/// timestamp or coordinates are skipped and reported.
pub fn parse_incidents(text: &str) -> Result<ParsedIncidents, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();
    let mut cols = [0usize; 3];
    for (slot, name) in cols.iter_mut().zip(["occurred_at", "latitude", "longitude"]) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }

    let mut parsed = ParsedIncidents::default();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let Ok(rec) = rec else {
            parsed.malformed_lines.push(line);
            continue;
        };
        let record = (|| {
            let timestamp = parse_timestamp(rec.get(cols[0])?)?;
            let lat = rec.get(cols[1])?.parse().ok()?;
            let lon = rec.get(cols[2])?.parse().ok()?;
            let location = GeoPoint::new(lat, lon).ok()?;
            Some(IncidentRecord { timestamp, location })
        })();
        match record {
            Some(r) => parsed.records.push(r),
            None => parsed.malformed_lines.push(line),
        }
    }
    Ok(parsed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Daily,
    Weekly,
    #[default]
    Monthly,
}

impl std::fmt::Display for Bucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bucket::Daily => "daily",
            Bucket::Weekly => "weekly",
            Bucket::Monthly => "monthly",
        })
    }
}

impl std::str::FromStr for Bucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "daily" => Ok(Bucket::Daily),
            "weekly" => Ok(Bucket::Weekly),
            "monthly" => Ok(Bucket::Monthly),
            other => Err(format!("unknown bucket {other:?} (daily|weekly|monthly)")),
        }
    }
}

/// Half-open calendar range split into equal buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketGrid {
    pub bucket: Bucket,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl BucketGrid {
    pub fn new(bucket: Bucket, start: NaiveDate, end: NaiveDate) -> Result<BucketGrid, IngestError> {
        if end <= start {
            return Err(IngestError::EmptyRange { start, end });
        }
        let even = match bucket {
            Bucket::Daily => true,
            Bucket::Weekly => (end - start).num_days() % 7 == 0,
            Bucket::Monthly => start.day() == 1 && end.day() == 1,
        };
        if !even {
            return Err(IngestError::UnevenRange { bucket, start, end });
        }
        Ok(BucketGrid { bucket, start, end })
    }

    /// January 2018 through December 2019, monthly.
    pub fn default_monthly() -> BucketGrid {
        let d = |y, m| NaiveDate::from_ymd_opt(y, m, 1).expect("valid date");
        BucketGrid::new(Bucket::Monthly, d(2018, 1), d(2020, 1)).expect("valid grid")
    }

    pub fn len(&self) -> usize {
        match self.bucket {
            Bucket::Daily => (self.end - self.start).num_days() as usize,
            Bucket::Weekly => (self.end - self.start).num_days() as usize / 7,
            Bucket::Monthly => {
                let months = |d: NaiveDate| d.year() as i64 * 12 + d.month0() as i64;
                (months(self.end) - months(self.start)) as usize
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn starts(&self) -> Vec<NaiveDate> {
        (0..self.len()).map(|k| self.bucket_start(k)).collect()
    }

    pub fn bucket_start(&self, k: usize) -> NaiveDate {
        match self.bucket {
            Bucket::Daily => self.start + chrono::Days::new(k as u64),
            Bucket::Weekly => self.start + chrono::Days::new(7 * k as u64),
            Bucket::Monthly => self.start + Months::new(k as u32),
        }
    }

    /// Index of the bucket containing `t`, if it falls inside the range.
    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        let date = t.date();
        if date < self.start || date >= self.end {
            return None;
        }
        let k = match self.bucket {
            Bucket::Daily => (date - self.start).num_days(),
            Bucket::Weekly => (date - self.start).num_days() / 7,
            Bucket::Monthly => {
                (date.year() as i64 - self.start.year() as i64) * 12 + date.month0() as i64
                    - self.start.month0() as i64
            }
        };
        Some(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentSeries {
    pub station_id: String,
    pub bucket_start: Vec<NaiveDate>,
    pub counts: Vec<u32>,
}

impl IncidentSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Counts incidents within `radius_km` (inclusive) of `station` per bucket.
pub fn aggregate_series(
    incidents: &[IncidentRecord],
    station: &Station,
    radius_km: f64,
    grid: &BucketGrid,
) -> Result<IncidentSeries, IngestError> {
    if !(radius_km > 0.0) {
        return Err(IngestError::InvalidRadius(radius_km));
    }
    let centre = station
        .location
        .ok_or_else(|| IngestError::MissingLocation(station.id.clone()))?;
    let mut counts = vec![0u32; grid.len()];
    for inc in incidents {
        if let Some(k) = grid.index_of(inc.timestamp) {
            if haversine_km(centre, inc.location) <= radius_km {
                counts[k] += 1;
            }
        }
    }
    Ok(IncidentSeries { station_id: station.id.clone(), bucket_start: grid.starts(), counts })
}

/// [`aggregate_series`] for every station, one task per station.
pub fn aggregate_all(
    incidents: &[IncidentRecord],
    stations: &[Station],
    radius_km: f64,
    grid: &BucketGrid,
    exec: Execution,
) -> Result<Vec<IncidentSeries>, IngestError> {
    exec.map(stations, |s| aggregate_series(incidents, s, radius_km, grid))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSeries {
    pub train: IncidentSeries,
    pub test: IncidentSeries,
}

/// Holds out the last [`TEST_LEN`] buckets.
pub fn split_train_test(series: &IncidentSeries) -> Result<SplitSeries, IngestError> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(IngestError::SeriesTooShort { station: series.station_id.clone(), len: n });
    }
    let cut = n - TEST_LEN;
    let part = |r: std::ops::Range<usize>| IncidentSeries {
        station_id: series.station_id.clone(),
        bucket_start: series.bucket_start[r.clone()].to_vec(),
        counts: series.counts[r].to_vec(),
    };
    Ok(SplitSeries { train: part(0..cut), test: part(cut..n) })
}

/// A next-bucket forecast for one station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationForecast {
    pub station: String,
    pub model: String,
    pub value: f64,
}

/// Turns next-bucket forecasts into safety coefficients: each forecast is
/// clamped below at [`SAFETY_FLOOR`], then divided by the mean of the
/// clamped values so an average station scores 1.
pub fn safety_coefficients(forecasts: &[StationForecast]) -> Result<BTreeMap<String, f64>, IngestError> {
    let mut clamped = Vec::with_capacity(forecasts.len());
    for f in forecasts {
        if !f.value.is_finite() {
            return Err(IngestError::NonFiniteForecast {
                station: f.station.clone(),
                model: f.model.clone(),
                value: f.value,
            });
        }
        clamped.push((f.station.clone(), f.value.max(SAFETY_FLOOR)));
    }
    if clamped.is_empty() {
        return Ok(BTreeMap::new());
    }
    let mean = clamped.iter().map(|(_, v)| v).sum::<f64>() / clamped.len() as f64;
    Ok(clamped.into_iter().map(|(s, v)| (s, v / mean)).collect())
}
