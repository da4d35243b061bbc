use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use saferoute::evaluate::{evaluate_all, ModelKind, ModelSettings};
use saferoute::exec::Execution;
use saferoute::fixtures;
use saferoute::graph::SafetyMode;
use saferoute::ingest::{split_train_test, Bucket, BucketGrid, IncidentSeries, DEFAULT_RADIUS_KM};
use saferoute::pipeline::{fit_safety, station_series, SafetyFit};
use saferoute::recurrent::TrainConfig;
use saferoute::routing::{
    bellman_ford, dijkstra, q_learning, Engine, QLearningConfig, RouteError, ShortestPathResult,
};
use saferoute::{RouteGraph, WeightedDigraph};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::failure::{Failure, EXIT_NOT_CONVERGED, EXIT_NO_PATH};
use crate::{BenchArgs, DataArgs, EvaluateArgs, FitArgs, Format, GraphArgs, IngestArgs, ModelArgs, RangeArgs, RouteArgs};

/// What `ingest` writes and `fit`/`evaluate` read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFile {
    pub grid: BucketGrid,
    pub radius_km: f64,
    pub malformed_rows: usize,
    pub series: Vec<IncidentSeries>,
}

fn read_input(flag: Option<&PathBuf>, configured: Option<&PathBuf>, bundled: &str) -> Result<(String, String), Failure> {
    match flag.or(configured) {
        Some(path) => std::fs::read_to_string(path)
            .map(|text| (text, path.display().to_string()))
            .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display()))),
        None => Ok((bundled.to_string(), "bundled fixture".to_string())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { stdout.write_all(b"\n") })
                .map_err(|e| Failure::data(format!("cannot write stdout: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{} is not a valid {what} file: {e}", path.display())))
}

fn grid(cfg: &RunConfig, bucket: Option<&String>, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<BucketGrid, Failure> {
    let default = BucketGrid::default_monthly();
    let bucket = match bucket.or(cfg.bucket.as_ref()) {
        Some(b) => b.parse::<Bucket>().map_err(Failure::usage)?,
        None => default.bucket,
    };
    let start = start.or(cfg.start).unwrap_or(default.start);
    let end = end.or(cfg.end).unwrap_or(default.end);
    BucketGrid::new(bucket, start, end).map_err(|e| Failure::usage(e.to_string()))
}

fn radius(cfg: &RunConfig, data: &DataArgs) -> Result<f64, Failure> {
    let r = data.radius_km.or(cfg.radius_km).unwrap_or(DEFAULT_RADIUS_KM);
    if !(r > 0.0 && r.is_finite()) {
        return Err(Failure::usage(format!("--radius-km must be a positive number of km, got {r}")));
    }
    Ok(r)
}

fn load_graph(cfg: &RunConfig, data: &DataArgs) -> Result<RouteGraph, Failure> {
    let (text, label) = read_input(data.stations.as_ref(), cfg.stations.as_ref(), fixtures::STATIONS_CSV)?;
    RouteGraph::from_csv(&text).map_err(|e| Failure::data(format!("{label}: {e}")))
}

fn ingest_series(cfg: &RunConfig, data: &DataArgs, grid: BucketGrid) -> Result<SeriesFile, Failure> {
    let radius_km = radius(cfg, data)?;
    let graph = load_graph(cfg, data)?;
    let (incidents, label) = read_input(data.incidents.as_ref(), cfg.incidents.as_ref(), fixtures::INCIDENTS_CSV)?;
    let (series, malformed_rows) = station_series(&graph, &incidents, radius_km, &grid, Execution::Parallel)
        .map_err(|e| Failure::data(format!("{label}: {e}")))?;
    if series.len() < graph.station_count() {
        eprintln!(
            "warning: {} station(s) have no coordinates and were skipped",
            graph.station_count() - series.len()
        );
    }
    Ok(SeriesFile { grid, radius_km, malformed_rows, series })
}

fn series_for(
    cfg: &RunConfig,
    series: Option<&PathBuf>,
    data: &DataArgs,
    range: &RangeArgs,
) -> Result<SeriesFile, Failure> {
    match series {
        Some(path) => read_json(path, "series"),
        None => ingest_series(cfg, data, grid(cfg, data.bucket.as_ref(), range.start, range.end)?),
    }
}

fn settings(cfg: &RunConfig, m: &ModelArgs) -> ModelSettings {
    let d = ModelSettings::default();
    let t = d.recurrent.clone();
    ModelSettings {
        lambda: m.lambda.or(cfg.lambda).unwrap_or(d.lambda),
        recurrent: TrainConfig {
            hidden_size: m.hidden_size.or(cfg.hidden_size).unwrap_or(t.hidden_size),
            window: m.window.or(cfg.window).unwrap_or(t.window),
            epochs: m.epochs.or(cfg.epochs).unwrap_or(t.epochs),
            learning_rate: m.learning_rate.or(cfg.learning_rate).unwrap_or(t.learning_rate),
            seed: m.seed.or(cfg.seed).unwrap_or(t.seed),
            init_scale: cfg.init_scale.unwrap_or(t.init_scale),
            gru_bias: cfg.gru_bias.unwrap_or(t.gru_bias),
        },
    }
}

pub fn ingest(cfg: &RunConfig, args: IngestArgs) -> Result<(), Failure> {
    let grid = grid(cfg, args.data.bucket.as_ref(), args.start, args.end)?;
    let file = ingest_series(cfg, &args.data, grid)?;
    eprintln!(
        "stations: {}, buckets: {}, malformed rows: {}",
        file.series.len(),
        file.grid.len(),
        file.malformed_rows
    );
    emit(args.out.as_deref(), &to_json(&file))
}

fn compute_safety(series: &[IncidentSeries], kind: ModelKind, settings: &ModelSettings) -> Result<SafetyFit, Failure> {
    let fit = fit_safety(series, kind, settings, Execution::Parallel).map_err(|e| Failure::data(e.to_string()))?;
    for f in &fit.failures {
        eprintln!("warning: {} fit failed for {}: {}", f.model_kind, f.station_id, f.error);
    }
    Ok(fit)
}

pub fn fit(cfg: &RunConfig, args: FitArgs) -> Result<(), Failure> {
    let file = series_for(cfg, args.series.as_ref(), &args.data, &args.range)?;
    let fit = compute_safety(&file.series, args.model, &settings(cfg, &args.model_args))?;
    eprintln!("fitted {} of {} stations with {}", fit.fits.len(), file.series.len(), args.model);
    emit(args.out.as_deref(), &to_json(&fit))
}

pub fn evaluate(cfg: &RunConfig, args: EvaluateArgs) -> Result<(), Failure> {
    let file = series_for(cfg, args.series.as_ref(), &args.data, &args.range)?;
    if file.series.is_empty() {
        return Err(Failure::data("no series to evaluate"));
    }
    let splits = file
        .series
        .iter()
        .map(split_train_test)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::data(e.to_string()))?;
    let models = if args.models.is_empty() { ModelKind::ALL.to_vec() } else { args.models.clone() };
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let report = evaluate_all(&splits, &models, &settings(cfg, &args.model_args), exec)
        .map_err(|e| Failure::data(e.to_string()))?;
    if !report.averages_consistent() {
        return Err(Failure::data("report averages do not match their rows"));
    }
    for f in &report.failures {
        eprintln!("warning: {} failed for {}: {}", f.model_kind, f.station_id, f.error);
    }
    match args.format {
        Format::Json => emit(None, &report.to_json()),
        Format::Csv => {
            for (m, avg) in &report.per_model_average {
                eprintln!("average rmse {m}: {avg:.6}");
            }
            emit(None, &report.to_csv())
        }
    }
}

fn close_matches<'a>(name: &str, known: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let lower = name.to_lowercase();
    let mut scored: Vec<(usize, &str)> = known
        .filter_map(|k| {
            let kl = k.to_lowercase();
            let d = strsim::levenshtein(&lower, &kl);
            let near = d <= (lower.len().max(kl.len()) / 3).max(2) || kl.contains(&lower) || lower.contains(&kl);
            near.then_some((d, k))
        })
        .collect();
    scored.sort();
    scored.into_iter().take(5).map(|(_, k)| k).collect()
}

fn check_station(g: &WeightedDigraph, name: &str) -> Result<(), Failure> {
    if g.index_of(name).is_ok() {
        return Ok(());
    }
    let matches = close_matches(name, g.ids().iter().map(String::as_str));
    let hint = if matches.is_empty() {
        String::new()
    } else {
        format!("; did you mean {}?", matches.iter().map(|m| format!("{m:?}")).collect::<Vec<_>>().join(", "))
    };
    Err(Failure::data(format!("unknown station {name:?}{hint}")))
}

fn build_graph(cfg: &RunConfig, a: &GraphArgs) -> Result<WeightedDigraph, Failure> {
    if let Some(path) = &a.edges {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
        return WeightedDigraph::from_edge_csv(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())));
    }
    let mode = match a.safety_mode.as_ref().or(cfg.safety_mode.as_ref()) {
        Some(m) => m.parse::<SafetyMode>().map_err(Failure::usage)?,
        None => SafetyMode::default(),
    };
    let graph = load_graph(cfg, &a.data)?.with_safety_mode(mode);
    let graph = if a.uniform_safety {
        graph
    } else {
        let safety = match &a.safety {
            Some(path) => read_json::<SafetyFit>(path, "fit")?.safety,
            None => {
                let kind = match (a.safety_model, &cfg.safety_model) {
                    (Some(k), _) => k,
                    (None, Some(s)) => s.parse().map_err(|e: saferoute::evaluate::EvaluateError| Failure::usage(e.to_string()))?,
                    (None, None) => ModelKind::Poisson,
                };
                let grid = grid(cfg, a.data.bucket.as_ref(), a.range.start, a.range.end)?;
                let file = ingest_series(cfg, &a.data, grid)?;
                compute_safety(&file.series, kind, &settings(cfg, &a.model_args))?.safety
            }
        };
        graph.with_safety(safety).map_err(|e| Failure::data(e.to_string()))?
    };
    graph.to_weighted().map_err(|e| Failure::data(e.to_string()))
}

fn q_config(cfg: &RunConfig, a: &GraphArgs) -> QLearningConfig {
    let d = QLearningConfig::default();
    QLearningConfig {
        episodes: a.episodes.or(cfg.episodes).unwrap_or(d.episodes),
        seed: a.model_args.seed.or(cfg.seed).unwrap_or(d.seed),
        ..d
    }
}

fn run_engine(engine: Engine, g: &WeightedDigraph, from: &str, to: &str, q: &QLearningConfig) -> Result<ShortestPathResult, RouteError> {
    match engine {
        Engine::Dijkstra => dijkstra(g, from, to),
        Engine::BellmanFord => bellman_ford(g, from, to),
        Engine::QLearning => q_learning(g, from, to, q).map(|(_, r)| r),
    }
}

pub fn route(cfg: &RunConfig, args: RouteArgs) -> Result<(), Failure> {
    let engine: Engine = match args.engine.as_ref().or(cfg.engine.as_ref()) {
        Some(e) => e.parse().map_err(Failure::usage)?,
        None => Engine::Dijkstra,
    };
    let g = build_graph(cfg, &args.graph)?;
    check_station(&g, &args.from)?;
    check_station(&g, &args.to)?;
    let result = run_engine(engine, &g, &args.from, &args.to, &q_config(cfg, &args.graph))?;
    emit(None, &to_json(&result.report()))?;
    if !result.found() {
        return Err(Failure { code: EXIT_NO_PATH, message: format!("no path from {:?} to {:?}", args.from, args.to) });
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchRow {
    engine: Engine,
    median_seconds: f64,
    total_cost: Option<f64>,
    path: Vec<String>,
    error: Option<String>,
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    let n = xs.len();
    if !n.is_multiple_of(2) {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2
    }
}

pub fn bench(cfg: &RunConfig, args: BenchArgs) -> Result<(), Failure> {
    let g = build_graph(cfg, &args.graph)?;
    check_station(&g, &args.from)?;
    check_station(&g, &args.to)?;
    let q = q_config(cfg, &args.graph);
    let mut rows = Vec::new();
    for engine in Engine::ALL {
        let mut times = Vec::new();
        let mut last = None;
        for _ in 0..args.repeat {
            match run_engine(engine, &g, &args.from, &args.to, &q) {
                Ok(r) => {
                    times.push(r.elapsed);
                    last = Some(Ok(r));
                }
                Err(e @ RouteError::NotConverged { .. }) => {
                    last = Some(Err(e));
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let row = match last.expect("repeat >= 1") {
            Ok(r) => BenchRow {
                engine,
                median_seconds: median(times).as_secs_f64(),
                total_cost: r.found().then_some(r.total_cost),
                path: r.path,
                error: None,
            },
            Err(e) => BenchRow { engine, median_seconds: f64::NAN, total_cost: None, path: Vec::new(), error: Some(e.to_string()) },
        };
        rows.push(row);
    }

    let mut table = format!("{:<14}{:>14}{:>14}{:>7}  {}\n", "engine", "median_ms", "cost", "hops", "path_agrees");
    let reference = &rows[0];
    let same = |r: &BenchRow| {
        r.error.is_none()
            && r.path == reference.path
            && match (r.total_cost, reference.total_cost) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                (None, None) => true,
                _ => false,
            }
    };
    let mut disagree = Vec::new();
    for r in &rows {
        let agrees = same(r);
        if !agrees {
            disagree.push(r.engine.name());
        }
        let cost = r.total_cost.map_or("-".to_string(), |c| format!("{c:.6}"));
        let hops = if r.path.is_empty() { "-".to_string() } else { (r.path.len() - 1).to_string() };
        table.push_str(&format!(
            "{:<14}{:>14.4}{:>14}{:>7}  {}\n",
            r.engine.name(),
            r.median_seconds * 1e3,
            cost,
            hops,
            if agrees { "yes" } else { "no" }
        ));
        if let Some(e) = &r.error {
            eprintln!("{}: {e}", r.engine);
        }
    }
    emit(None, &table)?;
    eprintln!("repeat: {}", args.repeat);
    if !disagree.is_empty() {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!("engines disagree with {}: {}", reference.engine, disagree.join(", ")),
        });
    }
    if reference.total_cost.is_none() {
        return Err(Failure { code: EXIT_NO_PATH, message: format!("no path from {:?} to {:?}", args.from, args.to) });
    }
    Ok(())
}
