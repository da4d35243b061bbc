//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p saferoute --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saferoute::evaluate::{evaluate_all, rmse, ComparisonReport, ModelKind, ModelSettings};
use saferoute::exec::Execution;
use saferoute::fixtures::{CORRIDOR_PATH, CORRIDOR_SOURCE, CORRIDOR_TARGET, INCIDENTS_CSV, STATIONS_CSV};
use saferoute::ingest::{split_train_test, BucketGrid, DEFAULT_RADIUS_KM};
use saferoute::linear_models::{fit_lasso, fit_ols, fit_poisson, fit_ridge, predict, DesignMatrix};
use saferoute::pipeline::{fixture_graph, station_series};
use saferoute::recurrent::{
    bptt_gradients, gru_step, lstm_step, sequence_loss, Cell, CellState, GruParams, LstmParams,
};
use saferoute::routing::{bellman_ford, dijkstra, q_learning, QLearningConfig, RouteError};
use saferoute::{RouteGraph, SplitSeries};

use common::{brute_force, grid_min, max_relative_error, names, negative_cycle_graph, normal_equations, random_graph, reachable_graph};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn path_agreement() -> Outcome {
    let graph = fixture_graph(ModelKind::Poisson, &ModelSettings::default(), Execution::Parallel)
        .unwrap()
        .to_weighted()
        .unwrap();
    let want: Vec<String> = CORRIDOR_PATH.iter().map(|s| s.to_string()).collect();
    let timed = |f: &dyn Fn() -> Vec<String>| {
        let t = Instant::now();
        let p = f();
        (p, t.elapsed())
    };
    let (d, td) = timed(&|| dijkstra(&graph, CORRIDOR_SOURCE, CORRIDOR_TARGET).unwrap().path);
    let (b, tb) = timed(&|| bellman_ford(&graph, CORRIDOR_SOURCE, CORRIDOR_TARGET).unwrap().path);
    let (q, tq) = timed(&|| {
        q_learning(&graph, CORRIDOR_SOURCE, CORRIDOR_TARGET, &QLearningConfig::default())
            .map(|(_, r)| r.path)
            .unwrap_or_default()
    });
    let fast = td < Duration::from_millis(100) && tb < Duration::from_millis(100) && tq < Duration::from_secs(60);
    outcome(
        "path agreement",
        d == want && b == want && q == want && fast,
        format!(
            "dijkstra {} ({td:?}), bellman-ford {} ({tb:?}), q-learning {} ({tq:?})",
            d == want,
            b == want,
            q == want
        ),
    )
}

fn exact_engine_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ok = 0;
    for _ in 0..100 {
        let g = random_graph(&mut rng, 2, 10, 0.35, 10);
        let oracle = brute_force(&g, 0);
        let t = rng.gen_range(0..g.node_count());
        let d = dijkstra(&g, g.id(0), g.id(t)).unwrap();
        let b = bellman_ford(&g, g.id(0), g.id(t)).unwrap();
        let want_path = oracle.best[t].as_ref().map(|p| names(&g, p)).unwrap_or_default();
        let dist_ok = (0..g.node_count()).all(|i| d.dist[g.id(i)] == oracle.dist[i] && b.dist[g.id(i)] == oracle.dist[i]);
        if dist_ok && d.path == want_path && b.path == want_path {
            ok += 1;
        }
    }
    outcome("exact-engine oracle equivalence", ok == 100, format!("{ok}/100 graphs"))
}

fn negative_cycles() -> Outcome {
    let mut bf = 0;
    let mut dj = 0;
    for seed in 0..20 {
        let g = negative_cycle_graph(seed);
        let t = g.id(g.node_count() - 1).to_string();
        if bellman_ford(&g, g.id(0), &t) == Err(RouteError::NegativeCycle) {
            bf += 1;
        }
        if matches!(dijkstra(&g, g.id(0), &t), Err(RouteError::NegativeWeight { .. })) {
            dj += 1;
        }
    }
    outcome("negative-cycle detection", bf == 20 && dj == 20, format!("bellman-ford {bf}/20, dijkstra refused {dj}/20"))
}

fn q_quality() -> Outcome {
    let mut ok = 0;
    let mut misses = Vec::new();
    for seed in 0..50u64 {
        let g = reachable_graph(seed);
        let (s, t) = (g.id(0).to_string(), g.id(g.node_count() - 1).to_string());
        let best = dijkstra(&g, &s, &t).unwrap().total_cost;
        let cfg = QLearningConfig { seed, ..QLearningConfig::default() };
        match q_learning(&g, &s, &t, &cfg) {
            Ok((_, r)) if r.total_cost <= best * 1.05 + 1e-9 => ok += 1,
            Ok((_, r)) => misses.push(format!("seed {seed}: {} vs {best}", r.total_cost)),
            Err(e) => misses.push(format!("seed {seed}: {e}")),
        }
    }
    outcome("q-learning quality", ok >= 45, format!("{ok}/50 within 5% (need 45); misses: {}", misses.join("; ")))
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, p: usize, intercept: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let feats = (0..p).map(|_| rng.gen_range(-2.0..2.0));
            if intercept { std::iter::once(1.0).chain(feats).collect() } else { feats.collect() }
        })
        .collect();
    let y = rows.iter().map(|r| r.iter().sum::<f64>() * 0.8 + rng.gen_range(-0.5..0.5)).collect();
    (rows, y)
}

fn linear_models() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut fails = Vec::new();

    let mut ols_err: f64 = 0.0;
    for _ in 0..10 {
        let (rows, y) = random_rows(&mut rng, 20, 2, false);
        let fit = fit_ols(&DesignMatrix::new(&rows, &y).unwrap()).unwrap();
        let want = normal_equations(&rows, &y);
        ols_err = fit.theta.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(ols_err, f64::max);
    }
    if ols_err >= 1e-9 {
        fails.push(format!("ols err {ols_err:e}"));
    }

    let (rows, y) = random_rows(&mut rng, 25, 3, true);
    let d = DesignMatrix::new(&rows, &y).unwrap();
    let ols = fit_ols(&d).unwrap();
    let ridge_err =
        fit_ridge(&d, 1e-12).unwrap().theta.iter().zip(&ols.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if ridge_err >= 1e-6 {
        fails.push(format!("ridge(1e-12) vs ols {ridge_err:e}"));
    }
    let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0]
        .into_iter()
        .map(|l| fit_ridge(&d, l).unwrap().theta[1..].iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if !norms.windows(2).all(|w| w[0] >= w[1]) {
        fails.push(format!("ridge norms not shrinking {norms:?}"));
    }

    let (rows, y) = random_rows(&mut rng, 15, 1, true);
    let lambda = 3.0;
    let fit = fit_lasso(&DesignMatrix::new(&rows, &y).unwrap(), lambda).unwrap();
    let n = y.len() as f64;
    let objective = |b: f64| {
        let b0 = rows.iter().zip(&y).map(|(r, yi)| yi - b * r[1]).sum::<f64>() / n;
        rows.iter().zip(&y).map(|(r, yi)| (yi - b0 - b * r[1]).powi(2)).sum::<f64>() + lambda * b.abs()
    };
    let grid = grid_min(objective, -10.0, 10.0);
    if (fit.theta[1] - grid).abs() >= 1e-4 {
        fails.push(format!("lasso {} vs grid {grid}", fit.theta[1]));
    }
    let (rows, y) = random_rows(&mut rng, 30, 4, true);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let lambda_max = (1..5)
        .map(|j| 2.0 * rows.iter().zip(&y).map(|(r, yi)| r[j] * (yi - mean)).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let fit = fit_lasso(&DesignMatrix::new(&rows, &y).unwrap(), lambda_max).unwrap();
    if !fit.theta[1..].iter().all(|&b| b == 0.0) {
        fails.push(format!("lasso at lambda_max not all zero {:?}", fit.theta));
    }

    let d = DesignMatrix::new(&[vec![1.0], vec![1.0], vec![1.0]], &[1.0, 2.0, 3.0]).unwrap();
    let p = fit_poisson(&d).unwrap();
    if (p.theta[0] - 2f64.ln()).abs() >= 1e-6 {
        fails.push(format!("poisson intercept {}", p.theta[0]));
    }
    let rows: Vec<Vec<f64>> = (0..12).map(|k| vec![1.0, k as f64 / 11.0]).collect();
    let ys: Vec<f64> = (0..12).map(|k| [3.0, 4.0, 2.0, 6.0, 5.0, 7.0][k % 6] + (k / 3) as f64).collect();
    let p = fit_poisson(&DesignMatrix::new(&rows, &ys).unwrap()).unwrap();
    let fitted: f64 = rows.iter().map(|r| predict(&p, r).unwrap()).sum();
    let score_gap = (fitted - ys.iter().sum::<f64>()).abs();
    if score_gap >= 1e-6 {
        fails.push(format!("poisson score gap {score_gap:e}"));
    }

    let detail = if fails.is_empty() {
        format!("ols max err {ols_err:.1e}, ridge->ols {ridge_err:.1e}, poisson score gap {score_gap:.1e}")
    } else {
        fails.join("; ")
    };
    outcome("glm/linear correctness", fails.is_empty(), detail)
}

fn gradient_error<C: Cell>(cell: &C, xs: &[f64], ys: &[f64]) -> f64 {
    let (_, grad) = bptt_gradients(cell, xs, ys).unwrap();
    let loss = |flat: &[f64]| {
        let mut c = cell.clone();
        c.set_flat(flat);
        sequence_loss(&c, xs, ys).unwrap()
    };
    max_relative_error(&cell.to_flat(), &grad.to_flat(), loss, 1e-5, 1e-7)
}

fn gradient_checks() -> Outcome {
    let mut lstm_worst: f64 = 0.0;
    let mut gru_worst: f64 = 0.0;
    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        lstm_worst = lstm_worst.max(gradient_error(&LstmParams::random(2, 1, 0.5, &mut rng), &xs, &ys));
        gru_worst = gru_worst.max(gradient_error(&GruParams::random(2, 1, true, 0.5, &mut rng), &xs, &ys));
    }
    outcome(
        "recurrent gradient checks",
        lstm_worst < 1e-4 && gru_worst < 1e-4,
        format!("max relative error lstm {lstm_worst:.2e}, gru {gru_worst:.2e} (3 seeds each)"),
    )
}

fn zero_fixpoints() -> Outcome {
    let lstm = LstmParams::zeros(3, 1);
    let (_, steps) = saferoute::recurrent::forward_sequence(&lstm, &[0.7]).unwrap();
    let gates_half = [&steps[0].forget, &steps[0].input, &steps[0].output].iter().all(|g| g.iter().all(|&v| v == 0.5));
    let (s1, _) = lstm_step(&lstm, &lstm.initial_state(), &[0.7]).unwrap();
    let lstm_ok = gates_half && s1.h == vec![0.0; 3];

    let gru = GruParams::zeros(3, 1);
    let h0 = vec![0.9, -0.3, 0.25];
    let (g1, _) = gru_step(&gru, &CellState { h: h0.clone(), c: None }, &[0.4]).unwrap();
    let gru_ok = g1.h.iter().zip(&h0).all(|(a, b)| *a == 0.5 * b);
    outcome("zero-weight cell fixpoints", lstm_ok && gru_ok, format!("lstm gates/h {lstm_ok}, gru h1 = h0/2 {gru_ok}"))
}

fn fixture_splits() -> Vec<SplitSeries> {
    let graph = RouteGraph::from_csv(STATIONS_CSV).unwrap();
    let grid = BucketGrid::default_monthly();
    let (series, _) = station_series(&graph, INCIDENTS_CSV, DEFAULT_RADIUS_KM, &grid, Execution::Parallel).unwrap();
    series.iter().map(|s| split_train_test(s).unwrap()).collect()
}

fn rmse_harness() -> (Outcome, ComparisonReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.gen_range(1..40);
        let p: Vec<f64> = (0..k).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let a: Vec<f64> = (0..k).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let mut acc = 0.0;
        for i in 0..k {
            acc += (p[i] - a[i]) * (p[i] - a[i]);
        }
        worst = worst.max((rmse(&p, &a).unwrap() - (acc / k as f64).sqrt()).abs());
    }
    let splits = fixture_splits();
    let report = evaluate_all(&splits, &ModelKind::ALL, &ModelSettings::default(), Execution::Parallel).unwrap();
    let complete = report.per_model_average.len() == 6 && report.rows.len() + report.failures.len() == splits.len() * 6;
    let averages: Vec<String> =
        report.per_model_average.iter().map(|(m, v)| format!("{m} {v:.3}")).collect();
    let o = outcome(
        "rmse harness",
        worst <= 1e-12 && complete && report.averages_consistent(),
        format!(
            "loop oracle max diff {worst:.1e}; {} rows + {} failures over {} stations; averages {}",
            report.rows.len(),
            report.failures.len(),
            splits.len(),
            averages.join(", ")
        ),
    );
    (o, report)
}

fn determinism(first_report: &ComparisonReport) -> Outcome {
    let report = evaluate_all(&fixture_splits(), &ModelKind::ALL, &ModelSettings::default(), Execution::Sequential).unwrap();
    let eval_same = report.to_json() == first_report.to_json();

    let graph = RouteGraph::from_csv(STATIONS_CSV).unwrap().to_weighted().unwrap();
    let cfg = QLearningConfig { seed: 11, ..QLearningConfig::default() };
    let run = || {
        let (q, r) = q_learning(&graph, CORRIDOR_SOURCE, CORRIDOR_TARGET, &cfg).unwrap();
        let mut rep = r.report();
        rep.elapsed_seconds = 0.0;
        (q.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), serde_json::to_string(&rep).unwrap())
    };
    let q_same = run() == run();
    outcome(
        "determinism",
        eval_same && q_same,
        format!("evaluation report identical (parallel vs sequential) {eval_same}, q-table and route identical {q_same}"),
    )
}

fn main() {
    let mut results = vec![
        path_agreement(),
        exact_engine_oracle(),
        negative_cycles(),
        q_quality(),
        linear_models(),
        gradient_checks(),
        zero_fixpoints(),
    ];
    let (harness, report) = rmse_harness();
    results.push(harness);
    results.push(determinism(&report));

    for r in &results {
        println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
