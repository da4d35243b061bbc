#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saferoute::WeightedDigraph;

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

/// `n` uniform in `min_n..=max_n`, each ordered pair an edge with
/// probability `p`, integer weights in `0..=max_w`.
pub fn random_graph(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize, p: f64, max_w: u32) -> WeightedDigraph {
    let n = rng.gen_range(min_n..=max_n);
    let names = ids(n);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen::<f64>() < p {
                edges.push((names[u].clone(), names[v].clone(), rng.gen_range(0..=max_w) as f64));
            }
        }
    }
    WeightedDigraph::from_edges(names, edges).unwrap()
}

/// Graph for the Q-learning quality sweep: at most 12 nodes, edge
/// probability 0.3, weights 0..=10, redrawn until the last node is
/// reachable from the first.
pub fn reachable_graph(seed: u64) -> WeightedDigraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = random_graph(&mut rng, 4, 12, 0.3, 10);
        let n = g.node_count();
        if saferoute::routing::dijkstra(&g, g.id(0), g.id(n - 1)).unwrap().found() {
            return g;
        }
    }
}

/// Graph with non-negative weights plus one negative 3-cycle reachable from
/// node 0.
pub fn negative_cycle_graph(seed: u64) -> WeightedDigraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=10);
    let names = ids(n);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen::<f64>() < 0.25 {
                edges.push((u, v, rng.gen_range(1..=10) as f64));
            }
        }
    }
    let mut cycle: Vec<usize> = (1..n).collect();
    for i in (1..cycle.len()).rev() {
        cycle.swap(i, rng.gen_range(0..=i));
    }
    let (a, b, c) = (cycle[0], cycle[1], cycle[2]);
    edges.retain(|&(u, v, _)| ![(a, b), (b, c), (c, a), (0, a)].contains(&(u, v)));
    edges.push((0, a, rng.gen_range(1..=10) as f64));
    edges.push((a, b, 1.0));
    edges.push((b, c, 1.0));
    edges.push((c, a, -(rng.gen_range(3..=10) as f64)));
    let edges = edges.into_iter().map(|(u, v, w)| (names[u].clone(), names[v].clone(), w)).collect();
    WeightedDigraph::from_edges(names, edges).unwrap()
}

/// Every simple path starting at `source`, as node indices.
pub fn enumerate_paths(g: &WeightedDigraph, source: usize) -> Vec<Vec<usize>> {
    fn walk(g: &WeightedDigraph, path: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
        out.push(path.clone());
        let u = *path.last().unwrap();
        for &(v, _) in g.out_edges(u) {
            if !on[v] {
                on[v] = true;
                path.push(v);
                walk(g, path, on, out);
                path.pop();
                on[v] = false;
            }
        }
    }
    let mut on = vec![false; g.node_count()];
    on[source] = true;
    let mut out = Vec::new();
    walk(g, &mut vec![source], &mut on, &mut out);
    out
}

pub fn cost(g: &WeightedDigraph, path: &[usize]) -> f64 {
    path.windows(2).map(|p| g.weight(p[0], p[1]).unwrap()).sum()
}

/// Brute-force distances from `source` and the canonical route to each
/// node: cheapest, then fewest hops, then the reversed node sequence that
/// is lexicographically smallest.
pub struct Enumerated {
    pub dist: Vec<f64>,
    pub best: Vec<Option<Vec<usize>>>,
}

pub fn brute_force(g: &WeightedDigraph, source: usize) -> Enumerated {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut best: Vec<Option<Vec<usize>>> = vec![None; n];
    for p in enumerate_paths(g, source) {
        let t = *p.last().unwrap();
        let c = cost(g, &p);
        let better = match &best[t] {
            None => true,
            Some(b) => {
                let bc = cost(g, b);
                c < bc
                    || (c == bc && p.len() < b.len())
                    || (c == bc && p.len() == b.len() && p.iter().rev().lt(b.iter().rev()))
            }
        };
        if better {
            dist[t] = c;
            best[t] = Some(p);
        }
    }
    Enumerated { dist, best }
}

pub fn names(g: &WeightedDigraph, path: &[usize]) -> Vec<String> {
    path.iter().map(|&i| g.id(i).to_string()).collect()
}

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Solves XᵀX θ = Xᵀy by elimination.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..p {
            b[i] += row[i] * yi;
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    gauss_solve(a, b)
}

/// Minimizes a unimodal scalar function on `[lo, hi]` by repeated grid
/// refinement.
pub fn grid_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..60 {
        let step = (hi - lo) / 200.0;
        let best = (0..=200)
            .map(|k| lo + k as f64 * step)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        lo = best - step;
        hi = best + step;
    }
    0.5 * (lo + hi)
}

/// Central finite-difference check of `grad` against `loss` over every
/// coordinate of `params`. Returns the largest relative error, with the
/// denominator floored at `floor`.
pub fn max_relative_error(
    params: &[f64],
    grad: &[f64],
    loss: impl Fn(&[f64]) -> f64,
    eps: f64,
    floor: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for k in 0..params.len() {
        p[k] = params[k] + eps;
        let up = loss(&p);
        p[k] = params[k] - eps;
        let down = loss(&p);
        p[k] = params[k];
        let numeric = (up - down) / (2.0 * eps);
        let err = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
