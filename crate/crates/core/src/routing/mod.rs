//! Route search over safety × time edge weights.
//!
//! Three interchangeable engines share one input ([`WeightedDigraph`]) and
//! one output ([`ShortestPathResult`]):
//!
//! * [`dijkstra`]: binary-heap Dijkstra, non-negative weights only;
//! * [`bellman_ford`]: `|V| − 1` relaxation rounds plus a negative-cycle check;
//! * [`q_learning`]: tabular Q-learning on the reward table built by
//!   [`build_reward_matrix`], followed by greedy path extraction.
//!
//! The two exact engines resolve equal-cost routes the same way: among all
//! cheapest routes, take the fewest hops, then at each station walking back
//! from the target prefer the predecessor with the smallest id.

mod bellman_ford;
mod dijkstra;
mod qlearning;

pub use bellman_ford::bellman_ford;
pub use dijkstra::{dijkstra, dijkstra_with_trace};
pub use qlearning::{
    build_reward_matrix, extract_path, q_learning, q_update, QLearningConfig, QTable, RewardMatrix,
    GOAL_REWARD, NO_EDGE_REWARD,
};

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("unknown station {0:?}")]
    UnknownStation(String),
    #[error("negative edge weight {weight} on {from} -> {to}; use bellman-ford")]
    NegativeWeight { from: String, to: String, weight: f64 },
    #[error("negative cycle exists")]
    NegativeCycle,
    #[error("policy not converged: greedy walk revisits a station (partial path {})", .partial.join(" -> "))]
    NotConverged { partial: Vec<String> },
    #[error("invalid q-learning config: {0}")]
    Config(String),
    #[error("edge list: {0}")]
    EdgeList(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "dijkstra")]
    Dijkstra,
    #[serde(rename = "bellman-ford")]
    BellmanFord,
    #[serde(rename = "q-learning")]
    QLearning,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Dijkstra, Engine::BellmanFord, Engine::QLearning];

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Dijkstra => "dijkstra",
            Engine::BellmanFord => "bellman-ford",
            Engine::QLearning => "q-learning",
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown engine {s:?} (dijkstra|bellman-ford|q-learning)"))
    }
}

/// Directed graph with dense node indices. Node `i` is the `i`-th id in
/// sorted order, so comparing indices compares ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedDigraph {
    /// Builds the graph from node ids and `(from, to, weight)` edges.
    /// Endpoints missing from `ids` are added. Parallel edges keep the
    /// smallest weight.
    pub fn from_edges<I>(ids: I, edges: Vec<(String, String, f64)>) -> Result<WeightedDigraph, RouteError>
    where
        I: IntoIterator<Item = String>,
    {
        let mut names: BTreeSet<String> = ids.into_iter().collect();
        for (a, b, w) in &edges {
            if !w.is_finite() {
                return Err(RouteError::EdgeList(format!("non-finite weight on {a} -> {b}")));
            }
            names.insert(a.clone());
            names.insert(b.clone());
        }
        let ids: Vec<String> = names.into_iter().collect();
        let index: HashMap<String, usize> = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            let key = (index[&a], index[&b]);
            best.entry(key).and_modify(|v| *v = v.min(w)).or_insert(w);
        }
        let mut adj = vec![Vec::new(); ids.len()];
        for ((u, v), w) in best {
            adj[u].push((v, w));
        }
        Ok(WeightedDigraph { ids, index, adj })
    }

    /// Parses a `from,to,weight` CSV edge list.
    pub fn from_edge_csv(text: &str) -> Result<WeightedDigraph, RouteError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| RouteError::EdgeList(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| RouteError::EdgeList(format!("missing column {name:?}")))
        };
        let (cf, ct, cw) = (col("from")?, col("to")?, col("weight")?);
        let mut edges = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| RouteError::EdgeList(format!("line {line}: {e}")))?;
            let w: f64 = rec[cw]
                .parse()
                .map_err(|_| RouteError::EdgeList(format!("line {line}: bad weight {:?}", &rec[cw])))?;
            edges.push((rec[cf].to_string(), rec[ct].to_string(), w));
        }
        WeightedDigraph::from_edges(Vec::new(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize, RouteError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| RouteError::UnknownStation(id.to_string()))
    }

    /// Outgoing `(target, weight)` pairs in target order.
    pub fn out_edges(&self, u: usize) -> &[(usize, f64)] {
        &self.adj[u]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.adj[u].iter().find(|(t, _)| *t == v).map(|&(_, w)| w)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, out)| out.iter().map(move |&(v, w)| (u, v, w)))
    }

    /// Sum of edge weights along `path`, or `None` if a hop is not an edge.
    pub fn path_cost(&self, path: &[String]) -> Option<f64> {
        let mut total = 0.0;
        for pair in path.windows(2) {
            let u = self.index.get(&pair[0])?;
            let v = self.index.get(&pair[1])?;
            total += self.weight(*u, *v)?;
        }
        Some(total)
    }

    pub(crate) fn reachable_from(&self, source: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([source]);
        seen[source] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

/// Output of every engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathResult {
    pub engine: Engine,
    pub source: String,
    pub target: String,
    /// Cost from the source; unreachable stations map to `f64::INFINITY`.
    /// Q-learning only fills in the stations on its path.
    pub dist: BTreeMap<String, f64>,
    pub previous: BTreeMap<String, String>,
    /// Source to target; empty when the target is unreachable.
    pub path: Vec<String>,
    /// `f64::INFINITY` when the target is unreachable.
    pub total_cost: f64,
    pub elapsed: Duration,
    /// Settled nodes (Dijkstra), relaxation rounds (Bellman-Ford) or episodes (Q-learning).
    pub work: usize,
}

impl ShortestPathResult {
    pub fn found(&self) -> bool {
        !self.path.is_empty()
    }

    pub fn report(&self) -> RouteReport {
        RouteReport {
            engine: self.engine,
            path: self.path.clone(),
            total_cost: self.found().then_some(self.total_cost),
            elapsed_seconds: self.elapsed.as_secs_f64(),
            settled_or_episodes: self.work,
        }
    }
}

/// JSON shape of a route answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub engine: Engine,
    pub path: Vec<String>,
    pub total_cost: Option<f64>,
    pub elapsed_seconds: f64,
    pub settled_or_episodes: usize,
}

fn tight(du: f64, w: f64, dv: f64) -> bool {
    du.is_finite() && dv.is_finite() && ((du + w) - dv).abs() <= 1e-9 * dv.abs().max(1.0)
}

/// Predecessor tree implementing the shared tie-break: hop counts are
/// measured over "tight" edges (those lying on some cheapest route), and
/// each station's predecessor is the smallest-index tight neighbour one hop
/// closer to the source.
pub(crate) fn canonical_predecessors(g: &WeightedDigraph, dist: &[f64], source: usize) -> Vec<Option<usize>> {
    let n = g.node_count();
    let mut hops = vec![usize::MAX; n];
    hops[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &(v, w) in g.out_edges(u) {
            if hops[v] == usize::MAX && tight(dist[u], w, dist[v]) {
                hops[v] = hops[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut prev = vec![None; n];
    for (u, v, w) in g.edges() {
        if v == source || hops[v] == usize::MAX || hops[u] == usize::MAX {
            continue;
        }
        if hops[u] + 1 == hops[v] && tight(dist[u], w, dist[v]) && prev[v].is_none_or(|p| u < p) {
            prev[v] = Some(u);
        }
    }
    prev
}

/// Packs distances and predecessors into a [`ShortestPathResult`].
pub(crate) fn assemble(
    engine: Engine,
    g: &WeightedDigraph,
    dist: &[f64],
    source: usize,
    target: usize,
    elapsed: Duration,
    work: usize,
) -> ShortestPathResult {
    let prev = canonical_predecessors(g, dist, source);
    let mut path = Vec::new();
    if dist[target].is_finite() {
        let mut cur = target;
        path.push(cur);
        while cur != source {
            cur = prev[cur].expect("reachable station has a predecessor");
            path.push(cur);
        }
        path.reverse();
    }
    ShortestPathResult {
        engine,
        source: g.id(source).to_string(),
        target: g.id(target).to_string(),
        dist: (0..g.node_count()).map(|i| (g.id(i).to_string(), dist[i])).collect(),
        previous: prev
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|u| (g.id(v).to_string(), g.id(u).to_string())))
            .collect(),
        total_cost: dist[target],
        path: path.into_iter().map(|i| g.id(i).to_string()).collect(),
        elapsed,
        work,
    }
}

/// Checks that `path` is a single unit of flow from `source` to `sink`:
/// the source sends one unit, the sink absorbs one, every other station on
/// the path passes exactly one through, and every hop is an edge.
pub fn is_unit_flow(g: &WeightedDigraph, path: &[String], source: &str, sink: &str) -> bool {
    if path.first().map(String::as_str) != Some(source) || path.last().map(String::as_str) != Some(sink) {
        return false;
    }
    if path.len() == 1 {
        return source == sink;
    }
    if g.path_cost(path).is_none() {
        return false;
    }
    let mut out_deg: HashMap<&str, i64> = HashMap::new();
    let mut in_deg: HashMap<&str, i64> = HashMap::new();
    for pair in path.windows(2) {
        *out_deg.entry(&pair[0]).or_default() += 1;
        *in_deg.entry(&pair[1]).or_default() += 1;
    }
    path.iter().all(|node| {
        let (o, i) = (out_deg.get(node.as_str()).copied().unwrap_or(0), in_deg.get(node.as_str()).copied().unwrap_or(0));
        if node == source {
            o == 1 && i == 0
        } else if node == sink {
            o == 0 && i == 1
        } else {
            o == 1 && i == 1
        }
    })
}
