use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::{assemble, Engine, RouteError, ShortestPathResult, WeightedDigraph};

#[derive(Debug, Clone, Copy)]
struct Entry {
    cost: f64,
    node: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // min-heap on (cost, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

/// Dijkstra from `source` to `target` with a binary heap.
pub fn dijkstra(g: &WeightedDigraph, source: &str, target: &str) -> Result<ShortestPathResult, RouteError> {
    dijkstra_with_trace(g, source, target).map(|(r, _)| r)
}

/// Like [`dijkstra`], also returning the distance of every station in the
/// order it was settled.
pub fn dijkstra_with_trace(
    g: &WeightedDigraph,
    source: &str,
    target: &str,
) -> Result<(ShortestPathResult, Vec<f64>), RouteError> {
    let start = Instant::now();
    let s = g.index_of(source)?;
    let t = g.index_of(target)?;
    if let Some((u, v, w)) = g.edges().find(|&(_, _, w)| w < 0.0) {
        return Err(RouteError::NegativeWeight { from: g.id(u).to_string(), to: g.id(v).to_string(), weight: w });
    }

    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Entry { cost: 0.0, node: s });
    while let Some(Entry { cost, node: u }) = heap.pop() {
        if settled[u] || cost > dist[u] {
            continue;
        }
        settled[u] = true;
        order.push(cost);
        for &(v, w) in g.out_edges(u) {
            let candidate = cost + w;
            if candidate < dist[v] {
                dist[v] = candidate;
                heap.push(Entry { cost: candidate, node: v });
            }
        }
    }
    let result = assemble(Engine::Dijkstra, g, &dist, s, t, start.elapsed(), order.len());
    Ok((result, order))
}

#[cfg(test)]
mod tests {
    use super::super::tests::graph;
    use super::*;

    #[test]
    fn source_equals_target() {
        let g = graph(&[("A", "B", 1.0)]);
        let r = dijkstra(&g, "A", "A").unwrap();
        assert_eq!(r.path, vec!["A"]);
        assert_eq!(r.total_cost, 0.0);
    }

    #[test]
    fn triangle() {
        let g = graph(&[("A", "B", 1.0), ("B", "C", 2.0), ("A", "C", 4.0)]);
        let r = dijkstra(&g, "A", "C").unwrap();
        assert_eq!(r.path, vec!["A", "B", "C"]);
        assert_eq!(r.total_cost, 3.0);
        assert_eq!(r.dist["A"], 0.0);
        assert_eq!(r.previous["C"], "B");
    }

    #[test]
    fn unreachable_target() {
        let g = graph(&[("A", "B", 1.0), ("C", "A", 1.0)]);
        let r = dijkstra(&g, "A", "C").unwrap();
        assert!(!r.found());
        assert!(r.dist["C"].is_infinite());
        assert!(r.report().total_cost.is_none());
    }

    #[test]
    fn negative_weight_refused() {
        let g = graph(&[("A", "B", -1.0)]);
        assert!(matches!(dijkstra(&g, "A", "B"), Err(RouteError::NegativeWeight { .. })));
    }

    #[test]
    fn unknown_station() {
        let g = graph(&[("A", "B", 1.0)]);
        assert_eq!(dijkstra(&g, "A", "Z").unwrap_err(), RouteError::UnknownStation("Z".into()));
    }

    #[test]
    fn equal_costs_prefer_smaller_predecessor() {
        let g = graph(&[("s", "b", 1.0), ("s", "a", 1.0), ("a", "t", 1.0), ("b", "t", 1.0)]);
        assert_eq!(dijkstra(&g, "s", "t").unwrap().path, vec!["s", "a", "t"]);
    }

    #[test]
    fn zero_weight_cycle_terminates() {
        let g = graph(&[("s", "a", 0.0), ("a", "b", 0.0), ("b", "a", 0.0), ("b", "t", 1.0)]);
        let r = dijkstra(&g, "s", "t").unwrap();
        assert_eq!(r.path, vec!["s", "a", "b", "t"]);
    }
}
