use std::time::Instant;

use super::{assemble, Engine, RouteError, ShortestPathResult, WeightedDigraph};

/// Bellman-Ford from `source`. Negative weights are fine; a negative cycle
/// reachable from `source` is an error.
pub fn bellman_ford(g: &WeightedDigraph, source: &str, target: &str) -> Result<ShortestPathResult, RouteError> {
    let start = Instant::now();
    let s = g.index_of(source)?;
    let t = g.index_of(target)?;
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    dist[s] = 0.0;

    let relax = |dist: &mut [f64]| {
        let mut changed = false;
        for (u, v, w) in g.edges() {
            if dist[u].is_finite() && dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        changed
    };

    let mut rounds = 0;
    for _ in 1..n {
        rounds += 1;
        if !relax(&mut dist) {
            break;
        }
    }
    if relax(&mut dist.clone()) {
        return Err(RouteError::NegativeCycle);
    }
    Ok(assemble(Engine::BellmanFord, g, &dist, s, t, start.elapsed(), rounds))
}
