use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Engine, RouteError, ShortestPathResult, WeightedDigraph};

/// Reward for any move into the goal.
pub const GOAL_REWARD: f64 = 100.0;
/// Reward table entry for a pair of stations with no segment between them.
pub const NO_EDGE_REWARD: f64 = -99.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearningConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub episodes: usize,
    pub seed: u64,
    pub max_steps_per_episode: usize,
    /// Let the agent pick non-edges too (it stays put and collects
    /// [`NO_EDGE_REWARD`]). Off by default.
    pub allow_invalid_actions: bool,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            learning_rate: 0.8,
            discount: 0.8,
            epsilon: 1.0,
            epsilon_decay: 0.999,
            epsilon_min: 0.05,
            episodes: 10_000,
            seed: 0,
            max_steps_per_episode: 200,
            allow_invalid_actions: false,
        }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<(), RouteError> {
        let bad = |m: String| Err(RouteError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning rate {} not in (0, 1]", self.learning_rate));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount {} not in (0, 1)", self.discount));
        }
        for (name, v) in [("epsilon", self.epsilon), ("epsilon_min", self.epsilon_min), ("epsilon_decay", self.epsilon_decay)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} not in [0, 1]"));
            }
        }
        if self.episodes == 0 || self.max_steps_per_episode == 0 {
            return bad("episodes and max_steps_per_episode must be positive".into());
        }
        Ok(())
    }
}

/// Square reward table indexed by `[from][to]` node index.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    n: usize,
    goal: usize,
    values: Vec<f64>,
}

impl RewardMatrix {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.values[from * self.n + to]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn goal(&self) -> usize {
        self.goal
    }
}

/// `−weight` for every segment, [`NO_EDGE_REWARD`] for non-adjacent pairs
/// (including the diagonal), and [`GOAL_REWARD`] for every segment that
/// enters `goal`.
pub fn build_reward_matrix(g: &WeightedDigraph, goal: &str) -> Result<RewardMatrix, RouteError> {
    let goal = g.index_of(goal)?;
    let n = g.node_count();
    let mut values = vec![NO_EDGE_REWARD; n * n];
    for (u, v, w) in g.edges() {
        if u != v {
            values[u * n + v] = if v == goal { GOAL_REWARD } else { -w };
        }
    }
    Ok(RewardMatrix { n, goal, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n: usize,
    values: Vec<f64>,
    visits: Vec<u32>,
}

impl QTable {
    pub fn zeros(n: usize) -> QTable {
        QTable { n, values: vec![0.0; n * n], visits: vec![0; n * n] }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n + a] = v;
    }

    pub fn visits(&self, s: usize, a: usize) -> u32 {
        self.visits[s * self.n + a]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The temporal-difference update `Q + α·(r + γ·max Q' − Q)`.
pub fn q_update(q: f64, reward: f64, next_max: f64, learning_rate: f64, discount: f64) -> f64 {
    q + learning_rate * (reward + discount * next_max - q)
}

fn actions(g: &WeightedDigraph, s: usize, all: bool) -> Vec<usize> {
    if all {
        (0..g.node_count()).filter(|&a| a != s).collect()
    } else {
        g.out_edges(s).iter().map(|&(v, _)| v).collect()
    }
}

/// Highest-valued action, lowest index on ties.
fn argmax(q: &QTable, s: usize, acts: &[usize]) -> Option<usize> {
    acts.iter().copied().fold(None, |best, a| match best {
        Some(b) if q.get(s, b) >= q.get(s, a) => Some(b),
        _ => Some(a),
    })
}

/// Trains a Q-table with ε-greedy episodes from random start stations, then
/// reads off the greedy route from `source`.
pub fn q_learning(
    g: &WeightedDigraph,
    source: &str,
    goal: &str,
    cfg: &QLearningConfig,
) -> Result<(QTable, ShortestPathResult), RouteError> {
    let start = Instant::now();
    cfg.validate()?;
    let s0 = g.index_of(source)?;
    let goal_idx = g.index_of(goal)?;
    let rewards = build_reward_matrix(g, goal)?;
    let n = g.node_count();
    let mut q = QTable::zeros(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let action_sets: Vec<Vec<usize>> = (0..n).map(|s| actions(g, s, cfg.allow_invalid_actions)).collect();
    let starts: Vec<usize> = (0..n).filter(|&s| s != goal_idx).collect();

    let mut epsilon = cfg.epsilon;
    if !starts.is_empty() {
        for _ in 0..cfg.episodes {
            let mut s = starts[rng.gen_range(0..starts.len())];
            for _ in 0..cfg.max_steps_per_episode {
                let acts = &action_sets[s];
                if acts.is_empty() {
                    break;
                }
                let a = if rng.gen::<f64>() < epsilon {
                    acts[rng.gen_range(0..acts.len())]
                } else {
                    argmax(&q, s, acts).expect("non-empty action set")
                };
                let valid = g.weight(s, a).is_some();
                let next = if valid { a } else { s };
                let reward = rewards.get(s, a);
                let next_max = if next == goal_idx {
                    0.0
                } else {
                    argmax(&q, next, &action_sets[next]).map_or(0.0, |b| q.get(next, b))
                };
                let updated = q_update(q.get(s, a), reward, next_max, cfg.learning_rate, cfg.discount);
                q.set(s, a, updated);
                q.visits[s * n + a] += 1;
                s = next;
                if s == goal_idx {
                    break;
                }
            }
            epsilon = (epsilon * cfg.epsilon_decay).max(cfg.epsilon_min);
        }
    }

    let mut result = ShortestPathResult {
        engine: Engine::QLearning,
        source: source.to_string(),
        target: goal.to_string(),
        dist: BTreeMap::new(),
        previous: BTreeMap::new(),
        path: Vec::new(),
        total_cost: f64::INFINITY,
        elapsed: start.elapsed(),
        work: cfg.episodes,
    };
    if !g.reachable_from(s0)[goal_idx] {
        result.dist.insert(goal.to_string(), f64::INFINITY);
        return Ok((q, result));
    }
    let path = extract_path(&q, g, source, goal)?;
    let mut cost = 0.0;
    result.dist.insert(path[0].clone(), 0.0);
    for pair in path.windows(2) {
        let (u, v) = (g.index_of(&pair[0])?, g.index_of(&pair[1])?);
        cost += g.weight(u, v).expect("greedy path follows edges");
        result.dist.insert(pair[1].clone(), cost);
        result.previous.insert(pair[1].clone(), pair[0].clone());
    }
    result.total_cost = cost;
    result.path = path;
    result.elapsed = start.elapsed();
    Ok((q, result))
}

/// Follows the greedy action over existing segments from `source` until
/// `goal`. Ties go to the lowest station id; revisiting a station, or
/// reaching one with no way out, means the policy has not converged.
pub fn extract_path(q: &QTable, g: &WeightedDigraph, source: &str, goal: &str) -> Result<Vec<String>, RouteError> {
    let mut s = g.index_of(source)?;
    let goal = g.index_of(goal)?;
    let mut seen = vec![false; g.node_count()];
    let mut path = vec![s];
    seen[s] = true;
    let names = |p: &[usize]| p.iter().map(|&i| g.id(i).to_string()).collect::<Vec<_>>();
    while s != goal {
        let acts = actions(g, s, false);
        let Some(a) = argmax(q, s, &acts) else {
            return Err(RouteError::NotConverged { partial: names(&path) });
        };
        path.push(a);
        if seen[a] {
            return Err(RouteError::NotConverged { partial: names(&path) });
        }
        seen[a] = true;
        s = a;
    }
    Ok(names(&path))
}
