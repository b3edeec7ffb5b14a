//! Search benchmarks and figure data: heuristic against true remaining
//! value, A* against exhaustive DFS, ad-hoc against precomputed weighting.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::graph::{Category, LocationGraph};
use crate::lang::Program;
use crate::lattice::Scalar;
use crate::learn::{category_distances, pair_rule, rule_header};
use crate::score::{precompute_weights, HeuristicMode, Scorer, WeightedGraph};
use crate::search::{
    abduce, astar_leg, dfs_exhaustive, dfs_from, AbduceOptions, AstarOptions, Leg, Observation,
    ObservationSet, SearchError,
};

/// A pair rule for every graph-possible landmark pair and hop up to
/// `n_max`, with seeded confidences on a 0.05 grid in `[0.5, 1]`.
pub fn dense_program(g: &LocationGraph, agent: &str, n_max: u32, seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = category_distances(g);
    let mut p = rule_header(&[agent.to_string()]);
    for n in 1..=n_max {
        for (&(a, b), &d) in &dist {
            if d <= n {
                let conf = Scalar::from_micros(500_000 + 50_000 * rng.gen_range(0..=10))
                    .expect("in range");
                p.rules.push(pair_rule(a, b, n, conf));
            }
        }
    }
    p
}

/// Sparse variant: each candidate rule kept with probability `keep`.
pub fn sparse_program(g: &LocationGraph, agent: &str, n_max: u32, keep: f64, seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut p = dense_program(g, agent, n_max, seed);
    p.rules.retain(|_| rng.gen_bool(keep));
    p
}

/// Random feasible leg whose duration exceeds the hop distance by at most
/// `slack`.
pub fn random_leg(g: &LocationGraph, rng: &mut ChaCha8Rng, max_hops: u32, slack: u32) -> Leg {
    loop {
        let from = rng.gen_range(0..g.len());
        let dist = g.bfs_distances(from);
        let pool: Vec<usize> = (0..g.len()).filter(|&v| dist[v] <= max_hops).collect();
        let to = pool[rng.gen_range(0..pool.len())];
        let d = dist[to] + rng.gen_range(0..=slack);
        if d > 0 {
            return Leg {
                from,
                t0: 1,
                to,
                t1: 1 + d,
            };
        }
    }
}

/// Observations chaining `legs` random legs from a random start, each at
/// most `max_hops` long with up to `slack` extra steps.
pub fn random_observations(
    g: &LocationGraph,
    rng: &mut ChaCha8Rng,
    agent: &str,
    legs: usize,
    max_hops: u32,
    slack: u32,
) -> ObservationSet {
    let mut at = rng.gen_range(0..g.len());
    let mut t = 1;
    let mut obs = vec![Observation {
        time: t,
        node: g.node(at).id.clone(),
    }];
    for _ in 0..legs {
        let dist = g.bfs_distances(at);
        let pool: Vec<usize> = (0..g.len()).filter(|&v| dist[v] <= max_hops).collect();
        let to = pool[rng.gen_range(0..pool.len())];
        t += dist[to].max(1) + rng.gen_range(0..=slack);
        obs.push(Observation {
            time: t,
            node: g.node(to).id.clone(),
        });
        at = to;
    }
    ObservationSet::new(agent, obs, &[]).expect("strictly increasing times")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScatterRow {
    pub node: usize,
    pub time: u32,
    pub heuristic: u64,
    pub actual: u64,
}

/// For every state A* expands on `leg`, the heuristic value and the optimal
/// remaining value found by exhaustive enumeration from that state.
pub fn heuristic_scatter(
    scorer: &mut Scorer<'_>,
    leg: &Leg,
    mode: HeuristicMode,
) -> Result<Vec<ScatterRow>, SearchError> {
    let mut gw = precompute_weights(scorer);
    let (_, trace) = astar_leg(leg, scorer, &mut gw, AstarOptions { mode, trace: true })?;
    let mut rows = Vec::with_capacity(trace.len());
    for s in trace {
        let out = dfs_from(
            scorer,
            s.node,
            s.time,
            s.window.clone(),
            leg.to,
            leg.t1,
            None,
        );
        let actual = out.best.map(|b| b.0).unwrap_or(crate::score::INFEASIBLE);
        rows.push(ScatterRow {
            node: s.node,
            time: s.time,
            heuristic: s.h,
            actual,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeRow {
    pub leg: String,
    pub astar_ms: f64,
    pub astar_expansions: u64,
    pub astar_cost: u64,
    pub dfs_ms: f64,
    pub dfs_expansions: u64,
    pub dfs_timed_out: bool,
    pub dfs_cost: Option<u64>,
}

/// Times A* (fresh weights and memo) against budgeted DFS on one leg.
pub fn runtime_row(
    program: &Program,
    g: &LocationGraph,
    agent: &str,
    leg: &Leg,
    mode: HeuristicMode,
    budget: Duration,
) -> Result<RuntimeRow, SearchError> {
    let mut scorer = Scorer::new(program, g, agent)?;
    let started = Instant::now();
    let mut gw = precompute_weights(&scorer);
    let (seg, _) = astar_leg(
        leg,
        &mut scorer,
        &mut gw,
        AstarOptions { mode, trace: false },
    )?;
    let astar_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut scorer = Scorer::new(program, g, agent)?;
    let started = Instant::now();
    let (dfs_cost, dfs_expansions, dfs_timed_out) =
        match dfs_exhaustive(leg, &mut scorer, Some(budget)) {
            Ok(s) => (Some(s.cost), s.stats.expansions, false),
            Err(SearchError::Budget { expansions, .. }) => (None, expansions, true),
            Err(e) => return Err(e),
        };
    Ok(RuntimeRow {
        leg: format!(
            "{}@{}->{}@{}",
            g.node(leg.from).id,
            leg.t0,
            g.node(leg.to).id,
            leg.t1
        ),
        astar_ms,
        astar_expansions: seg.stats.expansions,
        astar_cost: seg.cost,
        dfs_ms: started.elapsed().as_secs_f64() * 1e3,
        dfs_expansions,
        dfs_timed_out,
        dfs_cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdhocRow {
    pub agent: String,
    pub total_edges: usize,
    pub precomputed: usize,
    pub adhoc: usize,
    pub expanded_nodes: usize,
    pub graph_nodes: usize,
    pub identical: bool,
    pub precomputed_ms: f64,
    pub adhoc_ms: f64,
}

/// Abduces `o` with precomputed Dijkstra weighting and with ad-hoc depth-1
/// weighting, and compares trajectories, values and weight counts.
pub fn adhoc_row(
    program: &Program,
    g: &LocationGraph,
    o: &ObservationSet,
) -> Result<AdhocRow, SearchError> {
    let mut s1 = Scorer::new(program, g, &o.agent)?;
    let started = Instant::now();
    let (e1, _, st1) = abduce(
        &mut s1,
        o,
        AbduceOptions {
            mode: HeuristicMode::Dijkstra,
            adhoc: false,
        },
    )?;
    let precomputed_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut s2 = Scorer::new(program, g, &o.agent)?;
    let started = Instant::now();
    let (e2, _, st2) = abduce(
        &mut s2,
        o,
        AbduceOptions {
            mode: HeuristicMode::Depth1,
            adhoc: true,
        },
    )?;
    let adhoc_ms = started.elapsed().as_secs_f64() * 1e3;
    let expanded = expanded_nodes(program, g, o)?;
    Ok(AdhocRow {
        agent: o.agent.clone(),
        total_edges: st1.total_edges,
        precomputed: st1.weights_computed,
        adhoc: st2.weights_computed,
        expanded_nodes: expanded,
        graph_nodes: g.len(),
        identical: e1.nodes == e2.nodes && e1.total_value == e2.total_value,
        precomputed_ms,
        adhoc_ms,
    })
}

/// Distinct nodes expanded by ad-hoc depth-1 search over all legs of `o`.
fn expanded_nodes(
    program: &Program,
    g: &LocationGraph,
    o: &ObservationSet,
) -> Result<usize, SearchError> {
    let mut scorer = Scorer::new(program, g, &o.agent)?;
    let mut gw = WeightedGraph::empty(g);
    let mut seen = BTreeSet::new();
    for leg in crate::search::decompose(o, g)? {
        let (_, trace) = astar_leg(
            &leg,
            &mut scorer,
            &mut gw,
            AstarOptions {
                mode: HeuristicMode::Depth1,
                trace: true,
            },
        )?;
        seen.extend(trace.iter().map(|s| s.node));
    }
    Ok(seen.len())
}

/// Serialises rows as CSV text with a header.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Landmark categories present in `g`.
pub fn present_categories(g: &LocationGraph) -> BTreeSet<Category> {
    g.nodes()
        .iter()
        .map(|n| n.category)
        .filter(|c| c.is_landmark())
        .collect()
}
