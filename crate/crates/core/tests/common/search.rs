//! Search fixtures and independent checks on A*, DFS and abduced output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajabduce::bench::{
    adhoc_row, dense_program, heuristic_scatter, random_leg, random_observations, sparse_program,
    AdhocRow,
};
use trajabduce::fixpoint::gamma_star;
use trajabduce::graph::{synth_graph, CategoryMix, LocationGraph, SynthKind};
use trajabduce::lang::Program;
use trajabduce::lattice::Interpretation;
use trajabduce::score::{
    precompute_weights, value, Heuristic, HeuristicMode, Scorer, WeightedGraph, INFEASIBLE,
};
use trajabduce::search::{
    abduce, astar_leg, dfs_exhaustive, program_with_positions, AbduceOptions, AstarOptions,
    ExplanationTrajectory, Leg, ObservationSet,
};

pub const AGENT: &str = "a1";
pub const MODES: [HeuristicMode; 3] = [
    HeuristicMode::Dijkstra,
    HeuristicMode::Depth1,
    HeuristicMode::None,
];

/// Seeded random-geometric graph with `lo..=hi` nodes and a dense or sparse
/// pair-rule program.
pub fn fixture(seed: u64, lo: usize, hi: usize) -> (LocationGraph, Program) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(lo..=hi);
    let mix = if rng.gen_bool(0.5) {
        CategoryMix::uniform()
    } else {
        CategoryMix::city()
    };
    let g = synth_graph(SynthKind::RandomGeometric, n, seed, &mix).expect("synthetic graph");
    let n_max = rng.gen_range(1..=3);
    let p = if rng.gen_bool(0.5) {
        dense_program(&g, AGENT, n_max, seed)
    } else {
        sparse_program(&g, AGENT, n_max, 0.5, seed)
    };
    (g, p)
}

pub fn leg_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5)
}

/// A leg of total duration at most `horizon`.
pub fn bounded_leg(g: &LocationGraph, rng: &mut ChaCha8Rng, horizon: u32) -> Leg {
    loop {
        let leg = random_leg(g, rng, horizon - 1, 3);
        if leg.t1 <= horizon {
            return leg;
        }
    }
}

/// A* cost under every heuristic mode equals the exhaustive DFS cost.
/// Returns the optimum.
pub fn astar_matches_dfs(g: &LocationGraph, p: &Program, leg: &Leg) -> Result<u64, String> {
    let mut s = Scorer::new(p, g, AGENT).map_err(|e| e.to_string())?;
    let dfs = dfs_exhaustive(leg, &mut s, None).map_err(|e| e.to_string())?;
    for mode in MODES {
        for adhoc in [false, true] {
            let mut s = Scorer::new(p, g, AGENT).map_err(|e| e.to_string())?;
            let mut gw = if adhoc {
                WeightedGraph::empty(g)
            } else {
                precompute_weights(&s)
            };
            let (seg, _) = astar_leg(leg, &mut s, &mut gw, AstarOptions { mode, trace: false })
                .map_err(|e| e.to_string())?;
            if seg.cost != dfs.cost {
                return Err(format!(
                    "{leg:?} {mode} adhoc={adhoc}: A* {} vs DFS {}",
                    seg.cost, dfs.cost
                ));
            }
            if seg.nodes.len() as u32 != leg.duration() + 1 {
                return Err(format!(
                    "{leg:?}: A* path has {} positions",
                    seg.nodes.len()
                ));
            }
        }
    }
    Ok(dfs.cost)
}

/// Heuristic values of every state A* expands, against the DFS optimum from
/// that state. Returns (states checked, violations).
pub fn admissibility(
    g: &LocationGraph,
    p: &Program,
    leg: &Leg,
    mode: HeuristicMode,
) -> Result<(usize, usize), String> {
    let mut s = Scorer::new(p, g, AGENT).map_err(|e| e.to_string())?;
    let rows = heuristic_scatter(&mut s, leg, mode).map_err(|e| e.to_string())?;
    let bad = rows.iter().filter(|r| r.heuristic > r.actual).count();
    Ok((rows.len(), bad))
}

/// `h(u) <= w(u,v) + h(v)` over every finite edge for the Dijkstra heuristic.
pub fn dijkstra_consistent(g: &LocationGraph, p: &Program, goal: usize) -> Result<(), String> {
    let s = Scorer::new(p, g, AGENT).map_err(|e| e.to_string())?;
    let mut gw = precompute_weights(&s);
    let h = Heuristic::new(HeuristicMode::Dijkstra, goal, &mut gw, &s);
    let hv: Vec<u64> = (0..g.len()).map(|u| h.eval(u, &mut gw, &s)).collect();
    for u in 0..g.len() {
        for (k, &v) in g.neighbors(u).iter().enumerate() {
            let Some(w) = gw.weight(u, k) else { continue };
            if w == INFEASIBLE || hv[v] == INFEASIBLE {
                continue;
            }
            if hv[u] > w.saturating_add(hv[v]) {
                return Err(format!("h({u})={} > w={w} + h({v})={}", hv[u], hv[v]));
            }
        }
    }
    Ok(())
}

/// Independent re-check of an emitted trajectory: positions cover every
/// observation, moves follow roads or stay put, and `Π ∪ E ∪ O` has a
/// consistent model whose value is the reported one.
pub fn verify(
    e: &ExplanationTrajectory,
    g: &LocationGraph,
    p: &Program,
    o: &ObservationSet,
) -> Result<(), String> {
    for ob in &o.obs {
        let want = g.index_of(&ob.node).ok_or("unknown observed node")?;
        if e.node_at(ob.time) != Some(want) {
            return Err(format!("observation {}@{} not met", ob.node, ob.time));
        }
    }
    if let Some(w) = e
        .nodes
        .windows(2)
        .find(|w| w[0] != w[1] && !g.adjacent(w[0], w[1]))
    {
        return Err(format!("{} -> {} is not an edge", w[0], w[1]));
    }
    let s = Scorer::new(p, g, &o.agent).map_err(|e| e.to_string())?;
    let full = program_with_positions(&s, e.start, &e.nodes, &o.to_tafs());
    let r = gamma_star(&full, &Interpretation::bottom(e.end())).map_err(|e| e.to_string())?;
    if !r.consistent {
        return Err("inconsistent model".into());
    }
    let v = value(&r.model, &o.agent).map_err(|e| e.to_string())?;
    if v != e.total_value {
        return Err(format!("value {v} but reported {}", e.total_value));
    }
    Ok(())
}

/// Abduces random observations on fixture `seed` and verifies the output.
/// Returns the trajectory.
pub fn abduce_and_verify(seed: u64, lo: usize, hi: usize) -> Result<ExplanationTrajectory, String> {
    let (g, p) = fixture(seed, lo, hi);
    let mut rng = leg_rng(seed);
    let legs = rng.gen_range(1..=3);
    let o = random_observations(&g, &mut rng, AGENT, legs, 4, 2);
    let mut s = Scorer::new(&p, &g, AGENT).map_err(|e| e.to_string())?;
    let (e, _, _) = abduce(
        &mut s,
        &o,
        AbduceOptions {
            mode: HeuristicMode::Dijkstra,
            adhoc: false,
        },
    )
    .map_err(|e| e.to_string())?;
    verify(&e, &g, &p, &o)?;
    Ok(e)
}

/// Ad-hoc against precomputed weighting on fixture `seed`: identical output,
/// and fewer weights computed whenever search touched under half the nodes.
pub fn adhoc_dominates(seed: u64, lo: usize, hi: usize) -> Result<AdhocRow, String> {
    let (g, p) = fixture(seed, lo, hi);
    let mut rng = leg_rng(seed);
    let o = random_observations(&g, &mut rng, AGENT, 2, 3, 1);
    let row = adhoc_row(&p, &g, &o).map_err(|e| e.to_string())?;
    if !row.identical {
        return Err(format!("seed {seed}: trajectories differ"));
    }
    if 2 * row.expanded_nodes < row.graph_nodes && row.adhoc >= row.total_edges {
        return Err(format!(
            "seed {seed}: {} of {} weights with {} of {} nodes expanded",
            row.adhoc, row.total_edges, row.expanded_nodes, row.graph_nodes
        ));
    }
    Ok(row)
}
