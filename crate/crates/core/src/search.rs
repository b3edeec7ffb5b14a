//! Abduction as a chain of timed sub-problems: observations split into legs,
//! each solved by A* (or exhaustive DFS) over `(node, time, recent window)`
//! states, then assembled and verified against the full program.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixpoint::{entails, gamma_star, FiredRuleRecord, FixpointError};
use crate::graph::{GraphError, LocationGraph};
use crate::lang::{Program, Taf, ABNORMAL};
use crate::lattice::{Annotation, GroundLiteral, Interpretation};
use crate::score::{
    self, format_micros, precompute_weights, Heuristic, HeuristicMode, ScoreError, Scorer,
    WeightedGraph, AT, INFEASIBLE,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("conflicting observations at time {time}: `{a}` and `{b}`")]
    InconsistentObservations { time: u32, a: String, b: String },
    #[error("observation times start at 1")]
    ZeroTime,
    #[error("no observations")]
    Empty,
    #[error("cannot reach `{to}`@{t1} from `{from}`@{t0}")]
    Infeasible {
        from: String,
        t0: u32,
        to: String,
        t1: u32,
    },
    #[error("search budget of {budget:?} exhausted after {expansions} expansions")]
    Budget { budget: Duration, expansions: u64 },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Fixpoint(#[from] FixpointError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub time: u32,
    pub node: String,
}

/// `node` at `first`, `first + period`, ... for `count` occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurringSpec {
    pub node: String,
    pub first: u32,
    pub period: u32,
    pub count: u32,
}

impl RecurringSpec {
    pub fn expand(&self) -> impl Iterator<Item = Observation> + '_ {
        (0..self.count).map(|i| Observation {
            time: self.first + i * self.period,
            node: self.node.clone(),
        })
    }
}

/// Timed location constraints for one agent, sorted by time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub agent: String,
    pub obs: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(
        agent: impl Into<String>,
        single: Vec<Observation>,
        recurring: &[RecurringSpec],
    ) -> Result<ObservationSet, SearchError> {
        let mut obs: Vec<Observation> = single
            .into_iter()
            .chain(recurring.iter().flat_map(|r| r.expand()))
            .collect();
        obs.sort();
        obs.dedup();
        if obs.first().is_some_and(|o| o.time == 0) {
            return Err(SearchError::ZeroTime);
        }
        if let Some(w) = obs.windows(2).find(|w| w[0].time == w[1].time) {
            return Err(SearchError::InconsistentObservations {
                time: w[0].time,
                a: w[0].node.clone(),
                b: w[1].node.clone(),
            });
        }
        Ok(ObservationSet {
            agent: agent.into(),
            obs,
        })
    }

    /// `at(agent,node):[1,1]@t` for every observation.
    pub fn to_tafs(&self) -> Vec<Taf> {
        self.obs
            .iter()
            .map(|o| {
                Taf::at(
                    GroundLiteral::atom(AT, &[&self.agent, &o.node]),
                    Annotation::TRUE,
                    o.time,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Leg {
    pub from: usize,
    pub t0: u32,
    pub to: usize,
    pub t1: u32,
}

impl Leg {
    pub fn duration(&self) -> u32 {
        self.t1 - self.t0
    }
}

/// One leg per consecutive observation pair.
pub fn decompose(o: &ObservationSet, g: &LocationGraph) -> Result<Vec<Leg>, SearchError> {
    let idx: Vec<usize> = o
        .obs
        .iter()
        .map(|x| g.require(&x.node))
        .collect::<Result<_, _>>()?;
    Ok(o.obs
        .windows(2)
        .zip(idx.windows(2))
        .map(|(w, i)| Leg {
            from: i[0],
            t0: w[0].time,
            to: i[1],
            t1: w[1].time,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub expansions: u64,
    pub generated: u64,
    pub reexpansions: u64,
}

/// A state expanded by A* with its heuristic value, kept when tracing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedState {
    pub node: usize,
    pub time: u32,
    pub window: Vec<u32>,
    pub g: u64,
    pub h: u64,
}

/// Optimal node sequence for one leg, `t1 - t0 + 1` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub leg: Leg,
    pub nodes: Vec<usize>,
    pub cost: u64,
    pub nonzero: u32,
    pub stats: SearchStats,
}

/// Cost order: value first, then the number of movements with nonzero cost.
type Cost = (u64, u32);

fn add(c: Cost, step: u64) -> Cost {
    (c.0 + step, c.1 + u32::from(step > 0))
}

fn infeasible(g: &LocationGraph, leg: &Leg) -> SearchError {
    SearchError::Infeasible {
        from: g.node(leg.from).id.clone(),
        t0: leg.t0,
        to: g.node(leg.to).id.clone(),
        t1: leg.t1,
    }
}

/// Successors of `u`: waiting plus neighbours, in node-id order.
fn moves(g: &LocationGraph, u: usize) -> Vec<usize> {
    let mut m: Vec<usize> = g.neighbors(u).to_vec();
    let pos = m
        .iter()
        .position(|&v| g.rank(v) > g.rank(u))
        .unwrap_or(m.len());
    m.insert(pos, u);
    m
}

/// Tokens kept in the state key after appending to `history`.
fn trim(history: &[u32], window: Option<u32>) -> Vec<u32> {
    match window {
        Some(w) => history[history.len().saturating_sub(w as usize)..].to_vec(),
        None => history.to_vec(),
    }
}

struct Rec {
    node: usize,
    time: u32,
    key: Vec<u32>,
    parent: Option<usize>,
    g: Cost,
    h: u64,
    closed: bool,
}

fn path_of(arena: &[Rec], mut id: usize) -> Vec<usize> {
    let mut out = vec![arena[id].node];
    while let Some(p) = arena[id].parent {
        out.push(arena[p].node);
        id = p;
    }
    out.reverse();
    out
}

fn lex_cmp(g: &LocationGraph, a: &[usize], b: &[usize]) -> Ordering {
    a.iter()
        .map(|&n| g.rank(n))
        .cmp(b.iter().map(|&n| g.rank(n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AstarOptions {
    pub mode: HeuristicMode,
    pub trace: bool,
}

/// A* over one leg. Returns the optimal segment, ties broken by fewer
/// nonzero-cost movements and then by node-id order, and optionally every
/// expanded state with its heuristic value.
pub fn astar_leg(
    leg: &Leg,
    scorer: &mut Scorer<'_>,
    gw: &mut WeightedGraph,
    opts: AstarOptions,
) -> Result<(Segment, Vec<ExpandedState>), SearchError> {
    let g = scorer.graph();
    let dist = g.bfs_distances(leg.to);
    if dist[leg.from] == u32::MAX || dist[leg.from] > leg.duration() {
        return Err(infeasible(g, leg));
    }
    let window = scorer.window();
    let heur = Heuristic::new(opts.mode, leg.to, gw, scorer);
    let mut arena: Vec<Rec> = Vec::new();
    let mut index: HashMap<(usize, u32, Vec<u32>), usize> = HashMap::new();
    let mut heap: BinaryHeap<Reverse<(u64, u32, u32, usize)>> = BinaryHeap::new();
    let mut stats = SearchStats::default();
    let mut trace = Vec::new();

    let start_key = trim(&[scorer.token(leg.from)], window);
    let h0 = heur.eval(leg.from, gw, scorer);
    if h0 == INFEASIBLE {
        return Err(infeasible(g, leg));
    }
    arena.push(Rec {
        node: leg.from,
        time: leg.t0,
        key: start_key.clone(),
        parent: None,
        g: (0, 0),
        h: h0,
        closed: false,
    });
    index.insert((leg.from, leg.t0, start_key), 0);
    heap.push(Reverse((h0, 0, leg.t0, 0)));

    let mut best: Option<usize> = None;
    while let Some(Reverse((f, nz, time, id))) = heap.pop() {
        if let Some(b) = best {
            let bg = arena[b].g;
            if (f, nz) != bg || time != leg.t1 {
                break;
            }
        }
        let rec = &arena[id];
        if rec.closed || (rec.g.0.saturating_add(rec.h), rec.g.1) != (f, nz) {
            continue;
        }
        arena[id].closed = true;
        if time == leg.t1 {
            // only the goal node survives the reachability prune
            best = match best {
                Some(b) if arena[b].g < arena[id].g => Some(b),
                Some(b)
                    if arena[b].g == arena[id].g
                        && lex_cmp(g, &path_of(&arena, b), &path_of(&arena, id))
                            != Ordering::Greater =>
                {
                    Some(b)
                }
                _ => Some(id),
            };
            continue;
        }
        stats.expansions += 1;
        if opts.trace {
            let r = &arena[id];
            trace.push(ExpandedState {
                node: r.node,
                time: r.time,
                window: r.key.clone(),
                g: r.g.0,
                h: r.h,
            });
        }
        let (u, gcost, key) = (arena[id].node, arena[id].g, arena[id].key.clone());
        let t = time + 1;
        for v in moves(g, u) {
            if dist[v] > leg.t1 - t {
                continue;
            }
            let mut hist = key.clone();
            hist.push(scorer.token(v));
            let Some(step) = scorer.step_cost(&hist, t) else {
                continue;
            };
            let h = heur.eval(v, gw, scorer);
            if h == INFEASIBLE {
                continue;
            }
            let ng = add(gcost, step);
            let nkey = trim(&hist, window);
            stats.generated += 1;
            match index.get(&(v, t, nkey.clone())) {
                None => {
                    let nid = arena.len();
                    arena.push(Rec {
                        node: v,
                        time: t,
                        key: nkey.clone(),
                        parent: Some(id),
                        g: ng,
                        h,
                        closed: false,
                    });
                    index.insert((v, t, nkey), nid);
                    heap.push(Reverse((ng.0 + h, ng.1, t, nid)));
                }
                Some(&nid) => {
                    let old = arena[nid].g;
                    let better = ng < old
                        || (ng == old && {
                            let mut mine = path_of(&arena, id);
                            mine.push(v);
                            lex_cmp(g, &mine, &path_of(&arena, nid)) == Ordering::Less
                        });
                    if !better {
                        continue;
                    }
                    if arena[nid].closed {
                        stats.reexpansions += 1;
                        arena[nid].closed = false;
                    }
                    arena[nid].g = ng;
                    arena[nid].parent = Some(id);
                    if ng != old {
                        heap.push(Reverse((ng.0 + h, ng.1, t, nid)));
                    }
                }
            }
        }
    }
    let b = best.ok_or_else(|| infeasible(g, leg))?;
    let nodes = path_of(&arena, b);
    Ok((
        Segment {
            leg: *leg,
            nodes,
            cost: arena[b].g.0,
            nonzero: arena[b].g.1,
            stats,
        },
        trace,
    ))
}

struct Dfs<'a, 'g> {
    scorer: &'a mut Scorer<'g>,
    dist: Vec<u32>,
    t1: u32,
    path: Vec<usize>,
    best: Option<(Cost, Vec<usize>)>,
    expansions: u64,
    started: Instant,
    budget: Option<Duration>,
    timed_out: bool,
}

impl Dfs<'_, '_> {
    fn go(&mut self, key: Vec<u32>, t: u32, cost: Cost) {
        if self.timed_out {
            return;
        }
        let u = *self.path.last().expect("non-empty");
        if t == self.t1 {
            if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                self.best = Some((cost, self.path.clone()));
            }
            return;
        }
        self.expansions += 1;
        if self.expansions.is_multiple_of(1024) {
            if let Some(budget) = self.budget {
                if self.started.elapsed() > budget {
                    self.timed_out = true;
                    return;
                }
            }
        }
        let window = self.scorer.window();
        for v in moves(self.scorer.graph(), u) {
            if self.dist[v] > self.t1 - (t + 1) {
                continue;
            }
            let mut hist = key.clone();
            hist.push(self.scorer.token(v));
            let Some(step) = self.scorer.step_cost(&hist, t + 1) else {
                continue;
            };
            self.path.push(v);
            self.go(trim(&hist, window), t + 1, add(cost, step));
            self.path.pop();
        }
    }
}

/// Outcome of an exhaustive enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfsOutcome {
    pub best: Option<(u64, u32, Vec<usize>)>,
    pub expansions: u64,
    pub timed_out: bool,
    pub elapsed: Duration,
}

/// Enumerates every completion from `node` at `t` (with `key` as the
/// recent-token window) to `goal` at `t1`, in node-id order.
pub fn dfs_from(
    scorer: &mut Scorer<'_>,
    node: usize,
    t: u32,
    key: Vec<u32>,
    goal: usize,
    t1: u32,
    budget: Option<Duration>,
) -> DfsOutcome {
    let dist = scorer.graph().bfs_distances(goal);
    let started = Instant::now();
    let mut dfs = Dfs {
        scorer,
        dist,
        t1,
        path: vec![node],
        best: None,
        expansions: 0,
        started,
        budget,
        timed_out: false,
    };
    if dfs.dist[node] <= t1 - t {
        dfs.go(key, t, (0, 0));
    }
    DfsOutcome {
        best: dfs.best.map(|((c, n), p)| (c, n, p)),
        expansions: dfs.expansions,
        timed_out: dfs.timed_out,
        elapsed: started.elapsed(),
    }
}

/// Exhaustive depth-first baseline with the same contract as [`astar_leg`].
pub fn dfs_exhaustive(
    leg: &Leg,
    scorer: &mut Scorer<'_>,
    budget: Option<Duration>,
) -> Result<Segment, SearchError> {
    let key = trim(&[scorer.token(leg.from)], scorer.window());
    let out = dfs_from(scorer, leg.from, leg.t0, key, leg.to, leg.t1, budget);
    if out.timed_out {
        return Err(SearchError::Budget {
            budget: budget.unwrap_or_default(),
            expansions: out.expansions,
        });
    }
    let (cost, nonzero, nodes) = out.best.ok_or_else(|| infeasible(scorer.graph(), leg))?;
    Ok(Segment {
        leg: *leg,
        nodes,
        cost,
        nonzero,
        stats: SearchStats {
            expansions: out.expansions,
            ..Default::default()
        },
    })
}

/// The abduced trajectory with its verification results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationTrajectory {
    pub agent: String,
    pub start: u32,
    pub nodes: Vec<usize>,
    /// `at(agent,node):[1,1]@t` for every covered timepoint.
    pub tafs: Vec<Taf>,
    /// Value of the model of `Π ∪ E ∪ O`.
    pub total_value: u64,
    /// Sum of per-leg optima plus the cost at the first observation.
    pub leg_sum: u64,
    /// Fired rules with an `abnormal` head.
    pub fired: Vec<FiredRuleRecord>,
}

impl ExplanationTrajectory {
    pub fn end(&self) -> u32 {
        self.start + self.nodes.len() as u32 - 1
    }

    pub fn node_at(&self, t: u32) -> Option<usize> {
        t.checked_sub(self.start)
            .and_then(|i| self.nodes.get(i as usize))
            .copied()
    }
}

/// `Π` plus the projection of the given positions and `extra` facts, with
/// the declarations those facts need.
pub fn program_with_positions(
    scorer: &Scorer<'_>,
    start: u32,
    nodes: &[usize],
    extra: &[Taf],
) -> Program {
    let g = scorer.graph();
    let mut p = scorer.program().clone();
    p.extend_domain("loc", g.nodes().iter().map(|n| n.id.clone()));
    p.declare_predicate(AT, &["agent", "loc"]);
    for (i, &n) in nodes.iter().enumerate() {
        let t = start + i as u32;
        p.tafs.push(Taf::at(
            GroundLiteral::atom(AT, &[scorer.agent(), &g.node(n).id]),
            Annotation::TRUE,
            t,
        ));
        p.tafs.extend(score::project(g, scorer.agent(), n, t, |q| {
            q != AT && scorer.mentions(q)
        }));
    }
    p.tafs.extend(extra.iter().cloned());
    p
}

/// Concatenates leg segments, runs `Γ*` on `Π ∪ E ∪ O`, and checks its
/// consistency, `Π ∪ E ⊨ O` and adjacency.
pub fn assemble_and_verify(
    segments: &[Segment],
    scorer: &mut Scorer<'_>,
    o: &ObservationSet,
) -> Result<ExplanationTrajectory, SearchError> {
    let g = scorer.graph();
    let first = o.obs.first().ok_or(SearchError::Empty)?;
    let start = first.time;
    let mut nodes = vec![g.require(&first.node)?];
    let mut leg_sum = scorer
        .step_cost(&[scorer.token(nodes[0])], start)
        .ok_or(ScoreError::Inconsistent)?;
    for s in segments {
        if s.nodes.first() != nodes.last() || s.leg.t0 != start + nodes.len() as u32 - 1 {
            return Err(SearchError::Verification("segments do not chain".into()));
        }
        nodes.extend_from_slice(&s.nodes[1..]);
        leg_sum += s.cost;
    }
    if let Some(w) = nodes
        .windows(2)
        .position(|w| w[0] != w[1] && !g.adjacent(w[0], w[1]))
    {
        return Err(SearchError::Verification(format!(
            "`{}` -> `{}` at time {} is not a road movement",
            g.node(nodes[w]).id,
            g.node(nodes[w + 1]).id,
            start + w as u32 + 1
        )));
    }
    let observations = o.to_tafs();
    let program = program_with_positions(scorer, start, &nodes, &observations);
    let horizon = start + nodes.len() as u32 - 1;
    let result = gamma_star(&program, &Interpretation::bottom(horizon))?;
    if !result.consistent {
        return Err(SearchError::Verification(
            "Π ∪ E ∪ O is inconsistent".into(),
        ));
    }
    let without_o = program_with_positions(scorer, start, &nodes, &[]);
    if !entails(&without_o, &observations)? {
        return Err(SearchError::Verification(
            "observations are not entailed".into(),
        ));
    }
    let total_value = score::value(&result.model, &o.agent)?;
    let tafs = nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            Taf::at(
                GroundLiteral::atom(AT, &[&o.agent, &g.node(n).id]),
                Annotation::TRUE,
                start + i as u32,
            )
        })
        .collect();
    let fired = result
        .fired
        .into_iter()
        .filter(|r| r.rule.head.predicate == ABNORMAL)
        .collect();
    Ok(ExplanationTrajectory {
        agent: o.agent.clone(),
        start,
        nodes,
        tafs,
        total_value,
        leg_sum,
        fired,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbduceOptions {
    pub mode: HeuristicMode,
    pub adhoc: bool,
}

/// Per-run counters across all legs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AbduceStats {
    pub legs: usize,
    pub search: SearchStats,
    pub weights_computed: usize,
    pub total_edges: usize,
}

/// Full pipeline for one agent: decompose, solve each leg, verify.
pub fn abduce(
    scorer: &mut Scorer<'_>,
    o: &ObservationSet,
    opts: AbduceOptions,
) -> Result<(ExplanationTrajectory, Vec<Segment>, AbduceStats), SearchError> {
    let g = scorer.graph();
    let legs = decompose(o, g)?;
    let mut gw = if opts.adhoc {
        WeightedGraph::empty(g)
    } else {
        precompute_weights(scorer)
    };
    let mut segments = Vec::with_capacity(legs.len());
    let mut stats = AbduceStats {
        legs: legs.len(),
        total_edges: gw.total_edges(),
        ..Default::default()
    };
    for leg in &legs {
        let (seg, _) = astar_leg(
            leg,
            scorer,
            &mut gw,
            AstarOptions {
                mode: opts.mode,
                trace: false,
            },
        )?;
        stats.search.expansions += seg.stats.expansions;
        stats.search.generated += seg.stats.generated;
        stats.search.reexpansions += seg.stats.reexpansions;
        segments.push(seg);
    }
    stats.weights_computed = gw.computed_count();
    let e = assemble_and_verify(&segments, scorer, o)?;
    Ok((e, segments, stats))
}

#[derive(Debug, Clone, Serialize)]
pub struct FiredCitation {
    pub rule: String,
    pub body_time: u32,
    pub head_time: u32,
    pub annotation: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MovementReport {
    pub timepoint: u32,
    pub from: String,
    pub to: String,
    pub rules: Vec<FiredCitation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplanationReport {
    pub agent: String,
    pub total_value: String,
    pub leg_sum: String,
    pub movements: Vec<MovementReport>,
}

/// Fired `abnormal` rules grouped by the movement that ends at their head
/// time. Movements without fired rules are omitted.
pub fn explain(e: &ExplanationTrajectory, g: &LocationGraph) -> ExplanationReport {
    let mut by_time: std::collections::BTreeMap<u32, Vec<FiredCitation>> = Default::default();
    for r in &e.fired {
        by_time.entry(r.head_time).or_default().push(FiredCitation {
            rule: r.rule.to_string(),
            body_time: r.body_time,
            head_time: r.head_time,
            annotation: r.rule.head_annotation.to_string(),
        });
    }
    let movements = by_time
        .into_iter()
        .map(|(t, rules)| {
            let to = e
                .node_at(t)
                .map(|n| g.node(n).id.clone())
                .unwrap_or_default();
            let from = e
                .node_at(t.saturating_sub(1))
                .map(|n| g.node(n).id.clone())
                .unwrap_or_else(|| to.clone());
            MovementReport {
                timepoint: t,
                from,
                to,
                rules,
            }
        })
        .collect();
    ExplanationReport {
        agent: e.agent.clone(),
        total_value: format_micros(e.total_value),
        leg_sum: format_micros(e.leg_sum),
        movements,
    }
}

#[derive(Debug, Serialize)]
struct TrajectoryRow<'a> {
    agent: &'a str,
    timepoint: u32,
    node_id: &'a str,
    lat: f64,
    lon: f64,
}

/// `agent,timepoint,node_id,lat,lon` rows.
pub fn write_trajectory_csv<W: Write>(
    trajectories: &[ExplanationTrajectory],
    g: &LocationGraph,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for e in trajectories {
        for (i, &n) in e.nodes.iter().enumerate() {
            let node = g.node(n);
            w.serialize(TrajectoryRow {
                agent: &e.agent,
                timepoint: e.start + i as u32,
                node_id: &node.id,
                lat: node.lat,
                lon: node.lon,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
