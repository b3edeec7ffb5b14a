//! Parsimony scoring: the value of a model, per-step costs under the full
//! program, single-hop movement weights (`G_w`) and the search heuristic.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fixpoint::{AtomId, CompiledProgram, FiredRuleRecord, FixpointError, RunSummary};
use crate::graph::LocationGraph;
use crate::lang::{AnnotatedFormula, Program, Taf, TafTime, ABNORMAL};
use crate::lattice::{Annotation, GroundLiteral, Interpretation};

/// Marker cost for movements that make the model inconsistent.
pub const INFEASIBLE: u64 = u64::MAX;

/// Predicate locating an agent at a node, `at(agent, loc)`.
pub const AT: &str = "at";

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("model is inconsistent")]
    Inconsistent,
    #[error("`{0}` and `{1}` are not adjacent")]
    NotAdjacent(String, String),
    #[error(transparent)]
    Fixpoint(#[from] FixpointError),
}

/// Renders a micro-unit total as a decimal, e.g. `1900000` as `1.9`.
pub fn format_micros(v: u64) -> String {
    if v == INFEASIBLE {
        return "inf".to_string();
    }
    let (whole, frac) = (v / 1_000_000, v % 1_000_000);
    if frac == 0 {
        whole.to_string()
    } else {
        format!("{whole}.{}", format!("{frac:06}").trim_end_matches('0'))
    }
}

pub fn micros_to_f64(v: u64) -> f64 {
    if v == INFEASIBLE {
        f64::INFINITY
    } else {
        v as f64 / 1e6
    }
}

/// Sum over timepoints of the lower bound of `abnormal(agent)`, in micros.
pub fn value(model: &Interpretation, agent: &str) -> Result<u64, ScoreError> {
    if !model.is_consistent() {
        return Err(ScoreError::Inconsistent);
    }
    let lit = GroundLiteral::atom(ABNORMAL, &[agent]);
    let mut total = 0u64;
    for t in 1..=model.horizon() {
        total += u64::from(model.get(&lit, t).expect("within horizon").lower().micros());
    }
    Ok(total)
}

/// Copy of `program` whose `agent` domain holds only `agent`.
pub fn for_agent(program: &Program, agent: &str) -> Program {
    let mut p = program.clone();
    match p.domains.iter_mut().find(|d| d.name == "agent") {
        Some(d) => d.constants = vec![agent.to_string()],
        None => p.extend_domain("agent", [agent.to_string()]),
    }
    p
}

/// Facts describing `agent` at `node` at time `t`: `at(agent,node)` and, for
/// landmarks, the unary category predicate. Only predicates accepted by
/// `mentioned` are emitted.
pub fn project(
    g: &LocationGraph,
    agent: &str,
    node: usize,
    t: u32,
    mentioned: impl Fn(&str) -> bool,
) -> Vec<Taf> {
    let mut out = Vec::with_capacity(2);
    if mentioned(AT) {
        out.push(Taf::at(
            GroundLiteral::atom(AT, &[agent, &g.node(node).id]),
            Annotation::TRUE,
            t,
        ));
    }
    let cat = g.category(node);
    if cat.is_landmark() && mentioned(cat.predicate()) {
        out.push(Taf::at(
            GroundLiteral::atom(cat.predicate(), &[agent]),
            Annotation::TRUE,
            t,
        ));
    }
    out
}

#[derive(Debug, Clone)]
struct Compiled {
    program: CompiledProgram,
    abnormal: Option<AtomId>,
    /// Atoms asserted for each token.
    token_atoms: Vec<Vec<AtomId>>,
}

impl Compiled {
    fn new(
        program: &Program,
        g: &LocationGraph,
        agent: &str,
        by_node: bool,
    ) -> Result<Compiled, ScoreError> {
        let compiled = CompiledProgram::compile(program)?;
        let abnormal = compiled.atoms.get(&GroundLiteral::atom(ABNORMAL, &[agent]));
        let lookup = |lit: GroundLiteral| compiled.atoms.get(&lit);
        let token_atoms = if by_node {
            (0..g.len())
                .map(|n| {
                    let cat = g.category(n);
                    let mut v: Vec<AtomId> =
                        lookup(GroundLiteral::atom(AT, &[agent, &g.node(n).id]))
                            .into_iter()
                            .collect();
                    if cat.is_landmark() {
                        v.extend(lookup(GroundLiteral::atom(cat.predicate(), &[agent])));
                    }
                    v
                })
                .collect()
        } else {
            crate::graph::Category::ALL
                .iter()
                .map(|c| {
                    if c.is_landmark() {
                        lookup(GroundLiteral::atom(c.predicate(), &[agent]))
                            .into_iter()
                            .collect()
                    } else {
                        Vec::new()
                    }
                })
                .collect()
        };
        Ok(Compiled {
            program: compiled,
            abnormal,
            token_atoms,
        })
    }

    /// Runs Γ* over `tokens` placed at consecutive times from `first`.
    fn run(
        &self,
        tokens: &[u32],
        first: u32,
        horizon: u32,
    ) -> Option<(crate::fixpoint::State, RunSummary)> {
        let mut state = self.program.bottom_state(horizon);
        for (i, &tok) in tokens.iter().enumerate() {
            for &a in &self.token_atoms[tok as usize] {
                state.assert(a, first + i as u32, Annotation::TRUE);
            }
        }
        let summary = self.program.run(&mut state).ok()?;
        state.is_consistent().then_some((state, summary))
    }

    fn abnormal_lb(&self, state: &crate::fixpoint::State, t: u32) -> u64 {
        self.abnormal
            .map(|a| u64::from(state.get(a, t).lower().micros()))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MovementCost {
    pub from: String,
    pub to: String,
    pub cost: u64,
    #[serde(skip)]
    pub fired: Vec<FiredRuleRecord>,
}

/// Scoring context for one agent on one graph: the agent-restricted
/// program `Π`, its single-hop part `Π^SH`, and a memo of step costs.
#[derive(Debug, Clone)]
pub struct Scorer<'g> {
    graph: &'g LocationGraph,
    agent: String,
    program: Program,
    full: Compiled,
    sh: Compiled,
    by_node: bool,
    window: Option<u32>,
    last_fact: Option<u32>,
    memo: HashMap<(Vec<u32>, u32), Option<u64>>,
    evaluations: usize,
}

/// Whether some rule body reads a predicate that some rule derives.
fn has_derived_body(program: &Program) -> bool {
    let heads: HashSet<&str> = program
        .rules
        .iter()
        .map(|r| r.head.predicate.as_str())
        .collect();
    program.rules.iter().any(|r| {
        r.body.iter().any(|f| match f {
            AnnotatedFormula::Literal { literal, .. } => heads.contains(literal.predicate.as_str()),
            AnnotatedFormula::Temporal { first, second, .. } => {
                heads.contains(first.predicate.as_str())
                    || heads.contains(second.predicate.as_str())
            }
        })
    })
}

impl<'g> Scorer<'g> {
    pub fn new(
        program: &Program,
        graph: &'g LocationGraph,
        agent: &str,
    ) -> Result<Scorer<'g>, ScoreError> {
        let program = for_agent(program, agent);
        let by_node = program.rules.iter().any(|r| {
            r.head.predicate == AT
                || r.body
                    .iter()
                    .any(|f| f.literals().iter().any(|l| l.predicate == AT))
        });
        let full = Compiled::new(&program, graph, agent, by_node)?;
        let sh = Compiled::new(&program.single_hop(), graph, agent, by_node)?;
        let window = if has_derived_body(&program) {
            None
        } else {
            program.temporal_reach()
        };
        let last_fact = program
            .tafs
            .iter()
            .filter_map(|t| match t.time {
                TafTime::At(t) => Some(t),
                TafTime::Always => None,
            })
            .max();
        Ok(Scorer {
            graph,
            agent: agent.to_string(),
            program,
            full,
            sh,
            by_node,
            window,
            last_fact,
            memo: HashMap::new(),
            evaluations: 0,
        })
    }

    pub fn graph(&self) -> &'g LocationGraph {
        self.graph
    }

    pub fn agent(&self) -> &str {
        &self.agent
    }

    /// The agent-restricted program.
    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn mentions(&self, predicate: &str) -> bool {
        self.full.program.mentions(predicate)
    }

    /// Number of earlier positions that can influence the cost at a time;
    /// `None` when the whole prefix matters.
    pub fn window(&self) -> Option<u32> {
        self.window
    }

    /// Distinct step-cost evaluations (memo misses).
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Search token for a node: its index when the program reads `at`,
    /// otherwise its category.
    pub fn token(&self, node: usize) -> u32 {
        if self.by_node {
            node as u32
        } else {
            self.graph.category(node).index() as u32
        }
    }

    /// Cost at time `t` given the tokens of times `t-len+1 ..= t`;
    /// `None` when the program becomes inconsistent.
    pub fn step_cost(&mut self, history: &[u32], t: u32) -> Option<u64> {
        let key_t = if self.last_fact.is_some() { t } else { 0 };
        if let Some(&c) = self.memo.get(&(history.to_vec(), key_t)) {
            return c;
        }
        self.evaluations += 1;
        let len = history.len() as u32;
        let cost = match self.last_fact {
            // absolute frame so timed facts land where they belong
            Some(last) => {
                let first = t + 1 - len;
                self.full
                    .run(history, first, t.max(last))
                    .map(|(s, _)| self.full.abnormal_lb(&s, t))
            }
            None => self
                .full
                .run(history, 1, len)
                .map(|(s, _)| self.full.abnormal_lb(&s, len)),
        };
        self.memo.insert((history.to_vec(), key_t), cost);
        cost
    }

    /// Value of the agent following `nodes` at times `1..=len` under `Π`.
    pub fn sequence_value(&self, nodes: &[usize]) -> Result<u64, ScoreError> {
        let tokens: Vec<u32> = nodes.iter().map(|&n| self.token(n)).collect();
        let horizon = (tokens.len() as u32)
            .max(self.last_fact.unwrap_or(0))
            .max(1);
        let (state, _) = self
            .full
            .run(&tokens, 1, horizon)
            .ok_or(ScoreError::Inconsistent)?;
        Ok((1..=horizon)
            .map(|t| self.full.abnormal_lb(&state, t))
            .sum())
    }

    /// Single-hop cost of moving `from -> to` (or waiting when equal) in
    /// isolation, with the fired single-hop rules.
    pub fn movement_cost(&self, from: usize, to: usize) -> Result<MovementCost, ScoreError> {
        if from != to && !self.graph.adjacent(from, to) {
            return Err(ScoreError::NotAdjacent(
                self.graph.node(from).id.clone(),
                self.graph.node(to).id.clone(),
            ));
        }
        let tokens = [self.token(from), self.token(to)];
        let (cost, fired) = match self.sh.run(&tokens, 1, 2) {
            None => (INFEASIBLE, Vec::new()),
            Some((state, summary)) => {
                let result = self.sh.program.finish(&state, summary);
                let fired = result
                    .fired
                    .into_iter()
                    .filter(|r| r.rule.head.predicate == ABNORMAL && r.head_time == 2)
                    .collect();
                (self.sh.abnormal_lb(&state, 2), fired)
            }
        };
        Ok(MovementCost {
            from: self.graph.node(from).id.clone(),
            to: self.graph.node(to).id.clone(),
            cost,
            fired,
        })
    }

    fn sh_weight(&self, from: usize, to: usize) -> u64 {
        match self.sh.run(&[self.token(from), self.token(to)], 1, 2) {
            None => INFEASIBLE,
            Some((state, _)) => self.sh.abnormal_lb(&state, 2),
        }
    }
}

/// `G_w`: single-hop movement weights on directed edges, aligned with
/// [`LocationGraph::neighbors`], filled eagerly or on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    weights: Vec<Option<u64>>,
    computed: usize,
}

impl WeightedGraph {
    /// No weights computed yet (ad-hoc mode).
    pub fn empty(g: &LocationGraph) -> WeightedGraph {
        let mut offsets = Vec::with_capacity(g.len() + 1);
        offsets.push(0);
        for u in 0..g.len() {
            offsets.push(offsets[u] + g.neighbors(u).len());
        }
        WeightedGraph {
            weights: vec![None; offsets[g.len()]],
            offsets,
            computed: 0,
        }
    }

    /// Weight of the `k`-th outgoing movement of `u`, if computed.
    pub fn weight(&self, u: usize, k: usize) -> Option<u64> {
        self.weights[self.offsets[u] + k]
    }

    pub fn weight_between(&self, g: &LocationGraph, u: usize, v: usize) -> Option<u64> {
        let k = g.neighbors(u).iter().position(|&x| x == v)?;
        self.weight(u, k)
    }

    /// Number of movement costs computed so far.
    pub fn computed_count(&self) -> usize {
        self.computed
    }

    pub fn total_edges(&self) -> usize {
        self.weights.len()
    }

    pub fn is_covered(&self, u: usize) -> bool {
        self.weights[self.offsets[u]..self.offsets[u + 1]]
            .iter()
            .all(Option::is_some)
    }

    pub fn fully_covered(&self) -> bool {
        self.weights.iter().all(Option::is_some)
    }

    fn ensure(&mut self, scorer: &Scorer<'_>, u: usize, k: usize) -> u64 {
        let i = self.offsets[u] + k;
        match self.weights[i] {
            Some(w) => w,
            None => {
                let w = scorer.sh_weight(u, scorer.graph.neighbors(u)[k]);
                self.weights[i] = Some(w);
                self.computed += 1;
                w
            }
        }
    }

    /// `src,dst,weight` rows for every computed movement.
    pub fn write_csv<W: Write>(&self, g: &LocationGraph, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src", "dst", "weight"])?;
        for u in 0..g.len() {
            for (k, &v) in g.neighbors(u).iter().enumerate() {
                if let Some(x) = self.weight(u, k) {
                    w.write_record([
                        g.node(u).id.as_str(),
                        g.node(v).id.as_str(),
                        &format_micros(x),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Every directed movement weighted up front, in parallel.
pub fn precompute_weights(scorer: &Scorer<'_>) -> WeightedGraph {
    let g = scorer.graph;
    let mut gw = WeightedGraph::empty(g);
    let rows: Vec<Vec<u64>> = (0..g.len())
        .into_par_iter()
        .map(|u| {
            g.neighbors(u)
                .iter()
                .map(|&v| scorer.sh_weight(u, v))
                .collect()
        })
        .collect();
    for (u, row) in rows.into_iter().enumerate() {
        for (k, w) in row.into_iter().enumerate() {
            gw.weights[gw.offsets[u] + k] = Some(w);
        }
    }
    gw.computed = gw.weights.len();
    gw
}

/// Weighs the not yet covered outgoing movements of `node`; returns how many
/// were computed.
pub fn adhoc_weight(gw: &mut WeightedGraph, scorer: &Scorer<'_>, node: usize) -> usize {
    let before = gw.computed;
    for k in 0..scorer.graph.neighbors(node).len() {
        gw.ensure(scorer, node, k);
    }
    gw.computed - before
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicMode {
    Dijkstra,
    Depth1,
    None,
}

impl fmt::Display for HeuristicMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeuristicMode::Dijkstra => "dijkstra",
            HeuristicMode::Depth1 => "depth1",
            HeuristicMode::None => "none",
        })
    }
}

impl FromStr for HeuristicMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dijkstra" => Ok(HeuristicMode::Dijkstra),
            "depth1" => Ok(HeuristicMode::Depth1),
            "none" => Ok(HeuristicMode::None),
            other => Err(format!(
                "unknown heuristic `{other}` (expected dijkstra, depth1 or none)"
            )),
        }
    }
}

/// Heuristic towards one goal node. The Dijkstra table is built once per
/// goal; depth-1 values weigh the frontier on demand.
#[derive(Debug, Clone)]
pub struct Heuristic {
    mode: HeuristicMode,
    goal: usize,
    table: Vec<u64>,
}

impl Heuristic {
    pub fn new(
        mode: HeuristicMode,
        goal: usize,
        gw: &mut WeightedGraph,
        scorer: &Scorer<'_>,
    ) -> Heuristic {
        let table = match mode {
            HeuristicMode::Dijkstra => reverse_dijkstra(goal, gw, scorer),
            _ => Vec::new(),
        };
        Heuristic { mode, goal, table }
    }

    pub fn mode(&self) -> HeuristicMode {
        self.mode
    }

    pub fn eval(&self, node: usize, gw: &mut WeightedGraph, scorer: &Scorer<'_>) -> u64 {
        match self.mode {
            HeuristicMode::None => 0,
            HeuristicMode::Dijkstra => self.table[node],
            HeuristicMode::Depth1 => {
                if node == self.goal {
                    return 0;
                }
                adhoc_weight(gw, scorer, node);
                (0..scorer.graph.neighbors(node).len())
                    .map(|k| gw.weight(node, k).expect("covered"))
                    .min()
                    .unwrap_or(INFEASIBLE)
            }
        }
    }
}

/// One-shot heuristic value of `node` towards `goal`.
pub fn heuristic(
    gw: &mut WeightedGraph,
    scorer: &Scorer<'_>,
    node: usize,
    goal: usize,
    mode: HeuristicMode,
) -> u64 {
    Heuristic::new(mode, goal, gw, scorer).eval(node, gw, scorer)
}

/// Cheapest `G_w` path cost from every node to `goal`; `INFEASIBLE` when
/// unreachable.
fn reverse_dijkstra(goal: usize, gw: &mut WeightedGraph, scorer: &Scorer<'_>) -> Vec<u64> {
    let g = scorer.graph;
    let mut dist = vec![INFEASIBLE; g.len()];
    let mut heap = BinaryHeap::new();
    dist[goal] = 0;
    heap.push(Reverse((0u64, goal)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &u in g.neighbors(v) {
            let k = g
                .neighbors(u)
                .iter()
                .position(|&x| x == v)
                .expect("undirected");
            let w = gw.ensure(scorer, u, k);
            if w == INFEASIBLE {
                continue;
            }
            let nd = d + w;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Reverse((nd, u)));
            }
        }
    }
    dist
}
