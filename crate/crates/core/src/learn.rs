//! Learning single-hop and multi-hop anomaly rules from one agent's
//! training trajectory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{haversine_m, Category, LocationGraph};
use crate::lang::{
    AnnotatedFormula, GapRule, HopClass, Literal, Program, TemporalOp, Term, ABNORMAL,
};
use crate::lattice::{Annotation, Scalar};

pub const DEFAULT_SNAP_RADIUS_M: f64 = 250.0;
pub const DEFAULT_N_MAX: u32 = 3;
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("point {index} is {distance_m:.1} m from the nearest node (radius {radius_m} m)")]
    TooFar {
        index: usize,
        distance_m: f64,
        radius_m: f64,
    },
    #[error("timestamps must be strictly increasing (point {0})")]
    NonIncreasing(usize),
    #[error("empty graph")]
    EmptyGraph,
    #[error("no path between `{0}` and `{1}`")]
    Disconnected(String, String),
    #[error("tau must lie in (0,1], got {0}")]
    BadTau(f64),
    #[error("hop bound must be at least 1")]
    BadHopBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub lat: f64,
    pub lon: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrajectory {
    pub agent: String,
    pub points: Vec<TrajPoint>,
    pub movtype: String,
}

impl TrainingTrajectory {
    pub fn new(
        agent: impl Into<String>,
        points: Vec<TrajPoint>,
    ) -> Result<TrainingTrajectory, LearnError> {
        if let Some(i) = points
            .windows(2)
            .position(|w| w[1].timestamp <= w[0].timestamp)
        {
            return Err(LearnError::NonIncreasing(i + 1));
        }
        Ok(TrainingTrajectory {
            agent: agent.into(),
            points,
            movtype: "personal_vehicle".into(),
        })
    }
}

/// One position of a snapped sequence. `dwell` is the raw time span spent
/// there; nodes inserted to bridge gaps have none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visit {
    pub node: usize,
    pub timepoint: u32,
    pub dwell: Option<(i64, i64)>,
}

/// Index of the nearest node, ties to the lower id.
pub fn nearest_node(g: &LocationGraph, lat: f64, lon: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, n) in g.nodes().iter().enumerate() {
        let d = haversine_m(lat, lon, n.lat, n.lon);
        best = match best {
            Some((j, bd)) if bd < d || (bd == d && g.rank(j) < g.rank(i)) => Some((j, bd)),
            _ => Some((i, d)),
        };
    }
    best
}

/// Snaps raw points to nodes, collapses repeats, and bridges non-adjacent
/// consecutive nodes with shortest paths; one timepoint per traversal.
pub fn snap_trajectory(
    raw: &TrainingTrajectory,
    g: &LocationGraph,
    radius_m: f64,
) -> Result<Vec<Visit>, LearnError> {
    if g.is_empty() {
        return Err(LearnError::EmptyGraph);
    }
    let mut collapsed: Vec<(usize, i64, i64)> = Vec::new();
    for (index, p) in raw.points.iter().enumerate() {
        let (node, d) = nearest_node(g, p.lat, p.lon).ok_or(LearnError::EmptyGraph)?;
        if d > radius_m {
            return Err(LearnError::TooFar {
                index,
                distance_m: d,
                radius_m,
            });
        }
        match collapsed.last_mut() {
            Some(last) if last.0 == node => last.2 = p.timestamp,
            _ => collapsed.push((node, p.timestamp, p.timestamp)),
        }
    }
    let mut out: Vec<Visit> = Vec::with_capacity(collapsed.len());
    for (node, start, end) in collapsed {
        if let Some(prev) = out.last().map(|v| v.node) {
            if !g.adjacent(prev, node) {
                let path = g.shortest_path(prev, node).ok_or_else(|| {
                    LearnError::Disconnected(g.node(prev).id.clone(), g.node(node).id.clone())
                })?;
                for &mid in &path[1..path.len() - 1] {
                    out.push(Visit {
                        node: mid,
                        timepoint: out.len() as u32 + 1,
                        dwell: None,
                    });
                }
            }
        }
        out.push(Visit {
            node,
            timepoint: out.len() as u32 + 1,
            dwell: Some((start, end)),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MovementPattern {
    pub from_category: Category,
    pub to_category: Category,
    pub hops: u32,
    pub frequency: u32,
    pub support: u32,
}

/// Counts ordered landmark-category pairs exactly `n` positions apart for
/// each `n <= n_max`. Support is the number of from-category positions with
/// a successor `n` steps later. Only observed pairs are listed.
pub fn extract_patterns(seq: &[Visit], g: &LocationGraph, n_max: u32) -> Vec<MovementPattern> {
    let cats: Vec<Category> = seq.iter().map(|v| g.category(v.node)).collect();
    let mut out = Vec::new();
    for n in 1..=n_max as usize {
        if n >= cats.len() {
            break;
        }
        let mut support: BTreeMap<Category, u32> = BTreeMap::new();
        let mut freq: BTreeMap<(Category, Category), u32> = BTreeMap::new();
        for i in 0..cats.len() - n {
            let (a, b) = (cats[i], cats[i + n]);
            if !a.is_landmark() {
                continue;
            }
            *support.entry(a).or_default() += 1;
            if b.is_landmark() && a != b {
                *freq.entry((a, b)).or_default() += 1;
            }
        }
        for ((a, b), f) in freq {
            out.push(MovementPattern {
                from_category: a,
                to_category: b,
                hops: n as u32,
                frequency: f,
                support: support[&a],
            });
        }
    }
    out
}

/// Smallest hop distance between any node of `a` and any node of `b`, per
/// ordered landmark pair.
pub fn category_distances(g: &LocationGraph) -> BTreeMap<(Category, Category), u32> {
    let mut out = BTreeMap::new();
    for a in Category::landmarks() {
        // multi-source BFS from every node of category a
        let mut dist = vec![u32::MAX; g.len()];
        let mut queue = std::collections::VecDeque::new();
        for i in (0..g.len()).filter(|&i| g.category(i) == a) {
            dist[i] = 0;
            queue.push_back(i);
        }
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for b in Category::landmarks().filter(|&b| b != a) {
            let d = (0..g.len())
                .filter(|&i| g.category(i) == b)
                .map(|i| dist[i])
                .min()
                .unwrap_or(u32::MAX);
            if d != u32::MAX {
                out.insert((a, b), d);
            }
        }
    }
    out
}

/// Confidence `0.5 + 0.5 (1 - f/tau)` on the fixed-point grid.
pub fn confidence(frequency: u32, support: u32, tau: f64) -> Scalar {
    let f = if support == 0 {
        0.0
    } else {
        frequency as f64 / support as f64
    };
    Scalar::from_f64_rounded(0.5 + 0.5 * (1.0 - f / tau))
}

/// `abnormal(A):[conf,1] <- dt=0: c1(A) AND c2(A) AND AFTER{n}(c2(A),c1(A))`.
pub fn pair_rule(c1: Category, c2: Category, n: u32, conf: Scalar) -> GapRule {
    let a = || vec![Term::Var("A".into())];
    let lit = |c: Category| Literal::new(c.predicate(), a());
    let tru = |l: Literal| AnnotatedFormula::Literal {
        literal: l,
        annotation: Annotation::TRUE,
    };
    GapRule {
        head: Literal::new(ABNORMAL, a()),
        head_annotation: Annotation::new(conf, Scalar::ONE).expect("conf <= 1"),
        delta_t: 0,
        body: vec![
            tru(lit(c1)),
            tru(lit(c2)),
            AnnotatedFormula::Temporal {
                op: TemporalOp::After,
                first: lit(c2),
                second: lit(c1),
                lag: Some(n),
                annotation: Annotation::TRUE,
            },
        ],
        class: Some(if n == 1 {
            HopClass::SingleHop
        } else {
            HopClass::MultiHop
        }),
    }
}

/// Declarations for agent-level rules over `agents`.
pub fn rule_header(agents: &[String]) -> Program {
    let mut p = Program::default();
    p.extend_domain("agent", agents.iter().cloned());
    for c in Category::landmarks() {
        p.declare_predicate(c.predicate(), &["agent"]);
    }
    p.declare_predicate(ABNORMAL, &["agent"]);
    p
}

/// Emits a rule for every graph-possible landmark pair at every hop
/// `n <= n_max` whose conditional frequency is below `tau`. A pair is
/// graph-possible at `n` when some nodes of the two categories are at most
/// `n` hops apart. Single-hop rules come first.
pub fn learn_rules(
    agent: &str,
    patterns: &[MovementPattern],
    tau: f64,
    n_max: u32,
    g: &LocationGraph,
) -> Result<Program, LearnError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(LearnError::BadTau(tau));
    }
    if n_max == 0 {
        return Err(LearnError::BadHopBound);
    }
    let dist = category_distances(g);
    let mut supports = BTreeMap::new();
    for p in patterns {
        supports.insert((p.from_category, p.hops), p.support);
    }
    let mut program = rule_header(&[agent.to_string()]);
    for n in 1..=n_max {
        for (&(c1, c2), &d) in &dist {
            if d > n {
                continue;
            }
            let freq = patterns
                .iter()
                .find(|p| p.from_category == c1 && p.to_category == c2 && p.hops == n)
                .map(|p| p.frequency)
                .unwrap_or(0);
            let support = supports.get(&(c1, n)).copied().unwrap_or(0);
            let f = if support == 0 {
                0.0
            } else {
                freq as f64 / support as f64
            };
            if f < tau {
                program
                    .rules
                    .push(pair_rule(c1, c2, n, confidence(freq, support, tau)));
            }
        }
    }
    Ok(program)
}

/// Snap, extract and learn in one go.
pub fn learn_from_trajectory(
    raw: &TrainingTrajectory,
    g: &LocationGraph,
    tau: f64,
    n_max: u32,
) -> Result<(Program, Vec<MovementPattern>), LearnError> {
    let seq = snap_trajectory(raw, g, DEFAULT_SNAP_RADIUS_M)?;
    let patterns = extract_patterns(&seq, g, n_max);
    Ok((learn_rules(&raw.agent, &patterns, tau, n_max, g)?, patterns))
}
