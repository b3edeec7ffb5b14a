//! Evaluation: relative anomaly ratio, probability of detection, and a
//! seeded synthetic cohort with home/work routines.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{synth_graph, Category, CategoryMix, GraphError, LocationGraph, SynthKind};
use crate::lang::Program;
use crate::learn::{
    extract_patterns, learn_rules, snap_trajectory, LearnError, TrainingTrajectory, TrajPoint,
    DEFAULT_SNAP_RADIUS_M,
};
use crate::score::{HeuristicMode, ScoreError, Scorer};
use crate::search::{abduce, AbduceOptions, Observation, ObservationSet, SearchError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty training set")]
    EmptyTraining,
    #[error("empty truth set")]
    EmptyTruth,
    #[error("labels do not cover `{0}`")]
    Uncovered(String),
    #[error("graph has no {0} node")]
    MissingCategory(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// `generated / mean(training)`. A zero mean gives 1 when the numerator is
/// also zero and `+inf` otherwise.
pub fn relative_anomaly_ratio(generated: u64, training: &[u64]) -> Result<f64, EvalError> {
    if training.is_empty() {
        return Err(EvalError::EmptyTraining);
    }
    let sum: u64 = training.iter().sum();
    if sum == 0 {
        return Ok(if generated == 0 { 1.0 } else { f64::INFINITY });
    }
    Ok(generated as f64 * training.len() as f64 / sum as f64)
}

/// A detector verdict for an agent, or for one of its timepoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorLabel {
    pub agent: String,
    pub timepoint: Option<u32>,
    pub anomalous: bool,
}

/// Fraction of inserted agents flagged by at least one label.
pub fn pd_agent_level(
    labels: &[DetectorLabel],
    truth: &BTreeSet<String>,
) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let mut seen: BTreeMap<&str, bool> = BTreeMap::new();
    for l in labels {
        *seen.entry(l.agent.as_str()).or_default() |= l.anomalous;
    }
    let mut hit = 0usize;
    for a in truth {
        match seen.get(a.as_str()) {
            None => return Err(EvalError::Uncovered(a.clone())),
            Some(true) => hit += 1,
            Some(false) => {}
        }
    }
    Ok(hit as f64 / truth.len() as f64)
}

/// Fraction of inserted `(agent, timepoint)` anomalies flagged at that
/// timepoint. Agent-wide labels cover every timepoint of the agent.
pub fn pd_point_level(
    labels: &[DetectorLabel],
    truth: &BTreeSet<(String, u32)>,
) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let agents: BTreeSet<&str> = labels.iter().map(|l| l.agent.as_str()).collect();
    let mut hit = 0usize;
    for (a, t) in truth {
        if !agents.contains(a.as_str()) {
            return Err(EvalError::Uncovered(a.clone()));
        }
        if labels
            .iter()
            .any(|l| l.anomalous && &l.agent == a && l.timepoint.is_none_or(|lt| lt == *t))
        {
            hit += 1;
        }
    }
    Ok(hit as f64 / truth.len() as f64)
}

/// Home, work and occasional errand locations of one synthetic agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Routine {
    pub agent: String,
    pub home: usize,
    pub work: usize,
    pub errands: Vec<usize>,
    /// Days (0-based) on which an errand is run after work.
    pub errand_days: BTreeSet<u32>,
}

const WORK: [Category; 5] = [
    Category::Commercial,
    Category::Industrial,
    Category::Education,
    Category::Government,
    Category::Utility,
];
const ERRAND: [Category; 4] = [
    Category::Commercial,
    Category::Assembly,
    Category::NonProfit,
    Category::Agriculture,
];

fn pick(
    g: &LocationGraph,
    cats: &[Category],
    avoid: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let pool: Vec<usize> = (0..g.len())
        .filter(|&i| cats.contains(&g.category(i)) && !avoid.contains(&i))
        .collect();
    pool.choose(rng).copied()
}

pub fn synth_routine(
    g: &LocationGraph,
    agent: &str,
    days: u32,
    errand_count: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Routine, EvalError> {
    let home = pick(g, &[Category::Residential], &[], rng)
        .ok_or(EvalError::MissingCategory("residential"))?;
    let work = pick(g, &WORK, &[home], rng).ok_or(EvalError::MissingCategory("workplace"))?;
    let errands: Vec<usize> = (0..2)
        .filter_map(|_| pick(g, &ERRAND, &[home, work], rng))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut all_days: Vec<u32> = (0..days).collect();
    all_days.shuffle(rng);
    let errand_days = if errands.is_empty() {
        BTreeSet::new()
    } else {
        all_days.into_iter().take(errand_count as usize).collect()
    };
    Ok(Routine {
        agent: agent.to_string(),
        home,
        work,
        errands,
        errand_days,
    })
}

/// Stops of day `day`: home, work, an optional errand, home.
pub fn day_stops(r: &Routine, day: u32) -> Vec<usize> {
    let mut stops = vec![r.home, r.work];
    if r.errand_days.contains(&day) {
        stops.push(r.errands[day as usize % r.errands.len()]);
    }
    stops.push(r.home);
    stops
}

/// Node sequence of a day along shortest paths, with the stop positions.
pub fn day_route(g: &LocationGraph, r: &Routine, day: u32) -> (Vec<usize>, Vec<usize>) {
    let stops = day_stops(r, day);
    let mut route = vec![stops[0]];
    let mut marks = vec![0];
    for w in stops.windows(2) {
        let path = g.shortest_path(w[0], w[1]).expect("connected graph");
        route.extend_from_slice(&path[1..]);
        marks.push(route.len() - 1);
    }
    (route, marks)
}

const DAY_S: i64 = 86_400;
const EDGE_S: i64 = 60;
const DWELL_SAMPLE_S: i64 = 1_800;

fn noisy(g: &LocationGraph, node: usize, max_m: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = g.node(node);
    let r = max_m * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let dlat = r * theta.sin() / 111_320.0;
    let dlon = r * theta.cos() / (111_320.0 * n.lat.to_radians().cos());
    (n.lat + dlat, n.lon + dlon)
}

/// GPS trace of `days` days: leave home at 08:00, sample every node passed,
/// and sample every 30 minutes while dwelling. Noise is at most `noise_m`.
pub fn synth_training(
    g: &LocationGraph,
    r: &Routine,
    days: u32,
    noise_m: f64,
    rng: &mut ChaCha8Rng,
) -> TrainingTrajectory {
    let mut points = Vec::new();
    let mut push = |node: usize, ts: i64, rng: &mut ChaCha8Rng| {
        let (lat, lon) = noisy(g, node, noise_m, rng);
        points.push(TrajPoint {
            lat,
            lon,
            timestamp: ts,
        });
    };
    let mut ts = 0;
    for day in 0..days {
        let (route, marks) = day_route(g, r, day);
        let day_start = day as i64 * DAY_S;
        // night at home until 08:00
        while ts < day_start + 8 * 3_600 {
            push(r.home, ts, rng);
            ts += DWELL_SAMPLE_S;
        }
        for (i, &node) in route.iter().enumerate().skip(1) {
            ts += EDGE_S;
            push(node, ts, rng);
            let dwell = if marks[1..marks.len() - 1].contains(&i) {
                if node == r.work {
                    8 * 3_600
                } else {
                    3_600
                }
            } else {
                0
            };
            let end = ts + dwell;
            while ts + DWELL_SAMPLE_S <= end {
                ts += DWELL_SAMPLE_S;
                push(node, ts, rng);
            }
        }
        ts = ts.max(day_start + 20 * 3_600) + DWELL_SAMPLE_S;
    }
    TrainingTrajectory::new(r.agent.clone(), points).expect("increasing timestamps")
}

/// Observations pinning the stops of `day` at their traversal timepoints,
/// each stop deadline extended by `slack`.
pub fn day_observations(g: &LocationGraph, r: &Routine, day: u32, slack: u32) -> ObservationSet {
    let (route, marks) = day_route(g, r, day);
    let obs = marks
        .iter()
        .enumerate()
        .map(|(k, &m)| Observation {
            time: 1 + m as u32 + k as u32 * slack,
            node: g.node(route[m]).id.clone(),
        })
        .collect();
    ObservationSet::new(r.agent.clone(), obs, &[]).expect("distinct times")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub agents: usize,
    pub nodes: usize,
    pub days: u32,
    pub errand_days: u32,
    pub noise_m: f64,
    pub tau: f64,
    pub n_max: u32,
    pub slack: u32,
    pub seed: u64,
    pub mode: HeuristicMode,
    pub adhoc: bool,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            agents: 20,
            nodes: 200,
            days: 14,
            errand_days: 2,
            noise_m: 10.0,
            tau: crate::learn::DEFAULT_TAU,
            n_max: crate::learn::DEFAULT_N_MAX,
            slack: 0,
            seed: 7,
            mode: HeuristicMode::Dijkstra,
            adhoc: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentEval {
    pub agent: String,
    pub generated_value: f64,
    pub training_mean: f64,
    pub training_chunks: usize,
    /// `None` stands for `+inf`.
    pub ratio: Option<f64>,
    pub rules: usize,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub agents: Vec<AgentEval>,
    pub fraction_ratio_at_most_one: f64,
    pub pd_agent: Option<f64>,
    pub pd_point: Option<f64>,
}

impl EvalReport {
    pub fn from_agents(agents: Vec<AgentEval>) -> EvalReport {
        let ok = agents
            .iter()
            .filter(|a| a.ratio.is_some_and(|r| r <= 1.0))
            .count();
        let fraction = if agents.is_empty() {
            0.0
        } else {
            ok as f64 / agents.len() as f64
        };
        EvalReport {
            agents,
            fraction_ratio_at_most_one: fraction,
            pd_agent: None,
            pd_point: None,
        }
    }

    /// `agent,generated_value,training_mean,ratio` rows.
    pub fn ratio_csv(&self) -> String {
        let mut out = String::from("agent,generated_value,training_mean,ratio\n");
        for a in &self.agents {
            let ratio = a
                .ratio
                .map(|r| r.to_string())
                .unwrap_or_else(|| "inf".into());
            out.push_str(&format!(
                "{},{},{},{}\n",
                a.agent, a.generated_value, a.training_mean, ratio
            ));
        }
        out
    }
}

/// Values of consecutive `len`-long chunks of a node sequence.
pub fn chunk_values(
    scorer: &Scorer<'_>,
    seq: &[usize],
    len: usize,
) -> Result<Vec<u64>, ScoreError> {
    if len == 0 || seq.len() < len {
        return Ok(vec![scorer.sequence_value(seq)?]);
    }
    seq.chunks_exact(len)
        .map(|c| scorer.sequence_value(c))
        .collect()
}

/// Learns from one agent's training trace, abduces a held-out routine day,
/// and scores both under the learned program.
pub fn evaluate_agent(
    g: &LocationGraph,
    train: &TrainingTrajectory,
    obs: &ObservationSet,
    cfg: &CohortConfig,
) -> Result<(AgentEval, Program), EvalError> {
    let seq = snap_trajectory(train, g, DEFAULT_SNAP_RADIUS_M)?;
    let patterns = extract_patterns(&seq, g, cfg.n_max);
    let program = learn_rules(&train.agent, &patterns, cfg.tau, cfg.n_max, g)?;
    let mut scorer = Scorer::new(&program, g, &train.agent)?;
    let (e, _, _) = abduce(
        &mut scorer,
        obs,
        AbduceOptions {
            mode: cfg.mode,
            adhoc: cfg.adhoc,
        },
    )?;
    let nodes: Vec<usize> = seq.iter().map(|v| v.node).collect();
    let chunks = chunk_values(&scorer, &nodes, e.nodes.len())?;
    let ratio = relative_anomaly_ratio(e.total_value, &chunks)?;
    let mean = chunks.iter().sum::<u64>() as f64 / chunks.len() as f64 / 1e6;
    Ok((
        AgentEval {
            agent: train.agent.clone(),
            generated_value: e.total_value as f64 / 1e6,
            training_mean: mean,
            training_chunks: chunks.len(),
            ratio: ratio.is_finite().then_some(ratio),
            rules: program.rules.len(),
            verified: true,
        },
        program,
    ))
}

/// A generated cohort: graph, routines, training traces and held-out
/// observations.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub graph: LocationGraph,
    pub routines: Vec<Routine>,
    pub training: Vec<TrainingTrajectory>,
    pub observations: Vec<ObservationSet>,
}

pub fn synth_cohort(cfg: &CohortConfig) -> Result<Cohort, EvalError> {
    let graph = synth_graph(
        SynthKind::RandomGeometric,
        cfg.nodes,
        cfg.seed,
        &CategoryMix::city(),
    )?;
    let mut routines = Vec::with_capacity(cfg.agents);
    let mut training = Vec::with_capacity(cfg.agents);
    let mut observations = Vec::with_capacity(cfg.agents);
    let width = cfg.agents.max(2).saturating_sub(1).to_string().len();
    for i in 0..cfg.agents {
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let agent = format!("agent{i:0width$}");
        let r = synth_routine(&graph, &agent, cfg.days, cfg.errand_days, &mut rng)?;
        training.push(synth_training(&graph, &r, cfg.days, cfg.noise_m, &mut rng));
        // held-out day after the training window, never an errand day
        observations.push(day_observations(&graph, &r, cfg.days, cfg.slack));
        routines.push(r);
    }
    Ok(Cohort {
        graph,
        routines,
        training,
        observations,
    })
}

/// Runs every agent of the cohort in parallel; results in agent order.
pub fn run_cohort(cfg: &CohortConfig) -> Result<EvalReport, EvalError> {
    let cohort = synth_cohort(cfg)?;
    let agents = cohort
        .training
        .par_iter()
        .zip(cohort.observations.par_iter())
        .map(|(t, o)| evaluate_agent(&cohort.graph, t, o, cfg).map(|(a, _)| a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_agents(agents))
}
