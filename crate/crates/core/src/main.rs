use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use trajabduce::bench::{
    adhoc_row, dense_program, heuristic_scatter, random_leg, random_observations, runtime_row,
    to_csv,
};
use trajabduce::config::{
    read_labels_csv, read_objectives_csv, read_training_csv, read_truth_csv, ConfigError,
    GraphSource, ScenarioConfig,
};
use trajabduce::eval::{pd_agent_level, pd_point_level, run_cohort, CohortConfig, EvalError};
use trajabduce::graph::{synth_graph, CategoryMix, GraphError, LocationGraph, SynthKind};
use trajabduce::lang::{parse_program, print_program, LangError, ParseError, Program};
use trajabduce::learn::{
    learn_from_trajectory, LearnError, TrainingTrajectory, DEFAULT_SNAP_RADIUS_M,
};
use trajabduce::score::{
    format_micros, precompute_weights, HeuristicMode, ScoreError, Scorer, WeightedGraph,
};
use trajabduce::search::{
    abduce, explain, write_trajectory_csv, AbduceOptions, ObservationSet, SearchError,
};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// Abductive trajectory generation over annotated temporal logic programs.
#[derive(Debug, Parser)]
#[command(name = "trajabduce", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario TOML; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Node CSV (id,lat,lon,category).
    #[arg(long, global = true, requires = "edges")]
    nodes: Option<PathBuf>,
    /// Edge CSV (src,dst).
    #[arg(long, global = true, requires = "nodes")]
    edges: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long = "nmax", global = true)]
    n_max: Option<u32>,
    /// dijkstra, depth1 or none.
    #[arg(long, global = true)]
    heuristic: Option<HeuristicMode>,
    /// Compute edge weights during search instead of up front.
    #[arg(long, global = true)]
    adhoc: bool,
    /// Largest timepoint allowed in objectives.
    #[arg(long, global = true)]
    horizon: Option<u32>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the graph and training trajectories.
    Ingest {
        #[arg(long)]
        training: Vec<PathBuf>,
    },
    /// Learn one rule program per agent and write `<out>/<agent>.anl`.
    Learn {
        #[arg(long)]
        training: Vec<PathBuf>,
    },
    /// Write the weighted graph of single-hop rule costs as CSV.
    Weigh {
        #[arg(long)]
        program: Option<PathBuf>,
        /// Agent to score; defaults to the first constant of `agent`.
        #[arg(long)]
        agent: Option<String>,
    },
    /// Generate explanation trajectories for every agent in the objectives.
    Abduce {
        /// A program file, or a directory of `<agent>.anl` files.
        #[arg(long)]
        program: Option<PathBuf>,
        #[arg(long)]
        objectives: Option<PathBuf>,
    },
    /// Run the synthetic cohort and report relative anomaly ratios.
    Eval {
        #[arg(long, default_value_t = 20)]
        agents: usize,
        #[arg(long, default_value_t = 200)]
        size: usize,
        #[arg(long, default_value_t = 14)]
        days: u32,
        #[arg(long, default_value_t = 0)]
        slack: u32,
        /// Detector verdicts (agent,timepoint,anomalous) for PD.
        #[arg(long, requires = "truth")]
        labels: Option<PathBuf>,
        /// Inserted anomalies (agent,timepoint).
        #[arg(long, requires = "labels")]
        truth: Option<PathBuf>,
    },
    /// Heuristic bound, A* against DFS and ad-hoc against precomputed tables.
    Bench {
        #[arg(long, default_value_t = 50)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        legs: usize,
        /// Steps of the runtime leg; its goal is the node farthest from node 0.
        #[arg(long, default_value_t = 20)]
        horizon_steps: u32,
        #[arg(long, default_value_t = 300)]
        budget_secs: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(s) = cause.downcast_ref::<SearchError>() {
            return search_code(s);
        }
        if let Some(ConfigError::Search(s)) = cause.downcast_ref::<ConfigError>() {
            return search_code(s);
        }
        if let Some(EvalError::Search(s)) = cause.downcast_ref::<EvalError>() {
            return search_code(s);
        }
        if cause.is::<ConfigError>()
            || cause.is::<ParseError>()
            || cause.is::<LangError>()
            || cause.is::<GraphError>()
            || cause.is::<LearnError>()
            || cause.is::<EvalError>()
            || cause.is::<std::io::Error>()
            || cause.is::<csv::Error>()
            || cause.is::<InputError>()
        {
            return EXIT_INPUT;
        }
    }
    EXIT_INTERNAL
}

fn search_code(e: &SearchError) -> u8 {
    match e {
        SearchError::Infeasible { .. } | SearchError::InconsistentObservations { .. } => {
            EXIT_INFEASIBLE
        }
        SearchError::ZeroTime | SearchError::Empty | SearchError::Graph(_) => EXIT_INPUT,
        SearchError::Score(ScoreError::Inconsistent) => EXIT_INFEASIBLE,
        _ => EXIT_INTERNAL,
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct InputError(String);

fn input(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// Scenario file merged with flag overrides, then validated.
fn scenario(c: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let (Some(nodes), Some(edges)) = (&c.nodes, &c.edges) {
        cfg.graph = Some(GraphSource::Files {
            nodes: nodes.clone(),
            edges: edges.clone(),
        });
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.tau {
        cfg.tau = t;
    }
    if let Some(n) = c.n_max {
        cfg.n_max = n;
    }
    if let Some(h) = c.heuristic {
        cfg.heuristic = h;
    }
    if c.adhoc {
        cfg.adhoc = true;
    }
    if c.horizon.is_some() {
        cfg.horizon = c.horizon;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8> {
    let c = &cli.common;
    match cli.command {
        Command::Ingest { training } => ingest(&with_training(scenario(c)?, training)?),
        Command::Learn { training } => learn(&with_training(scenario(c)?, training)?, &c.out),
        Command::Weigh { program, agent } => {
            weigh(&with_program(scenario(c)?, program)?, agent, &c.out)
        }
        Command::Abduce {
            program,
            objectives,
        } => {
            let mut cfg = with_program(scenario(c)?, program)?;
            if objectives.is_some() {
                cfg.objectives = objectives;
                cfg.validate()?;
            }
            abduce_cmd(&cfg, &c.out)
        }
        Command::Eval {
            agents,
            size,
            days,
            slack,
            labels,
            truth,
        } => {
            let cfg = scenario(c)?;
            let cohort = CohortConfig {
                agents,
                nodes: size,
                days,
                slack,
                tau: cfg.tau,
                n_max: cfg.n_max,
                seed: cfg.seed,
                mode: cfg.heuristic,
                adhoc: cfg.adhoc,
                ..CohortConfig::default()
            };
            eval_cmd(&cohort, labels.zip(truth), &c.out)
        }
        Command::Bench {
            size,
            legs,
            horizon_steps,
            budget_secs,
        } => bench_cmd(
            &scenario(c)?,
            size,
            legs,
            horizon_steps,
            Duration::from_secs(budget_secs),
            &c.out,
        ),
    }
}

fn with_training(mut cfg: ScenarioConfig, training: Vec<PathBuf>) -> Result<ScenarioConfig> {
    if !training.is_empty() {
        cfg.training = training;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn with_program(mut cfg: ScenarioConfig, program: Option<PathBuf>) -> Result<ScenarioConfig> {
    if program.is_some() {
        cfg.program = program;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_training(cfg: &ScenarioConfig) -> Result<Vec<TrainingTrajectory>> {
    if cfg.training.is_empty() {
        return Err(input("no training files given"));
    }
    let mut all = Vec::new();
    for p in &cfg.training {
        all.extend(read_training_csv(p)?);
    }
    Ok(all)
}

fn load_program(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let p = parse_program(&text).with_context(|| format!("parsing {}", path.display()))?;
    p.validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(p)
}

fn ingest(cfg: &ScenarioConfig) -> Result<u8> {
    let g = cfg.build_graph()?;
    println!(
        "graph: {} nodes, {} edges, connected: {}",
        g.len(),
        g.edge_count(),
        g.is_connected()
    );
    for t in load_training(cfg)? {
        let seq = trajabduce::learn::snap_trajectory(&t, &g, DEFAULT_SNAP_RADIUS_M)
            .with_context(|| format!("agent `{}`", t.agent))?;
        println!(
            "{}: {} points, {} snapped positions",
            t.agent,
            t.points.len(),
            seq.len()
        );
    }
    Ok(0)
}

fn learn(cfg: &ScenarioConfig, out: &Path) -> Result<u8> {
    let g = cfg.build_graph()?;
    let training = load_training(cfg)?;
    let learned = training
        .par_iter()
        .map(|t| {
            learn_from_trajectory(t, &g, cfg.tau, cfg.n_max)
                .map(|(p, _)| (t.agent.clone(), p))
                .with_context(|| format!("agent `{}`", t.agent))
        })
        .collect::<Result<Vec<_>>>()?;
    create_out(out)?;
    for (agent, p) in learned {
        info!("{agent}: {} rules", p.rules.len());
        write_file(&out.join(format!("{agent}.anl")), print_program(&p))?;
    }
    Ok(0)
}

fn first_agent(p: &Program) -> Option<String> {
    p.domain("agent").and_then(|d| d.constants.first().cloned())
}

fn weigh(cfg: &ScenarioConfig, agent: Option<String>, out: &Path) -> Result<u8> {
    let g = cfg.build_graph()?;
    let path = cfg
        .program
        .as_ref()
        .ok_or_else(|| input("no program given"))?;
    let p = load_program(path)?;
    let agent = agent
        .or_else(|| first_agent(&p))
        .ok_or_else(|| input("no agent given and none declared"))?;
    let scorer = Scorer::new(&p, &g, &agent)?;
    let gw = if cfg.adhoc {
        WeightedGraph::empty(&g)
    } else {
        precompute_weights(&scorer)
    };
    create_out(out)?;
    let mut buf = Vec::new();
    gw.write_csv(&g, &mut buf)?;
    write_file(&out.join("weights.csv"), buf)?;
    println!(
        "{} of {} directed edges weighed",
        gw.computed_count(),
        gw.total_edges()
    );
    Ok(0)
}

fn program_for(path: &Path, agent: &str) -> Result<Program> {
    if path.is_dir() {
        load_program(&path.join(format!("{agent}.anl")))
    } else {
        load_program(path)
    }
}

fn abduce_cmd(cfg: &ScenarioConfig, out: &Path) -> Result<u8> {
    let g = cfg.build_graph()?;
    let prog_path = cfg
        .program
        .as_ref()
        .ok_or_else(|| input("no program given"))?;
    let obj_path = cfg
        .objectives
        .as_ref()
        .ok_or_else(|| input("no objectives given"))?;
    let sets = read_objectives_csv(obj_path)?;
    cfg.check_horizon(&sets)?;
    let opts = AbduceOptions {
        mode: cfg.heuristic,
        adhoc: cfg.adhoc,
    };
    let results: Vec<Result<_>> = sets
        .par_iter()
        .map(|o| abduce_one(&g, prog_path, o, opts))
        .collect();
    let mut trajectories = Vec::new();
    let mut reports = Vec::new();
    let mut worst = 0u8;
    for (o, r) in sets.iter().zip(results) {
        match r {
            Ok((e, stats)) => {
                info!(
                    "{}: {} legs, {} expansions",
                    o.agent, stats.legs, stats.search.expansions
                );
                reports.push(explain(&e, &g));
                trajectories.push(e);
            }
            Err(e) => {
                eprintln!("agent `{}`: {e:#}", o.agent);
                worst = worst.max(exit_code(&e));
            }
        }
    }
    create_out(out)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&trajectories, &g, &mut buf)?;
    write_file(&out.join("trajectories.csv"), buf)?;
    write_file(
        &out.join("explanations.json"),
        serde_json::to_string_pretty(&reports)?,
    )?;
    for e in &trajectories {
        println!("{}: value {}", e.agent, format_micros(e.total_value));
    }
    Ok(worst)
}

fn abduce_one(
    g: &LocationGraph,
    prog_path: &Path,
    o: &ObservationSet,
    opts: AbduceOptions,
) -> Result<(
    trajabduce::search::ExplanationTrajectory,
    trajabduce::search::AbduceStats,
)> {
    let p = program_for(prog_path, &o.agent)?;
    let mut scorer = Scorer::new(&p, g, &o.agent)?;
    let (e, _, stats) = abduce(&mut scorer, o, opts)?;
    Ok((e, stats))
}

fn eval_cmd(cohort: &CohortConfig, pd: Option<(PathBuf, PathBuf)>, out: &Path) -> Result<u8> {
    let mut report = run_cohort(cohort)?;
    if let Some((labels, truth)) = pd {
        let labels = read_labels_csv(&labels)?;
        let (agents, points) = read_truth_csv(&truth)?;
        report.pd_agent = Some(pd_agent_level(&labels, &agents)?);
        if !points.is_empty() {
            report.pd_point = Some(pd_point_level(&labels, &points)?);
        }
    }
    create_out(out)?;
    write_file(
        &out.join("eval_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_file(&out.join("ratios.csv"), report.ratio_csv())?;
    println!(
        "{} agents, fraction with ratio <= 1: {:.3}",
        report.agents.len(),
        report.fraction_ratio_at_most_one
    );
    Ok(0)
}

#[derive(Serialize)]
struct ScatterOut {
    leg: usize,
    node: String,
    time: u32,
    heuristic: f64,
    actual: f64,
}

fn bench_cmd(
    cfg: &ScenarioConfig,
    size: usize,
    legs: usize,
    steps: u32,
    budget: Duration,
    out: &Path,
) -> Result<u8> {
    if steps == 0 {
        bail!(input("horizon-steps must be at least 1"));
    }
    let g = match &cfg.graph {
        Some(_) => cfg.build_graph()?,
        None => synth_graph(
            SynthKind::RandomGeometric,
            size,
            cfg.seed,
            &CategoryMix::city(),
        )?,
    };
    let agent = "bench";
    let program = dense_program(&g, agent, cfg.n_max, cfg.seed);
    info!("{} rules over {} nodes", program.rules.len(), g.len());
    create_out(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scatter = Vec::new();
    for i in 0..legs {
        let leg = random_leg(&g, &mut rng, 4, 2);
        let mut scorer = Scorer::new(&program, &g, agent)?;
        for r in heuristic_scatter(&mut scorer, &leg, cfg.heuristic)? {
            scatter.push(ScatterOut {
                leg: i,
                node: g.node(r.node).id.clone(),
                time: r.time,
                heuristic: trajabduce::score::micros_to_f64(r.heuristic),
                actual: trajabduce::score::micros_to_f64(r.actual),
            });
        }
    }
    write_file(&out.join("heuristic_scatter.csv"), to_csv(&scatter)?)?;

    let dist = g.bfs_distances(0);
    let goal = (0..g.len())
        .filter(|&v| dist[v] != u32::MAX && dist[v] <= steps)
        .max_by_key(|&v| (dist[v], std::cmp::Reverse(v)))
        .ok_or_else(|| anyhow!("graph is empty"))?;
    let leg = trajabduce::search::Leg {
        from: 0,
        t0: 1,
        to: goal,
        t1: 1 + steps,
    };
    let row = runtime_row(&program, &g, agent, &leg, cfg.heuristic, budget)?;
    println!(
        "A*: {:.1} ms, {} expansions; DFS: {:.1} ms, {} expansions{}",
        row.astar_ms,
        row.astar_expansions,
        row.dfs_ms,
        row.dfs_expansions,
        if row.dfs_timed_out {
            " (budget exhausted)"
        } else {
            ""
        }
    );
    write_file(&out.join("runtime.csv"), to_csv(&[row])?)?;

    let mut adhoc = Vec::new();
    for _ in 0..legs {
        let o = random_observations(&g, &mut rng, agent, 2, 4, 1);
        adhoc.push(adhoc_row(&program, &g, &o)?);
    }
    write_file(&out.join("adhoc.csv"), to_csv(&adhoc)?)?;
    Ok(0)
}
