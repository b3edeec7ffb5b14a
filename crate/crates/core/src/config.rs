//! Scenario configuration and the CSV input formats read by the CLI.
//!
//! A scenario is a TOML file. Relative paths resolve against the file's
//! directory.
//!
//! ```toml
//! seed = 7
//! tau = 0.05
//! n_max = 3
//! heuristic = "dijkstra"
//! horizon = 200
//! training = ["train.csv"]
//! objectives = "objectives.csv"
//!
//! [graph]
//! nodes = "nodes.csv"
//! edges = "edges.csv"
//! ```
//!
//! or, for a synthetic graph, `[graph]` with `synth = "random-geometric"`,
//! `size = 200` and optionally `mix = "city"`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::DetectorLabel;
use crate::graph::{load_graph, synth_graph, CategoryMix, GraphError, LocationGraph, SynthKind};
use crate::learn::{TrainingTrajectory, TrajPoint, DEFAULT_N_MAX, DEFAULT_TAU};
use crate::score::HeuristicMode;
use crate::search::{Observation, ObservationSet, RecurringSpec, SearchError};

pub const MAX_N_MAX: u32 = 16;
pub const MAX_SYNTH_SIZE: usize = 100_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("referenced file `{0}` does not exist")]
    Missing(PathBuf),
    #[error("{0}")]
    Range(String),
    #[error("{file}, row {row}: {message}")]
    Row {
        file: PathBuf,
        row: u64,
        message: String,
    },
    #[error("no graph source given")]
    NoGraph,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MixName {
    Uniform,
    #[default]
    City,
}

impl MixName {
    pub fn mix(self) -> CategoryMix {
        match self {
            MixName::Uniform => CategoryMix::uniform(),
            MixName::City => CategoryMix::city(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GraphSource {
    Files {
        nodes: PathBuf,
        edges: PathBuf,
    },
    Synth {
        synth: SynthKind,
        size: usize,
        #[serde(default)]
        mix: MixName,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub graph: Option<GraphSource>,
    #[serde(default)]
    pub training: Vec<PathBuf>,
    #[serde(default)]
    pub objectives: Option<PathBuf>,
    #[serde(default)]
    pub program: Option<PathBuf>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default = "default_heuristic")]
    pub heuristic: HeuristicMode,
    #[serde(default)]
    pub adhoc: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub horizon: Option<u32>,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_n_max() -> u32 {
    DEFAULT_N_MAX
}
fn default_heuristic() -> HeuristicMode {
    HeuristicMode::Dijkstra
}
fn default_seed() -> u64 {
    7
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            graph: None,
            training: Vec::new(),
            objectives: None,
            program: None,
            tau: DEFAULT_TAU,
            n_max: DEFAULT_N_MAX,
            heuristic: HeuristicMode::Dijkstra,
            adhoc: false,
            seed: default_seed(),
            horizon: None,
        }
    }
}

impl ScenarioConfig {
    /// Reads, resolves and validates a scenario file.
    pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Toml {
                path: path.into(),
                source,
            })?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(GraphSource::Files { nodes, edges }) = &mut self.graph {
            fix(nodes);
            fix(edges);
        }
        self.training.iter_mut().for_each(fix);
        self.objectives.iter_mut().for_each(fix);
        self.program.iter_mut().for_each(fix);
    }

    /// Parameter ranges and file existence.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(ConfigError::Range(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if self.n_max == 0 || self.n_max > MAX_N_MAX {
            return Err(ConfigError::Range(format!(
                "n_max must lie in 1..={MAX_N_MAX}, got {}",
                self.n_max
            )));
        }
        if self.horizon == Some(0) {
            return Err(ConfigError::Range("horizon must be at least 1".into()));
        }
        if let Some(GraphSource::Synth { synth, size, .. }) = &self.graph {
            let ok = match synth {
                SynthKind::Grid => (2..)
                    .map(|k| k * k)
                    .take_while(|&s| s <= *size)
                    .any(|s| s == *size),
                SynthKind::RandomGeometric => *size >= 2,
            };
            if !ok || *size > MAX_SYNTH_SIZE {
                return Err(ConfigError::Range(format!(
                    "unsupported synthetic graph size {size}"
                )));
            }
        }
        for p in self.files() {
            if !p.exists() {
                return Err(ConfigError::Missing(p.to_path_buf()));
            }
        }
        Ok(())
    }

    fn files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        if let Some(GraphSource::Files { nodes, edges }) = &self.graph {
            out.push(nodes);
            out.push(edges);
        }
        out.extend(self.training.iter().map(PathBuf::as_path));
        out.extend(self.objectives.as_deref());
        out.extend(self.program.as_deref());
        out
    }

    pub fn build_graph(&self) -> Result<LocationGraph, ConfigError> {
        match &self.graph {
            None => Err(ConfigError::NoGraph),
            Some(GraphSource::Files { nodes, edges }) => Ok(load_graph(nodes, edges)?),
            Some(GraphSource::Synth { synth, size, mix }) => {
                Ok(synth_graph(*synth, *size, self.seed, &mix.mix())?)
            }
        }
    }

    /// Errors if any observation lies past the horizon.
    pub fn check_horizon(&self, sets: &[ObservationSet]) -> Result<(), ConfigError> {
        let Some(h) = self.horizon else { return Ok(()) };
        for o in sets {
            if let Some(last) = o.obs.last().filter(|x| x.time > h) {
                return Err(ConfigError::Range(format!(
                    "agent `{}` has an observation at {} beyond horizon {h}",
                    o.agent, last.time
                )));
            }
        }
        Ok(())
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, ConfigError> {
    let f = fs::File::open(path).map_err(|source| ConfigError::Io {
        path: path.into(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(f))
}

fn rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(u64, T)>, ConfigError> {
    let mut rd = reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize::<T>().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| ConfigError::Row {
            file: path.into(),
            row,
            message: e.to_string(),
        })?;
        out.push((row, rec));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct TrainingRow {
    agent: String,
    lat: f64,
    lon: f64,
    timestamp: i64,
}

/// `agent,lat,lon,timestamp` (epoch seconds), grouped by agent in order of
/// first appearance; each agent's points must have increasing timestamps.
pub fn read_training_csv(path: &Path) -> Result<Vec<TrainingTrajectory>, ConfigError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_agent: BTreeMap<String, Vec<TrajPoint>> = BTreeMap::new();
    let mut last_row: BTreeMap<String, u64> = BTreeMap::new();
    for (row, r) in rows::<TrainingRow>(path)? {
        if !(-90.0..=90.0).contains(&r.lat) || !(-180.0..=180.0).contains(&r.lon) {
            return Err(ConfigError::Row {
                file: path.into(),
                row,
                message: "coordinate out of range".into(),
            });
        }
        if !by_agent.contains_key(&r.agent) {
            order.push(r.agent.clone());
        }
        last_row.insert(r.agent.clone(), row);
        by_agent.entry(r.agent).or_default().push(TrajPoint {
            lat: r.lat,
            lon: r.lon,
            timestamp: r.timestamp,
        });
    }
    order
        .into_iter()
        .map(|a| {
            let pts = by_agent.remove(&a).expect("grouped");
            TrainingTrajectory::new(a.clone(), pts).map_err(|e| ConfigError::Row {
                file: path.into(),
                row: last_row[&a],
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct ObjectiveRow {
    agent: String,
    node: String,
    time: u32,
    #[serde(default)]
    period: Option<u32>,
    #[serde(default)]
    count: Option<u32>,
}

/// `agent,node,time[,period,count]`. A row with `count > 1` is a recurring
/// objective at `time`, `time + period`, ...
pub fn read_objectives_csv(path: &Path) -> Result<Vec<ObservationSet>, ConfigError> {
    let mut order: Vec<String> = Vec::new();
    let mut single: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    let mut recurring: BTreeMap<String, Vec<RecurringSpec>> = BTreeMap::new();
    for (row, r) in rows::<ObjectiveRow>(path)? {
        if !single.contains_key(&r.agent) {
            order.push(r.agent.clone());
            single.insert(r.agent.clone(), Vec::new());
        }
        match (r.period, r.count) {
            (_, None) | (_, Some(1)) => {
                single
                    .get_mut(&r.agent)
                    .expect("inserted")
                    .push(Observation {
                        time: r.time,
                        node: r.node,
                    })
            }
            (Some(p), Some(c)) if p > 0 && c > 1 => {
                recurring.entry(r.agent).or_default().push(RecurringSpec {
                    node: r.node,
                    first: r.time,
                    period: p,
                    count: c,
                })
            }
            _ => {
                return Err(ConfigError::Row {
                    file: path.into(),
                    row,
                    message: "recurring objectives need period >= 1 and count >= 1".into(),
                })
            }
        }
    }
    order
        .into_iter()
        .map(|a| {
            let s = single.remove(&a).unwrap_or_default();
            let r = recurring.remove(&a).unwrap_or_default();
            Ok(ObservationSet::new(a, s, &r)?)
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    agent: String,
    #[serde(default)]
    timepoint: Option<u32>,
    anomalous: bool,
}

/// `agent,timepoint,anomalous`; an empty timepoint is an agent-level verdict.
pub fn read_labels_csv(path: &Path) -> Result<Vec<DetectorLabel>, ConfigError> {
    Ok(rows::<LabelRow>(path)?
        .into_iter()
        .map(|(_, r)| DetectorLabel {
            agent: r.agent,
            timepoint: r.timepoint,
            anomalous: r.anomalous,
        })
        .collect())
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    agent: String,
    #[serde(default)]
    timepoint: Option<u32>,
}

/// `agent,timepoint` rows naming inserted anomalies. Returns the agent set
/// and the set of timed points.
#[allow(clippy::type_complexity)]
pub fn read_truth_csv(
    path: &Path,
) -> Result<
    (
        std::collections::BTreeSet<String>,
        std::collections::BTreeSet<(String, u32)>,
    ),
    ConfigError,
> {
    let mut agents = std::collections::BTreeSet::new();
    let mut points = std::collections::BTreeSet::new();
    for (_, r) in rows::<TruthRow>(path)? {
        if let Some(t) = r.timepoint {
            points.insert((r.agent.clone(), t));
        }
        agents.insert(r.agent);
    }
    Ok((agents, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn scenario_round_trip_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "n.csv", "");
        write(dir.path(), "e.csv", "");
        let p = write(
            dir.path(),
            "s.toml",
            "tau = 0.1\nheuristic = \"depth1\"\n[graph]\nnodes = \"n.csv\"\nedges = \"e.csv\"\n",
        );
        let cfg = ScenarioConfig::load(&p).unwrap();
        assert_eq!(cfg.tau, 0.1);
        assert_eq!(cfg.n_max, DEFAULT_N_MAX);
        assert_eq!(cfg.heuristic, HeuristicMode::Depth1);
        match cfg.graph {
            Some(GraphSource::Files { nodes, .. }) => assert_eq!(nodes, dir.path().join("n.csv")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synth_source_builds() {
        let cfg: ScenarioConfig = toml::from_str("[graph]\nsynth = \"grid\"\nsize = 16\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.build_graph().unwrap().len(), 16);
        let bad: ScenarioConfig = toml::from_str("[graph]\nsynth = \"grid\"\nsize = 15\n").unwrap();
        assert!(matches!(bad.validate(), Err(ConfigError::Range(_))));
    }

    #[test]
    fn validation_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.toml", "tau = 0.0\n");
        assert!(matches!(
            ScenarioConfig::load(&p),
            Err(ConfigError::Range(_))
        ));
        let p = write(dir.path(), "s.toml", "n_max = 0\n");
        assert!(matches!(
            ScenarioConfig::load(&p),
            Err(ConfigError::Range(_))
        ));
        let p = write(dir.path(), "s.toml", "training = [\"nope.csv\"]\n");
        assert!(matches!(
            ScenarioConfig::load(&p),
            Err(ConfigError::Missing(_))
        ));
        let p = write(dir.path(), "s.toml", "bogus = 1\n");
        assert!(matches!(
            ScenarioConfig::load(&p),
            Err(ConfigError::Toml { .. })
        ));
    }

    #[test]
    fn objectives_with_recurrence() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "o.csv",
            "agent,node,time,period,count\na1,x,1,,\na1,y,3,4,3\na2,z,2,,\n",
        );
        let sets = read_objectives_csv(&p).unwrap();
        assert_eq!(sets.len(), 2);
        let times: Vec<u32> = sets[0].obs.iter().map(|o| o.time).collect();
        assert_eq!(times, vec![1, 3, 7, 11]);
        let cfg = ScenarioConfig {
            horizon: Some(10),
            ..Default::default()
        };
        assert!(cfg.check_horizon(&sets).is_err());
        let p = write(
            dir.path(),
            "o.csv",
            "agent,node,time,period,count\na1,x,1,,\na1,y,1,,\n",
        );
        assert!(matches!(
            read_objectives_csv(&p),
            Err(ConfigError::Search(
                SearchError::InconsistentObservations { .. }
            ))
        ));
    }

    #[test]
    fn training_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "agent,lat,lon,timestamp\nb,35,-83,10\na,35,-83,5\nb,35.1,-83,20\n",
        );
        let tr = read_training_csv(&p).unwrap();
        assert_eq!(
            tr.iter().map(|t| t.agent.as_str()).collect::<Vec<_>>(),
            vec!["b", "a"]
        );
        assert_eq!(tr[0].points.len(), 2);
        let p = write(
            dir.path(),
            "t.csv",
            "agent,lat,lon,timestamp\na,35,-83,5\na,95,-83,6\n",
        );
        assert!(matches!(
            read_training_csv(&p),
            Err(ConfigError::Row { row: 3, .. })
        ));
        let p = write(
            dir.path(),
            "t.csv",
            "agent,lat,lon,timestamp\na,35,-83,5\na,35,x,6\n",
        );
        assert!(matches!(
            read_training_csv(&p),
            Err(ConfigError::Row { row: 3, .. })
        ));
    }

    #[test]
    fn labels_and_truth() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "l.csv",
            "agent,timepoint,anomalous\na,,true\nb,3,false\n",
        );
        let l = read_labels_csv(&p).unwrap();
        assert_eq!(l[0].timepoint, None);
        assert!(l[0].anomalous);
        assert_eq!(l[1].timepoint, Some(3));
        let p = write(dir.path(), "t.csv", "agent,timepoint\na,\nb,3\n");
        let (a, pts) = read_truth_csv(&p).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(pts.len(), 1);
    }
}
