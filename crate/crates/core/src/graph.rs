//! Location graph: landmark/intersection nodes joined by undirected road
//! connections, CSV ingest, encoding as facts, and seeded synthetic graphs.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{Program, Taf, TafTime};
use crate::lattice::{Annotation, GroundLiteral};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{file} row {row}: {message}")]
    Schema {
        file: String,
        row: usize,
        message: String,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("edges, row {row}: missing node `{id}`")]
    DanglingEdge { row: usize, id: String },
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("{kind} graph needs {need}, got {got} nodes")]
    BadSize {
        kind: &'static str,
        need: &'static str,
        got: usize,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Commercial,
    Unclassified,
    NonProfit,
    Residential,
    Assembly,
    Education,
    Utility,
    Industrial,
    Agriculture,
    Government,
    Intersection,
}

impl Category {
    pub const ALL: [Category; 11] = [
        Category::Commercial,
        Category::Unclassified,
        Category::NonProfit,
        Category::Residential,
        Category::Assembly,
        Category::Education,
        Category::Utility,
        Category::Industrial,
        Category::Agriculture,
        Category::Government,
        Category::Intersection,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_landmark(self) -> bool {
        self != Category::Intersection
    }

    pub fn landmarks() -> impl Iterator<Item = Category> {
        Category::ALL.into_iter().filter(|c| c.is_landmark())
    }

    /// Unary agent predicate projected when the agent is at such a node.
    pub fn predicate(self) -> &'static str {
        match self {
            Category::Commercial => "commercial",
            Category::Unclassified => "unclassified",
            Category::NonProfit => "nonprofit",
            Category::Residential => "residential",
            Category::Assembly => "assembly",
            Category::Education => "education",
            Category::Utility => "utility",
            Category::Industrial => "industrial",
            Category::Agriculture => "agriculture",
            Category::Government => "government",
            Category::Intersection => "intersection",
        }
    }

    /// Unary location predicate used when the graph is encoded as facts.
    pub fn location_predicate(self) -> String {
        format!("occ_{}", self.predicate())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Category {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.predicate() == norm)
            .ok_or_else(|| GraphError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationNode {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub category: Category,
}

/// Undirected location graph. Node indices follow insertion order;
/// adjacency lists are sorted by neighbour id.
#[derive(Debug, Clone)]
pub struct LocationGraph {
    nodes: Vec<LocationNode>,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    rank: Vec<u32>,
}

impl PartialEq for LocationGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edge_ids() == other.edge_ids()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct NodeRow {
    id: String,
    lat: f64,
    lon: f64,
    category: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct EdgeRow {
    src: String,
    dst: String,
}

impl LocationGraph {
    /// Validates and indexes a graph. Duplicate edges collapse to one.
    pub fn new(
        nodes: Vec<LocationNode>,
        edges: Vec<(String, String)>,
    ) -> Result<LocationGraph, GraphError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        let mut seen = HashSet::new();
        let mut edge_idx = Vec::with_capacity(edges.len());
        for (row, (a, b)) in edges.iter().enumerate() {
            let ia = *index.get(a).ok_or_else(|| GraphError::DanglingEdge {
                row: row + 1,
                id: a.clone(),
            })?;
            let ib = *index.get(b).ok_or_else(|| GraphError::DanglingEdge {
                row: row + 1,
                id: b.clone(),
            })?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a.clone()));
            }
            if seen.insert((ia.min(ib), ia.max(ib))) {
                edge_idx.push((ia, ib));
            }
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&x, &y| nodes[x].id.cmp(&nodes[y].id));
        let mut rank = vec![0u32; nodes.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as u32;
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b) in &edge_idx {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in adjacency.iter_mut() {
            adj.sort_by_key(|&n| rank[n]);
        }
        Ok(LocationGraph {
            nodes,
            edges: edge_idx,
            index,
            adjacency,
            rank,
        })
    }

    pub fn nodes(&self) -> &[LocationNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &LocationNode {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed movements (twice the undirected edge count).
    pub fn directed_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn edge_ids(&self) -> HashSet<(String, String)> {
        self.edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (&self.nodes[a].id, &self.nodes[b].id);
                if x <= y {
                    (x.clone(), y.clone())
                } else {
                    (y.clone(), x.clone())
                }
            })
            .collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize, GraphError> {
        self.index_of(id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn neighbors(&self, idx: usize) -> &[usize] {
        &self.adjacency[idx]
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn category(&self, idx: usize) -> Category {
        self.nodes[idx].category
    }

    /// Position of the node id in lexicographic id order.
    pub fn rank(&self, idx: usize) -> u32 {
        self.rank[idx]
    }

    /// Hop distances from `from`; `u32::MAX` when unreachable.
    pub fn bfs_distances(&self, from: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.nodes.len()];
        let mut queue = VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// A shortest path from `a` to `b` (inclusive), preferring low-id neighbours.
    pub fn shortest_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let dist = self.bfs_distances(b);
        if dist[a] == u32::MAX {
            return None;
        }
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            cur = *self.adjacency[cur]
                .iter()
                .find(|&&n| dist[n] + 1 == dist[cur])?;
            path.push(cur);
        }
        Some(path)
    }

    pub fn is_connected(&self) -> bool {
        self.nodes.is_empty() || self.bfs_distances(0).iter().all(|&d| d != u32::MAX)
    }

    pub fn read_csv<R1: Read, R2: Read>(nodes: R1, edges: R2) -> Result<LocationGraph, GraphError> {
        let mut node_list = Vec::new();
        let mut rdr = csv::Reader::from_reader(nodes);
        check_headers(&mut rdr, "nodes", &["id", "lat", "lon", "category"])?;
        for (i, rec) in rdr.deserialize::<NodeRow>().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| GraphError::Schema {
                file: "nodes".into(),
                row,
                message: e.to_string(),
            })?;
            let category = rec.category.parse().map_err(|_| GraphError::Schema {
                file: "nodes".into(),
                row,
                message: format!("unknown category `{}`", rec.category),
            })?;
            node_list.push(LocationNode {
                id: rec.id,
                lat: rec.lat,
                lon: rec.lon,
                category,
            });
        }
        let mut edge_list = Vec::new();
        let mut rdr = csv::Reader::from_reader(edges);
        check_headers(&mut rdr, "edges", &["src", "dst"])?;
        for (i, rec) in rdr.deserialize::<EdgeRow>().enumerate() {
            let rec = rec.map_err(|e| GraphError::Schema {
                file: "edges".into(),
                row: i + 2,
                message: e.to_string(),
            })?;
            edge_list.push((rec.src, rec.dst));
        }
        LocationGraph::new(node_list, edge_list).map_err(|e| match e {
            // report the file line (header is line 1)
            GraphError::DanglingEdge { row, id } => GraphError::DanglingEdge { row: row + 1, id },
            other => other,
        })
    }

    pub fn write_csv<W1: Write, W2: Write>(&self, nodes: W1, edges: W2) -> Result<(), GraphError> {
        let mut w = csv::Writer::from_writer(nodes);
        for n in &self.nodes {
            w.serialize(NodeRow {
                id: n.id.clone(),
                lat: n.lat,
                lon: n.lon,
                category: n.category.to_string(),
            })?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(edges);
        for &(a, b) in &self.edges {
            w.serialize(EdgeRow {
                src: self.nodes[a].id.clone(),
                dst: self.nodes[b].id.clone(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, nodes_path: &Path, edges_path: &Path) -> Result<(), GraphError> {
        self.write_csv(
            std::fs::File::create(nodes_path)?,
            std::fs::File::create(edges_path)?,
        )
    }
}

fn check_headers<R: Read>(
    rdr: &mut csv::Reader<R>,
    file: &str,
    want: &[&str],
) -> Result<(), GraphError> {
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != want {
        return Err(GraphError::Schema {
            file: file.to_string(),
            row: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                want.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<LocationGraph, GraphError> {
    LocationGraph::read_csv(
        std::fs::File::open(nodes_path)?,
        std::fs::File::open(edges_path)?,
    )
}

/// Time-invariant facts: `conn` in both directions per edge and one
/// `occ_<category>` fact per node.
pub fn graph_to_facts(g: &LocationGraph) -> Vec<Taf> {
    let mut out = Vec::with_capacity(2 * g.edge_count() + g.len());
    for &(a, b) in &g.edges {
        for (x, y) in [(a, b), (b, a)] {
            out.push(Taf {
                literal: GroundLiteral::atom("conn", &[&g.nodes[x].id, &g.nodes[y].id]),
                annotation: Annotation::TRUE,
                time: TafTime::Always,
            });
        }
    }
    for n in &g.nodes {
        out.push(Taf {
            literal: GroundLiteral::atom(n.category.location_predicate(), &[&n.id]),
            annotation: Annotation::TRUE,
            time: TafTime::Always,
        });
    }
    out
}

/// Declarations needed to load [`graph_to_facts`] into a program.
pub fn declare_graph(program: &mut Program, g: &LocationGraph) {
    program.extend_domain("loc", g.nodes.iter().map(|n| n.id.clone()));
    program.declare_predicate("conn", &["loc", "loc"]);
    for c in Category::ALL {
        program.declare_predicate(&c.location_predicate(), &["loc"]);
    }
}

/// Great-circle distance in metres.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const R: f64 = 6_371_000.0;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * a.sqrt().asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Grid,
    RandomGeometric,
}

/// Relative weights per category, indexed like [`Category::ALL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMix(pub [f64; 11]);

impl CategoryMix {
    pub fn uniform() -> CategoryMix {
        CategoryMix([1.0; 11])
    }

    /// Roughly a third intersections, residential-heavy landmarks.
    pub fn city() -> CategoryMix {
        CategoryMix([3.0, 1.0, 1.0, 4.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 7.0])
    }

    fn sample(&self, rng: &mut impl Rng) -> Category {
        let total: f64 = self.0.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        for (c, w) in Category::ALL.iter().zip(self.0) {
            if x < w {
                return *c;
            }
            x -= w;
        }
        Category::ALL[self.0.iter().rposition(|&w| w > 0.0).unwrap_or(0)]
    }
}

const ORIGIN: (f64, f64) = (35.9606, -83.9207);
const METRES_PER_DEG_LAT: f64 = 111_320.0;

fn to_latlon(x_m: f64, y_m: f64) -> (f64, f64) {
    let lat = ORIGIN.0 + y_m / METRES_PER_DEG_LAT;
    let lon = ORIGIN.1 + x_m / (METRES_PER_DEG_LAT * ORIGIN.0.to_radians().cos());
    (lat, lon)
}

fn node_id(i: usize, n: usize) -> String {
    let width = (n.max(2) - 1).to_string().len();
    format!("loc{i:0width$}")
}

/// Seeded synthetic graph. Grids need a perfect square `n >= 4` and use 300 m
/// spacing; random-geometric graphs place nodes in a square with unit density
/// of roughly one node per 300 m cell and are patched to be connected.
pub fn synth_graph(
    kind: SynthKind,
    n: usize,
    seed: u64,
    mix: &CategoryMix,
) -> Result<LocationGraph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::Grid => {
            let side = (n as f64).sqrt().round() as usize;
            if n < 4 || side * side != n {
                return Err(GraphError::BadSize {
                    kind: "grid",
                    need: "a perfect square of at least 4",
                    got: n,
                });
            }
            let mut nodes = Vec::with_capacity(n);
            for r in 0..side {
                for c in 0..side {
                    let (lat, lon) = to_latlon(c as f64 * 300.0, r as f64 * 300.0);
                    nodes.push(LocationNode {
                        id: node_id(r * side + c, n),
                        lat,
                        lon,
                        category: mix.sample(&mut rng),
                    });
                }
            }
            let mut edges = Vec::new();
            for r in 0..side {
                for c in 0..side {
                    let i = r * side + c;
                    if c + 1 < side {
                        edges.push((nodes[i].id.clone(), nodes[i + 1].id.clone()));
                    }
                    if r + 1 < side {
                        edges.push((nodes[i].id.clone(), nodes[i + side].id.clone()));
                    }
                }
            }
            LocationGraph::new(nodes, edges)
        }
        SynthKind::RandomGeometric => {
            if n < 2 {
                return Err(GraphError::BadSize {
                    kind: "random-geometric",
                    need: "at least 2",
                    got: n,
                });
            }
            let side = (n as f64).sqrt() * 300.0;
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen::<f64>() * side, rng.gen::<f64>() * side))
                .collect();
            let nodes: Vec<LocationNode> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    let (lat, lon) = to_latlon(x, y);
                    LocationNode {
                        id: node_id(i, n),
                        lat,
                        lon,
                        category: mix.sample(&mut rng),
                    }
                })
                .collect();
            let d = |a: usize, b: usize| {
                ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt()
            };
            let radius = 1.5 * 300.0;
            let mut pairs = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if d(a, b) <= radius {
                        pairs.push((a, b));
                    }
                }
            }
            // join components through their closest node pair
            let mut comp = components(n, &pairs);
            while comp.iter().any(|&c| c != comp[0]) {
                let mut best = (f64::INFINITY, 0, 0);
                for a in (0..n).filter(|&a| comp[a] == comp[0]) {
                    for b in (0..n).filter(|&b| comp[b] != comp[0]) {
                        if d(a, b) < best.0 {
                            best = (d(a, b), a, b);
                        }
                    }
                }
                pairs.push((best.1, best.2));
                comp = components(n, &pairs);
            }
            let edges = pairs
                .into_iter()
                .map(|(a, b)| (nodes[a].id.clone(), nodes[b].id.clone()))
                .collect();
            LocationGraph::new(nodes, edges)
        }
    }
}

fn components(n: usize, pairs: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for &(a, b) in pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).map(|x| find(&mut parent, x)).collect()
}
