//! Cosine similarity and the band-filtered similarity graph over frames.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::Dataset;
use crate::jsonl::{self, JsonlError};

pub const GRAPH_FORMAT: &str = "graph-v1";

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("invalid similarity config: {0}")]
    InvalidConfig(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// Cosine of the angle between `a` and `b`, accumulated in f64.
pub fn cosine_similarity<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::LengthMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y): (f64, f64) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Edge validity band and time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub tau_low: f64,
    pub tau_high: f64,
    /// Maximum distance in sequence positions between connected frames.
    pub window_frames: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            tau_low: 0.40,
            tau_high: 0.70,
            window_frames: 12,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        let bad = |m: String| Err(SimilarityError::InvalidConfig(m));
        if !(self.tau_high > 0.0 && self.tau_high <= 1.0) {
            return bad(format!("tau_high {} outside (0, 1]", self.tau_high));
        }
        if !(self.tau_low >= 0.0 && self.tau_low < 1.0) {
            return bad(format!("tau_low {} outside [0, 1)", self.tau_low));
        }
        if self.tau_low >= self.tau_high {
            return bad(format!(
                "tau_low {} must be below tau_high {}",
                self.tau_low, self.tau_high
            ));
        }
        if self.window_frames == 0 {
            return bad("window_frames must be positive".into());
        }
        Ok(())
    }

    pub fn accepts(&self, sim: f64) -> bool {
        self.tau_low <= sim && sim <= self.tau_high
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub frame_id: String,
    pub participant_id: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected graph whose edges all satisfy the similarity band.
///
/// Edges are stored with `i < j`, sorted by `(i, j)`, never crossing
/// participants.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    config: Option<SimilarityConfig>,
}

impl SimilarityGraph {
    /// Assembles a graph from explicit parts, checking the structural invariants.
    pub fn from_parts(nodes: Vec<GraphNode>, mut edges: Vec<Edge>) -> Result<Self, SimilarityError> {
        let n = nodes.len();
        let mut ids = HashSet::with_capacity(n);
        for node in &nodes {
            if !ids.insert(node.frame_id.as_str()) {
                return Err(SimilarityError::InvalidGraph(format!(
                    "duplicate node {:?}",
                    node.frame_id
                )));
            }
        }
        for e in edges.iter_mut() {
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
            if e.i == e.j || e.j >= n {
                return Err(SimilarityError::InvalidGraph(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if nodes[e.i].participant_id != nodes[e.j].participant_id {
                return Err(SimilarityError::InvalidGraph(format!(
                    "edge ({}, {}) crosses participants",
                    e.i, e.j
                )));
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = edges.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(SimilarityError::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].i, w[0].j
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.i].push(e.j);
            adjacency[e.j].push(e.i);
        }
        for a in adjacency.iter_mut() {
            a.sort_unstable();
        }
        Ok(SimilarityGraph {
            nodes,
            edges,
            adjacency,
            config: None,
        })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Config the graph was built with; `None` for hand-assembled graphs.
    pub fn config(&self) -> Option<&SimilarityConfig> {
        self.config.as_ref()
    }

    pub fn to_jsonl(&self) -> String {
        let header = GraphHeader {
            format: GRAPH_FORMAT.to_owned(),
            config: self.config,
            nodes: self.nodes.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("serializable header");
        out.push('\n');
        out.push_str(&jsonl::to_string(&self.edges));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SimilarityError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: GraphHeader = match lines.next() {
            Some(l) => serde_json::from_str(l).map_err(|e| SimilarityError::InvalidGraph(format!("header: {e}")))?,
            None => return Err(SimilarityError::InvalidGraph("empty graph file".into())),
        };
        if header.format != GRAPH_FORMAT {
            return Err(SimilarityError::InvalidGraph(format!(
                "unsupported format {:?}",
                header.format
            )));
        }
        let edges = lines
            .map(serde_json::from_str::<Edge>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimilarityError::InvalidGraph(format!("edge: {e}")))?;
        let mut g = SimilarityGraph::from_parts(header.nodes, edges)?;
        g.config = header.config;
        Ok(g)
    }

    pub fn write(&self, path: &Path) -> Result<(), SimilarityError> {
        Ok(jsonl::write_string(path, &self.to_jsonl())?)
    }

    pub fn read(path: &Path) -> Result<Self, SimilarityError> {
        let text = fs::read_to_string(path).map_err(|source| JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_jsonl(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphHeader {
    format: String,
    config: Option<SimilarityConfig>,
    nodes: Vec<GraphNode>,
}

/// Builds the similarity graph: one node per frame in dataset order, an edge
/// wherever two frames of the same participant lie within the window and
/// their similarity falls inside `[tau_low, tau_high]`.
pub fn build_graph(dataset: &Dataset, cfg: &SimilarityConfig) -> Result<SimilarityGraph, SimilarityError> {
    cfg.validate()?;
    let frames = dataset.frames();
    let n = frames.len();
    // End (exclusive) of each frame's participant run.
    let mut run_end = vec![n; n];
    for i in (0..n.saturating_sub(1)).rev() {
        run_end[i] = if frames[i].participant_id == frames[i + 1].participant_id {
            run_end[i + 1]
        } else {
            i + 1
        };
    }
    let edges: Vec<Edge> = (0..n)
        .into_par_iter()
        .map(|i| {
            let last = run_end[i].min(i + cfg.window_frames + 1);
            ((i + 1)..last)
                .filter_map(|j| {
                    // Ingest guarantees equal dims and nonzero rows.
                    let w = cosine_similarity(dataset.vector(i), dataset.vector(j)).ok()?;
                    cfg.accepts(w).then_some(Edge { i, j, weight: w })
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let nodes = frames
        .iter()
        .map(|f| GraphNode {
            frame_id: f.frame_id.clone(),
            participant_id: f.participant_id.clone(),
            timestamp: f.timestamp,
        })
        .collect();
    let mut g = SimilarityGraph::from_parts(nodes, edges)?;
    g.config = Some(*cfg);
    Ok(g)
}
