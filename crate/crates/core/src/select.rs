//! Greedy multi-view group selection.
//!
//! Every connected induced subgraph of exactly `k` nodes is a candidate. The
//! candidates are sorted once by the degree sum of their members (degrees
//! taken in the full graph), then earliest member timestamp, then member
//! frame ids. A single pass accepts each candidate whose nodes are all still
//! unused and marks them used.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::label::{majority_label, Label};
use crate::similarity::SimilarityGraph;

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error("group size k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error(transparent)]
    File(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { k: 3 }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if self.k < 2 {
            return Err(SelectError::InvalidK(self.k));
        }
        Ok(())
    }
}

/// A connected k-node candidate; `nodes` ordered by (timestamp, frame_id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub nodes: Vec<usize>,
    pub degree_sum: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiViewGroup {
    pub group_id: String,
    /// Members in ascending timestamp order.
    pub frame_ids: Vec<String>,
    pub degree_sum: usize,
}

impl MultiViewGroup {
    /// Most common member label (first member wins ties); `None` when no
    /// member is labelled.
    pub fn majority_label(&self, labels: &HashMap<String, Label>) -> Option<Label> {
        majority_label(self.frame_ids.iter().filter_map(|f| labels.get(f).copied()))
    }
}

pub fn group_id(participant_id: &str, ordinal: usize) -> String {
    format!("{participant_id}-g{ordinal:03}")
}

/// Lists every connected induced k-node subgraph exactly once, in selection order.
pub fn enumerate_k_subgraphs(graph: &SimilarityGraph, k: usize) -> Vec<Candidate> {
    if k == 0 {
        return Vec::new();
    }
    let mut sets: Vec<Vec<usize>> = (0..graph.node_count())
        .into_par_iter()
        .map(|v| {
            let mut found = Vec::new();
            let ext: Vec<usize> = graph.neighbors(v).iter().copied().filter(|&u| u > v).collect();
            extend(graph, v, &mut vec![v], ext, k, &mut found);
            found
        })
        .flatten()
        .collect();

    let nodes = graph.nodes();
    for s in sets.iter_mut() {
        s.sort_by(|&a, &b| (nodes[a].timestamp, &nodes[a].frame_id).cmp(&(nodes[b].timestamp, &nodes[b].frame_id)));
    }
    let mut cands: Vec<Candidate> = sets
        .into_iter()
        .map(|nodes| Candidate {
            degree_sum: nodes.iter().map(|&v| graph.degree(v)).sum(),
            nodes,
        })
        .collect();
    cands.sort_by(|a, b| {
        a.degree_sum
            .cmp(&b.degree_sum)
            .then_with(|| nodes[a.nodes[0]].timestamp.cmp(&nodes[b.nodes[0]].timestamp))
            .then_with(|| {
                let ia = a.nodes.iter().map(|&v| nodes[v].frame_id.as_str());
                let ib = b.nodes.iter().map(|&v| nodes[v].frame_id.as_str());
                ia.cmp(ib)
            })
    });
    cands
}

// Enumerates connected sets rooted at `root` (the smallest index in each set)
// by extending only with exclusive neighbours, so each set is produced once.
fn extend(
    graph: &SimilarityGraph,
    root: usize,
    sub: &mut Vec<usize>,
    mut ext: Vec<usize>,
    k: usize,
    out: &mut Vec<Vec<usize>>,
) {
    if sub.len() == k {
        out.push(sub.clone());
        return;
    }
    while let Some(w) = ext.pop() {
        let mut next = ext.clone();
        for &u in graph.neighbors(w) {
            if u > root && !sub.contains(&u) && !next.contains(&u) && !sub.iter().any(|&s| graph.has_edge(s, u)) {
                next.push(u);
            }
        }
        sub.push(w);
        extend(graph, root, sub, next, k, out);
        sub.pop();
    }
}

/// Selects vertex-disjoint multi-view groups greedily in candidate order.
pub fn select_views(graph: &SimilarityGraph, cfg: &SelectionConfig) -> Result<Vec<MultiViewGroup>, SelectError> {
    cfg.validate()?;
    let nodes = graph.nodes();
    let mut used = vec![false; graph.node_count()];
    let mut ordinals: HashMap<&str, usize> = HashMap::new();
    let mut groups = Vec::new();
    for cand in enumerate_k_subgraphs(graph, cfg.k) {
        if cand.nodes.iter().any(|&v| used[v]) {
            continue;
        }
        for &v in &cand.nodes {
            used[v] = true;
        }
        // Edges never cross participants, so any member names the group.
        let participant = nodes[cand.nodes[0]].participant_id.as_str();
        let ord = ordinals.entry(participant).or_insert(0);
        *ord += 1;
        groups.push(MultiViewGroup {
            group_id: group_id(participant, *ord),
            frame_ids: cand.nodes.iter().map(|&v| nodes[v].frame_id.clone()).collect(),
            degree_sum: cand.degree_sum,
        });
    }
    Ok(groups)
}

pub fn write_groups(path: &Path, groups: &[MultiViewGroup]) -> Result<(), SelectError> {
    Ok(jsonl::write(path, groups)?)
}

pub fn read_groups(path: &Path) -> Result<Vec<MultiViewGroup>, SelectError> {
    Ok(jsonl::read(path)?)
}
