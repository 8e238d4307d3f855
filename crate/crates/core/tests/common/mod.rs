//! Reference implementations used as test oracles. They are written for
//! clarity, not speed, and share no code with the library.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use mvscreen_core::similarity::{Edge, GraphNode};
use mvscreen_core::SimilarityGraph;
use rand::Rng;

pub fn node(id: &str, participant: &str, ts: i64) -> GraphNode {
    GraphNode {
        frame_id: id.to_owned(),
        participant_id: participant.to_owned(),
        timestamp: ts,
    }
}

pub fn graph(ids: &[&str], edges: &[(usize, usize)]) -> SimilarityGraph {
    let nodes = ids
        .iter()
        .enumerate()
        .map(|(i, id)| node(id, "p01", i as i64))
        .collect();
    let edges = edges.iter().map(|&(i, j)| Edge { i, j, weight: 0.5 }).collect();
    SimilarityGraph::from_parts(nodes, edges).unwrap()
}

/// Erdős–Rényi graph on one participant. Timestamps are drawn from a small
/// range so ties are common and the frame-id tie-break is exercised.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SimilarityGraph {
    let nodes = (0..n)
        .map(|i| node(&format!("n{i:02}"), "p01", rng.random_range(0..4)))
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push(Edge { i, j, weight: 0.5 });
            }
        }
    }
    SimilarityGraph::from_parts(nodes, edges).unwrap()
}

fn adjacent(g: &SimilarityGraph, a: usize, b: usize) -> bool {
    g.edges()
        .iter()
        .any(|e| (e.i == a && e.j == b) || (e.i == b && e.j == a))
}

fn degree(g: &SimilarityGraph, v: usize) -> usize {
    g.edges().iter().filter(|e| e.i == v || e.j == v).count()
}

fn connected(g: &SimilarityGraph, set: &[usize]) -> bool {
    let mut seen = vec![set[0]];
    let mut frontier = vec![set[0]];
    while let Some(v) = frontier.pop() {
        for &u in set {
            if !seen.contains(&u) && adjacent(g, u, v) {
                seen.push(u);
                frontier.push(u);
            }
        }
    }
    seen.len() == set.len()
}

fn subsets(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if pool.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for mut rest in subsets(&pool[1..], k - 1) {
        rest.insert(0, pool[0]);
        out.push(rest);
    }
    out.extend(subsets(&pool[1..], k));
    out
}

/// All connected induced k-subsets over `alive` nodes.
pub fn connected_subsets(g: &SimilarityGraph, alive: &[usize], k: usize) -> Vec<Vec<usize>> {
    subsets(alive, k).into_iter().filter(|s| connected(g, s)).collect()
}

/// Brute-force greedy selection: every connected k-subset, sorted by degree
/// sum, then earliest member timestamp, then member frame ids in time order.
pub fn brute_force_select(g: &SimilarityGraph, k: usize) -> Vec<Vec<String>> {
    let nodes = g.nodes();
    let all: Vec<usize> = (0..g.node_count()).collect();
    let mut cands: Vec<(usize, i64, Vec<String>, Vec<usize>)> = connected_subsets(g, &all, k)
        .into_iter()
        .map(|mut s| {
            s.sort_by_key(|&v| (nodes[v].timestamp, nodes[v].frame_id.clone()));
            let dsum = s.iter().map(|&v| degree(g, v)).sum();
            let ids = s.iter().map(|&v| nodes[v].frame_id.clone()).collect();
            (dsum, nodes[s[0]].timestamp, ids, s)
        })
        .collect();
    cands.sort();
    let mut taken = vec![false; nodes.len()];
    let mut out = Vec::new();
    for (_, _, ids, s) in cands {
        if s.iter().all(|&v| !taken[v]) {
            s.iter().for_each(|&v| taken[v] = true);
            out.push(ids);
        }
    }
    out
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn grams(w: &[String], n: usize) -> Vec<Vec<String>> {
    if w.len() < n {
        return vec![];
    }
    (0..=w.len() - n).map(|i| w[i..i + n].to_vec()).collect()
}

/// Plain sentence BLEU-n: clipped precisions, geometric mean, brevity
/// penalty against the closest reference length (shorter on ties).
pub fn oracle_bleu(candidate: &str, references: &[&str], n: usize) -> f64 {
    let c = words(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| words(r)).collect();
    let mut logp = 0.0;
    for order in 1..=n {
        let cg = grams(&c, order);
        let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
        for g in &cg {
            *counts.entry(g.clone()).or_default() += 1;
        }
        let mut hit = 0;
        for (g, cnt) in &counts {
            let best = refs
                .iter()
                .map(|r| grams(r, order).iter().filter(|x| *x == g).count())
                .max()
                .unwrap();
            hit += (*cnt).min(best);
        }
        if hit == 0 {
            return 0.0;
        }
        logp += (hit as f64 / cg.len() as f64).ln();
    }
    let mut lens: Vec<usize> = refs.iter().map(Vec::len).collect();
    lens.sort();
    let r = *lens.iter().min_by_key(|&&l| l.abs_diff(c.len())).unwrap();
    let bp = if c.len() > r {
        1.0
    } else {
        (1.0 - r as f64 / c.len() as f64).exp()
    };
    bp * (logp / n as f64).exp()
}

/// Every file under `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
