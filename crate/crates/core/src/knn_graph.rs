//! Exact k-nearest-neighbor structure, self-tuning local scales and the
//! reciprocal (mutual-neighbor) preliminary graph.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataio::{squared_distance, DataMatrix};
use crate::{positive_exp, Error, Result, EPSILON};

/// `min{n-1, max(2, ceil(log2(n+1) + sqrt(d)))}`.
pub fn neighborhood_order(n: usize, d: usize) -> usize {
    let raw = ((n as f64 + 1.0).log2() + (d as f64).sqrt()).ceil() as usize;
    raw.max(2).min(n.saturating_sub(1))
}

/// First term of every edge cost: `||x_i - x_j||^2 / (2 tau_i tau_j)`.
///
/// Shared with the affinity stage so the same-leaf affinity reproduces the
/// preliminary affinity bit for bit.
#[inline]
pub fn proximity_cost(sq_dist: f64, tau_i: f64, tau_j: f64) -> f64 {
    sq_dist / (2.0 * tau_i * tau_j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborGraph {
    n: usize,
    k: usize,
    /// `n * k` neighbor indices, row `i` ordered by (distance, index).
    neighbors: Vec<usize>,
    /// Squared distances matching `neighbors`.
    sq_dists: Vec<f64>,
    tau: Vec<f64>,
    nn1: Vec<f64>,
    /// Undirected mutual edges with `i < j`, sorted.
    rec_edges: Vec<RecEdge>,
    /// Per-vertex view of `rec_edges`, sorted by neighbor index.
    rec_adj: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighborhood order `k_g`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn sq_dists(&self, i: usize) -> &[f64] {
        &self.sq_dists[i * self.k..(i + 1) * self.k]
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Distance from each sample to its nearest neighbor.
    pub fn nn1(&self) -> &[f64] {
        &self.nn1
    }

    pub fn rec_edges(&self) -> &[RecEdge] {
        &self.rec_edges
    }

    pub fn rec_neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.rec_adj[i]
    }

    /// Directed self-tuning affinity `a_ij` for the `slot`-th neighbor of `i`.
    pub fn directed_affinity(&self, i: usize, slot: usize) -> f64 {
        let j = self.neighbors(i)[slot];
        positive_exp(proximity_cost(
            self.sq_dists(i)[slot],
            self.tau[i],
            self.tau[j],
        ))
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).contains(&j)
    }

    /// Debug dump of the reciprocal edges as `i,j,weight` lines.
    pub fn rec_edges_csv(&self) -> String {
        let mut out = String::from("i,j,weight\n");
        for e in &self.rec_edges {
            let _ = writeln!(out, "{},{},{}", e.i, e.j, e.weight);
        }
        out
    }
}

/// Build the graph with the default positivity guard.
pub fn build_neighbor_graph(x: &DataMatrix) -> Result<NeighborGraph> {
    build_neighbor_graph_with(x, EPSILON)
}

pub fn build_neighbor_graph_with(x: &DataMatrix, eps: f64) -> Result<NeighborGraph> {
    let n = x.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let k = neighborhood_order(n, x.d());

    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| nearest(x, i, k))
        .collect();

    let mut neighbors = Vec::with_capacity(n * k);
    let mut sq_dists = Vec::with_capacity(n * k);
    for (idx, dist) in rows {
        neighbors.extend(idx);
        sq_dists.extend(dist);
    }
    let tau: Vec<f64> = (0..n)
        .map(|i| sq_dists[i * k + k - 1].sqrt().max(eps))
        .collect();
    let nn1: Vec<f64> = (0..n).map(|i| sq_dists[i * k].sqrt()).collect();

    let mut graph = NeighborGraph {
        n,
        k,
        neighbors,
        sq_dists,
        tau,
        nn1,
        rec_edges: Vec::new(),
        rec_adj: vec![Vec::new(); n],
    };

    let mut rec_edges = Vec::new();
    for i in 0..n {
        for (slot, &j) in graph.neighbors(i).iter().enumerate() {
            if j <= i {
                continue;
            }
            if let Some(back) = graph.neighbors(j).iter().position(|&t| t == i) {
                let a_ij = graph.directed_affinity(i, slot);
                let a_ji = graph.directed_affinity(j, back);
                rec_edges.push(RecEdge {
                    i,
                    j,
                    weight: a_ij.min(a_ji),
                });
            }
        }
    }
    rec_edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    for e in &rec_edges {
        graph.rec_adj[e.i].push((e.j, e.weight));
        graph.rec_adj[e.j].push((e.i, e.weight));
    }
    for adj in &mut graph.rec_adj {
        adj.sort_by_key(|&(j, _)| j);
    }
    graph.rec_edges = rec_edges;
    Ok(graph)
}

/// Exact `k`-nearest-neighbor lists (self excluded), each ordered by
/// distance and then by index.
pub fn k_nearest(x: &DataMatrix, k: usize) -> Vec<Vec<usize>> {
    (0..x.n())
        .into_par_iter()
        .map(|i| nearest(x, i, k).0)
        .collect()
}

/// The `k` nearest samples to `i` (self excluded), ordered by squared
/// distance and then by index.
fn nearest(x: &DataMatrix, i: usize, k: usize) -> (Vec<usize>, Vec<f64>) {
    let xi = x.row(i);
    let mut cand: Vec<(f64, usize)> = (0..x.n())
        .filter(|&j| j != i)
        .map(|j| (squared_distance(xi, x.row(j)), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand.into_iter().map(|(d, j)| (j, d)).unzip()
}
