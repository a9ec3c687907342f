//! Tree-regularized affinities on the k-NN support.
//!
//! Each directed neighbor pair `j in N(i)` gets cost
//! `phi_ij = ||x_i - x_j||^2 / (2 tau_i tau_j) + |log(eta_b(i) / eta_b(j))|`
//! where `eta_b` is the coding scale of the leaf ball holding a sample. The
//! directed affinities are symmetrized two ways: the reciprocal graph keeps
//! the minimum over mutual pairs only, the completed graph keeps the maximum
//! over whichever directions exist.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::gb_tree::GbTree;
use crate::knn_graph::{proximity_cost, NeighborGraph};
use crate::spectral::connected_components;
use crate::{positive_exp, EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphVariant {
    Reciprocal,
    Completed,
}

/// Sparse symmetric weighted graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    adj: Vec<Vec<(usize, f64)>>,
    pub variant: GraphVariant,
    pub bridge_applied: bool,
}

impl AffinityGraph {
    /// Build from undirected edges; each `(i, j, w)` must appear once.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        variant: GraphVariant,
    ) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (i, j, w) in edges {
            debug_assert!(i != j, "self-loop {i}");
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
        }
        AffinityGraph {
            adj,
            variant,
            bridge_applied: false,
        }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adj[i]
            .binary_search_by_key(&j, |&(t, _)| t)
            .map_or(0.0, |p| self.adj[i][p].1)
    }

    /// Undirected edges with `i < j`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum()
    }

    /// Subgraph on `vertices` (renumbered in the given order).
    pub fn induced(&self, vertices: &[usize]) -> AffinityGraph {
        let mut local = vec![usize::MAX; self.n()];
        for (p, &v) in vertices.iter().enumerate() {
            local[v] = p;
        }
        let edges: Vec<(usize, usize, f64)> = vertices
            .iter()
            .enumerate()
            .flat_map(|(p, &v)| {
                let local = &local;
                self.adj[v].iter().filter_map(move |&(u, w)| {
                    let q = local[u];
                    (q != usize::MAX && q > p).then_some((p, q, w))
                })
            })
            .collect();
        AffinityGraph {
            variant: self.variant,
            bridge_applied: self.bridge_applied,
            ..AffinityGraph::from_edges(vertices.len(), edges, self.variant)
        }
    }

    /// Debug dump as `i,j,w,variant` lines.
    pub fn to_csv(&self) -> String {
        let tag = match self.variant {
            GraphVariant::Reciprocal => "reciprocal",
            GraphVariant::Completed => "completed",
        };
        let mut out = String::from("i,j,w,variant\n");
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "{i},{j},{w},{tag}");
        }
        out
    }
}

/// Per-leaf coding scale `eta_b = r_b + sqrt(var_b) + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafScale(pub Vec<f64>);

pub fn coding_scales(tree: &GbTree, eps: f64) -> LeafScale {
    LeafScale(
        (0..tree.num_leaves())
            .map(|b| {
                let s = &tree.leaf_ball(b).stats;
                s.radius + s.eff_var.sqrt() + eps
            })
            .collect(),
    )
}

/// Directed costs on the k-NN support, laid out like the neighbor lists.
#[derive(Debug, Clone)]
pub struct DirectedCosts {
    k: usize,
    cost: Vec<f64>,
}

impl DirectedCosts {
    pub fn cost(&self, i: usize, slot: usize) -> f64 {
        self.cost[i * self.k + slot]
    }

    pub fn affinity(&self, i: usize, slot: usize) -> f64 {
        positive_exp(self.cost(i, slot))
    }
}

pub fn edge_costs(knn: &NeighborGraph, scales: &LeafScale, assignment: &[usize]) -> DirectedCosts {
    let k = knn.k();
    let tau = knn.tau();
    let eta = &scales.0;
    let mut cost = Vec::with_capacity(knn.n() * k);
    for i in 0..knn.n() {
        for (&j, &sq) in knn.neighbors(i).iter().zip(knn.sq_dists(i)) {
            let scale_gap = (eta[assignment[i]] / eta[assignment[j]]).ln().abs();
            cost.push(proximity_cost(sq, tau[i], tau[j]) + scale_gap);
        }
    }
    DirectedCosts { k, cost }
}

/// `-log max{(1 + shared)/(k + 1), eps}` for a pair sharing `shared` of
/// their `k` neighbors.
pub fn bridge_code(shared: usize, k: usize, eps: f64) -> f64 {
    let support = (1 + shared) as f64 / (k + 1) as f64;
    -support.max(eps).ln()
}

/// Bridge cost per directed pair, counting shared members of the two k-NN
/// lists.
pub fn bridge_costs(knn: &NeighborGraph, eps: f64) -> DirectedCosts {
    let k = knn.k();
    let mut cost = Vec::with_capacity(knn.n() * k);
    for i in 0..knn.n() {
        let mut mine = knn.neighbors(i).to_vec();
        mine.sort_unstable();
        for &j in knn.neighbors(i) {
            let shared = knn
                .neighbors(j)
                .iter()
                .filter(|t| mine.binary_search(t).is_ok())
                .count();
            cost.push(bridge_code(shared, k, eps));
        }
    }
    DirectedCosts { k, cost }
}

/// Reciprocal (min over mutual pairs) and completed (max over existing
/// directions) graphs from directed weights given per (i, slot).
pub fn symmetrize_with(
    knn: &NeighborGraph,
    weight: impl Fn(usize, usize) -> f64,
) -> (AffinityGraph, AffinityGraph) {
    let mut rec = Vec::new();
    let mut com = Vec::new();
    for i in 0..knn.n() {
        for (slot, &j) in knn.neighbors(i).iter().enumerate() {
            let w_ij = weight(i, slot);
            match knn.neighbors(j).iter().position(|&t| t == i) {
                Some(back) => {
                    if i < j {
                        let w_ji = weight(j, back);
                        rec.push((i, j, w_ij.min(w_ji)));
                        com.push((i, j, w_ij.max(w_ji)));
                    }
                }
                None => com.push((i, j, w_ij)),
            }
        }
    }
    let n = knn.n();
    (
        AffinityGraph::from_edges(n, rec, GraphVariant::Reciprocal),
        AffinityGraph::from_edges(n, com, GraphVariant::Completed),
    )
}

pub fn symmetrize(knn: &NeighborGraph, costs: &DirectedCosts) -> (AffinityGraph, AffinityGraph) {
    symmetrize_with(knn, |i, s| costs.affinity(i, s))
}

/// Bridge activation: `K` given and both graphs have the same number of
/// components, fewer than `K`.
pub fn bridge_condition(rec: &AffinityGraph, com: &AffinityGraph, k: Option<usize>) -> bool {
    match k {
        Some(k) => {
            let kr = connected_components(rec).0;
            let kc = connected_components(com).0;
            kr == kc && kr < k
        }
        None => false,
    }
}

/// Final directed weights `exp(-phi - active * L_br)` and their
/// symmetrizations.
pub fn bridge_adjust(
    knn: &NeighborGraph,
    costs: &DirectedCosts,
    active: bool,
    eps: f64,
) -> (AffinityGraph, AffinityGraph) {
    if !active {
        return symmetrize(knn, costs);
    }
    let bridge = bridge_costs(knn, eps);
    let (mut rec, mut com) =
        symmetrize_with(knn, |i, s| positive_exp(costs.cost(i, s) + bridge.cost(i, s)));
    rec.bridge_applied = true;
    com.bridge_applied = true;
    (rec, com)
}

/// Everything the partitioning stage needs from the affinity stage.
#[derive(Debug, Clone)]
pub struct TreeAffinity {
    pub scales: LeafScale,
    pub costs: DirectedCosts,
    pub rec: AffinityGraph,
    pub com: AffinityGraph,
    pub bridge_applied: bool,
}

pub fn tree_affinity(knn: &NeighborGraph, tree: &GbTree, k: Option<usize>, eps: f64) -> TreeAffinity {
    let scales = coding_scales(tree, eps);
    let costs = edge_costs(knn, &scales, &tree.assignment);
    let (rec0, com0) = symmetrize(knn, &costs);
    let active = bridge_condition(&rec0, &com0, k);
    let (rec, com) = if active {
        bridge_adjust(knn, &costs, true, eps)
    } else {
        (rec0, com0)
    };
    TreeAffinity {
        scales,
        costs,
        rec,
        com,
        bridge_applied: active,
    }
}

/// Convenience wrapper with the default guard.
pub fn tree_affinity_default(knn: &NeighborGraph, tree: &GbTree, k: Option<usize>) -> TreeAffinity {
    tree_affinity(knn, tree, k, EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate, normalize, DataMatrix, GeneratorSpec};
    use crate::knn_graph::build_neighbor_graph;

    fn sample() -> (DataMatrix, NeighborGraph) {
        let spec: GeneratorSpec = "moons:60:2:0.08:4".parse().unwrap();
        let x = normalize(&generate(&spec).unwrap()).unwrap();
        let g = build_neighbor_graph(&x).unwrap();
        (x, g)
    }

    #[test]
    fn same_leaf_reproduces_preliminary_affinity() {
        let (_, g) = sample();
        let scales = LeafScale(vec![0.3]);
        let assignment = vec![0; g.n()];
        let costs = edge_costs(&g, &scales, &assignment);
        for i in 0..g.n() {
            for s in 0..g.k() {
                assert_eq!(costs.affinity(i, s), g.directed_affinity(i, s));
            }
        }
    }

    #[test]
    fn scale_ratio_of_e_adds_one_nat() {
        let (_, g) = sample();
        let e = std::f64::consts::E;
        let scales = LeafScale(vec![1.0, e]);
        let assignment: Vec<usize> = (0..g.n()).map(|i| i % 2).collect();
        let costs = edge_costs(&g, &scales, &assignment);
        for i in 0..g.n() {
            for (s, &j) in g.neighbors(i).iter().enumerate() {
                let base = proximity_cost(g.sq_dists(i)[s], g.tau()[i], g.tau()[j]);
                let extra = if assignment[i] == assignment[j] { 0.0 } else { 1.0 };
                assert!((costs.cost(i, s) - base - extra).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_sided_edge_only_in_completed() {
        let x = DataMatrix::from_rows(
            &[0.0, 0.1, 0.2, 0.3, 0.4, 5.0]
                .iter()
                .map(|&v| vec![v])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let g = build_neighbor_graph(&x).unwrap();
        let costs = edge_costs(&g, &LeafScale(vec![1.0]), &vec![0; 6]);
        let (rec, com) = symmetrize(&g, &costs);
        assert!(rec.neighbors(5).is_empty());
        let slot = g.neighbors(5).iter().position(|&j| j == 4).unwrap();
        assert_eq!(com.weight(5, 4), costs.affinity(5, slot));
    }

    #[test]
    fn min_and_max_of_mutual_pair() {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let g = build_neighbor_graph(&x).unwrap();
        let w = [0.3, 0.5];
        let (rec, com) = symmetrize_with(&g, |i, _| w[i]);
        assert_eq!(rec.weight(0, 1), 0.3);
        assert_eq!(com.weight(1, 0), 0.5);
    }

    #[test]
    fn bridge_scales_by_shared_support() {
        let (_, g) = sample();
        let costs = edge_costs(&g, &LeafScale(vec![1.0]), &vec![0; g.n()]);
        let bridge = bridge_costs(&g, EPSILON);
        let k = g.k() as f64;
        for i in 0..g.n() {
            for (s, &j) in g.neighbors(i).iter().enumerate() {
                let shared = g.neighbors(i).iter().filter(|t| g.neighbors(j).contains(t)).count();
                let gamma = (1.0 + shared as f64) / (k + 1.0);
                assert!((bridge.cost(i, s) + gamma.ln()).abs() < 1e-12);
                let adjusted = positive_exp(costs.cost(i, s) + bridge.cost(i, s));
                assert!(adjusted <= costs.affinity(i, s));
            }
        }
    }

    #[test]
    fn bridge_code_extremes() {
        assert!(((-bridge_code(0, 10, EPSILON)).exp() - 1.0 / 11.0).abs() < 1e-15);
        assert_eq!(bridge_code(10, 10, EPSILON), 0.0);
    }

    #[test]
    fn bridge_condition_cases() {
        let tri = |off: usize| vec![(off, off + 1, 1.0), (off + 1, off + 2, 1.0), (off, off + 2, 1.0)];
        let one = AffinityGraph::from_edges(3, tri(0), GraphVariant::Completed);
        assert!(!bridge_condition(&one, &one, None));
        assert!(bridge_condition(&one, &one, Some(3)));
        let two = AffinityGraph::from_edges(6, [tri(0), tri(3)].concat(), GraphVariant::Reciprocal);
        let mut joined = [tri(0), tri(3)].concat();
        joined.push((2, 3, 0.1));
        let one6 = AffinityGraph::from_edges(6, joined, GraphVariant::Completed);
        assert!(!bridge_condition(&two, &one6, Some(3)));
    }

    #[test]
    fn induced_subgraph_renumbers() {
        let g = AffinityGraph::from_edges(
            4,
            vec![(0, 1, 0.5), (1, 2, 0.25), (2, 3, 1.0)],
            GraphVariant::Completed,
        );
        let sub = g.induced(&[3, 2, 1]);
        assert_eq!(sub.n(), 3);
        assert_eq!(sub.weight(0, 1), 1.0);
        assert_eq!(sub.weight(1, 2), 0.25);
        assert_eq!(sub.num_edges(), 2);
    }
}
