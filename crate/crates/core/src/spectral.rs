//! Graph partitioning and the end-to-end pipeline.
//!
//! The selected graph is partitioned by its connected components when they
//! already number `K`; when there are fewer (but more than one) components,
//! the `K` clusters are budgeted across components to minimize the largest
//! samples-per-cluster ratio and each component is clustered spectrally on
//! its own; otherwise the whole graph goes through normalized spectral
//! clustering.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::affinity::{tree_affinity, AffinityGraph, GraphVariant};
use crate::dataio::{normalize, squared_distance, DataMatrix};
use crate::eigen::{dense_ascending, dense_eigenvalues_ascending, largest_eigenpairs, KrylovOptions, SymmetricOperator};
use crate::gb_tree::{build_tree_with, GbTree};
use crate::knn_graph::{build_neighbor_graph_with, k_nearest};
use crate::union_find::UnionFind;
use crate::{Error, Result, EPSILON};

/// Component count and per-vertex component labels (numbered by smallest
/// member) over the nonzero edges of `w`.
pub fn connected_components(w: &AffinityGraph) -> (usize, Vec<usize>) {
    let mut uf = UnionFind::new(w.n());
    for (i, j, weight) in w.edges() {
        if weight > 0.0 {
            uf.union(i, j);
        }
    }
    uf.labels()
}

/// `L_sym = I - D^{-1/2} W D^{-1/2}`, degrees floored at `eps`.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian<'a> {
    graph: &'a AffinityGraph,
    inv_sqrt_degree: Vec<f64>,
}

pub fn normalized_laplacian(w: &AffinityGraph, eps: f64) -> NormalizedLaplacian<'_> {
    let inv_sqrt_degree = (0..w.n())
        .map(|i| 1.0 / w.degree(i).max(eps).sqrt())
        .collect();
    NormalizedLaplacian {
        graph: w,
        inv_sqrt_degree,
    }
}

impl NormalizedLaplacian<'_> {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let s = &self.inv_sqrt_degree;
        let mut m = DMatrix::identity(n, n);
        for i in 0..n {
            for &(j, w) in self.graph.neighbors(i) {
                m[(i, j)] -= s[i] * w * s[j];
            }
        }
        m
    }
}

/// `2I - L_sym`: same eigenvectors, spectrum reversed into `[0, 2]`, so the
/// smallest Laplacian eigenpairs become the largest of this operator.
struct ShiftedAdjacency<'a, 'b>(&'b NormalizedLaplacian<'a>);

impl SymmetricOperator for ShiftedAdjacency<'_, '_> {
    fn dim(&self) -> usize {
        self.0.n()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let s = &self.0.inv_sqrt_degree;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = v[i];
            for &(j, w) in self.0.graph.neighbors(i) {
                acc += s[i] * w * s[j] * v[j];
            }
            *o = acc;
        }
    }
}

/// Tunables for the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Upper end of the eigengap scan when `K` is not given.
    pub k_max: usize,
    pub epsilon: f64,
    /// Largest graph handled by the dense eigensolver.
    pub dense_limit: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k_max: 20,
            epsilon: EPSILON,
            dense_limit: 4096,
        }
    }
}

/// The `count` smallest eigenpairs of `L_sym`, ascending.
pub fn smallest_eigenpairs(
    lap: &NormalizedLaplacian<'_>,
    count: usize,
    dense_limit: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = lap.n();
    let count = count.min(n);
    if n <= dense_limit {
        let eig = dense_ascending(lap.to_dense())?;
        let vectors = eig.vectors.columns(0, count).into_owned();
        Ok((eig.values[..count].to_vec(), vectors))
    } else {
        let top = largest_eigenpairs(&ShiftedAdjacency(lap), count, KrylovOptions::default())?;
        let values = top.values.iter().map(|v| 2.0 - v).collect();
        Ok((values, top.vectors))
    }
}

pub fn smallest_eigenvalues(
    lap: &NormalizedLaplacian<'_>,
    count: usize,
    dense_limit: usize,
) -> Result<Vec<f64>> {
    if lap.n() <= dense_limit {
        let mut values = dense_eigenvalues_ascending(lap.to_dense())?;
        values.truncate(count);
        Ok(values)
    } else {
        smallest_eigenpairs(lap, count, dense_limit).map(|(v, _)| v)
    }
}

/// Gaps closer than this are ties; eigenvalues carry rounding error of this
/// order, so exactly-equal spectra would otherwise break ties at random.
pub const EIGENGAP_TIE_TOL: f64 = 1e-9;

/// Largest gap `lambda_{K+1} - lambda_K` over `K in [2, k_max]` of ascending
/// eigenvalues (1-based), smaller `K` on ties.
pub fn eigengap_from_values(ascending: &[f64], k_max: usize) -> usize {
    let mut best = (f64::NEG_INFINITY, 2);
    for k in 2..=k_max {
        if k >= ascending.len() {
            break;
        }
        let gap = ascending[k] - ascending[k - 1];
        if gap > best.0 + EIGENGAP_TIE_TOL {
            best = (gap, k);
        }
    }
    best.1
}

/// Estimate the number of clusters from the eigengap of `L_sym`.
pub fn estimate_k_eigengap(lap: &NormalizedLaplacian<'_>, k_max: usize, dense_limit: usize) -> Result<usize> {
    let n = lap.n();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let k_max = k_max.min(n - 1).max(2);
    let values = smallest_eigenvalues(lap, k_max + 1, dense_limit)?;
    Ok(eigengap_from_values(&values, k_max))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub sizes: Vec<usize>,
    pub clusters: Vec<usize>,
}

impl AllocationPlan {
    /// `max_t n_t / K_t`.
    pub fn max_load(&self) -> f64 {
        self.sizes
            .iter()
            .zip(&self.clusters)
            .map(|(&n, &k)| n as f64 / k as f64)
            .fold(0.0, f64::max)
    }
}

/// Spread `k` clusters over components of the given sizes so the largest
/// `n_t / K_t` is as small as possible, with `1 <= K_t <= n_t`.
pub fn allocate_clusters(sizes: &[usize], k: usize) -> Result<AllocationPlan> {
    let c = sizes.len();
    let total: usize = sizes.iter().sum();
    if c == 0 || c >= k || k > total || sizes.contains(&0) {
        return Err(Error::Infeasible(format!(
            "{k} clusters over {c} components of {total} samples"
        )));
    }
    let mut clusters = vec![1; c];
    for _ in c..k {
        let mut best: Option<usize> = None;
        for t in 0..c {
            if clusters[t] >= sizes[t] {
                continue;
            }
            // n_t / K_t > n_s / K_s  <=>  n_t K_s > n_s K_t
            let better = best.map_or(true, |s| sizes[t] * clusters[s] > sizes[s] * clusters[t]);
            if better {
                best = Some(t);
            }
        }
        let t = best.expect("k <= total leaves room to grow");
        clusters[t] += 1;
    }
    Ok(AllocationPlan {
        sizes: sizes.to_vec(),
        clusters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Components,
    GlobalSpectral,
    ComponentwiseSpectral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k_used: usize,
    pub mode: PartitionMode,
}

/// Renumber labels by first appearance; returns the number of clusters.
fn relabel(labels: &mut [usize]) -> usize {
    let mut map = std::collections::HashMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-9;

/// Lloyd's k-means from farthest-first seeds: the first center is row 0,
/// each further center is the row farthest from all chosen centers (lowest
/// index on ties). Returns labels and the number of Lloyd rounds.
pub fn deterministic_kmeans(rows: &[Vec<f64>], k: usize) -> (Vec<usize>, usize) {
    let n = rows.len();
    if n == 0 || k <= 1 {
        return (vec![0; n], 0);
    }
    let k = k.min(n);
    let mut centers = vec![rows[0].clone()];
    let mut nearest: Vec<f64> = rows.iter().map(|r| squared_distance(r, &rows[0])).collect();
    while centers.len() < k {
        let mut pick = 0;
        for i in 1..n {
            if nearest[i] > nearest[pick] {
                pick = i;
            }
        }
        centers.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(r, &rows[pick]));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        rows.iter()
            .map(|r| {
                let mut best = (f64::INFINITY, 0);
                for (c, center) in centers.iter().enumerate() {
                    let d = squared_distance(r, center);
                    if d < best.0 {
                        best = (d, c);
                    }
                }
                best.1
            })
            .collect()
    };

    let dim = rows[0].len();
    let mut rounds = 0;
    while rounds < KMEANS_MAX_ITER {
        rounds += 1;
        let labels = assign(&centers);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(squared_distance(&new, &centers[c]).sqrt());
            centers[c] = new;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    (assign(&centers), rounds)
}

/// Normalized spectral clustering of `w` into at most `k` clusters.
pub fn spectral_partition(w: &AffinityGraph, k: usize, cfg: &ClusterConfig) -> Result<Partition> {
    let n = w.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} vertices into {k} clusters")));
    }
    if k == 1 {
        return Ok(Partition {
            labels: vec![0; n],
            k_used: 1,
            mode: PartitionMode::GlobalSpectral,
        });
    }
    let lap = normalized_laplacian(w, cfg.epsilon);
    let (_, vectors) = smallest_eigenpairs(&lap, k, cfg.dense_limit)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r: Vec<f64> = vectors.row(i).iter().copied().collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter_mut().for_each(|v| *v /= norm);
            }
            r
        })
        .collect();
    let (mut labels, _) = deterministic_kmeans(&rows, k);
    let k_used = relabel(&mut labels);
    Ok(Partition {
        labels,
        k_used,
        mode: PartitionMode::GlobalSpectral,
    })
}

/// Partition a selected graph into `k` clusters: components, component-wise
/// spectral, or global spectral.
pub fn partition_graph(w: &AffinityGraph, k: usize, cfg: &ClusterConfig) -> Result<Partition> {
    let (count, comp) = connected_components(w);
    if count == k {
        return Ok(Partition {
            labels: comp,
            k_used: k,
            mode: PartitionMode::Components,
        });
    }
    if count > 1 && count < k {
        let mut members = vec![Vec::new(); count];
        for (i, &c) in comp.iter().enumerate() {
            members[c].push(i);
        }
        let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
        let plan = allocate_clusters(&sizes, k)?;
        let mut labels = vec![0; w.n()];
        let mut offset = 0;
        for (verts, &kt) in members.iter().zip(&plan.clusters) {
            let local = spectral_partition(&w.induced(verts), kt, cfg)?;
            for (&v, &l) in verts.iter().zip(&local.labels) {
                labels[v] = offset + l;
            }
            offset += local.k_used;
        }
        let k_used = relabel(&mut labels);
        return Ok(Partition {
            labels,
            k_used,
            mode: PartitionMode::ComponentwiseSpectral,
        });
    }
    spectral_partition(w, k, cfg)
}

/// Result of a full run with the intermediate structure kept for reporting.
#[derive(Debug, Clone)]
pub struct ClusterRun {
    pub partition: Partition,
    pub tree: GbTree,
    pub selected: GraphVariant,
    pub bridge_applied: bool,
    /// `K` actually targeted (given or estimated).
    pub k_target: usize,
    pub estimated_k: Option<usize>,
    pub selected_components: usize,
    pub runtime_seconds: f64,
}

/// Run the full pipeline with default settings.
pub fn cluster(raw: &DataMatrix, k: Option<usize>) -> Result<Partition> {
    cluster_with(raw, k, &ClusterConfig::default()).map(|r| r.partition)
}

pub fn cluster_with(raw: &DataMatrix, k: Option<usize>, cfg: &ClusterConfig) -> Result<ClusterRun> {
    let start = Instant::now();
    let n = raw.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if let Some(k) = k {
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("K = {k} outside [1, {n}]")));
        }
    }
    let eps = cfg.epsilon;
    let x = normalize(raw)?;
    let knn = build_neighbor_graph_with(&x, eps)?;
    let tree = build_tree_with(&x, &knn, eps)?;
    let aff = tree_affinity(&knn, &tree, k, eps);

    let rec_components = connected_components(&aff.rec).0;
    let use_rec = k == Some(rec_components);
    let w = if use_rec { &aff.rec } else { &aff.com };

    let (k_target, estimated_k) = match k {
        Some(k) => (k, None),
        None if n >= 3 => {
            let lap = normalized_laplacian(w, eps);
            let est = estimate_k_eigengap(&lap, cfg.k_max, cfg.dense_limit)?;
            (est, Some(est))
        }
        None => {
            let c = connected_components(w).0;
            (c, Some(c))
        }
    };
    let partition = partition_graph(w, k_target, cfg)?;
    Ok(ClusterRun {
        selected_components: connected_components(w).0,
        partition,
        tree,
        selected: w.variant,
        bridge_applied: aff.bridge_applied,
        k_target,
        estimated_k,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Unit-weight symmetrized k-NN graph on the normalized data.
pub fn knn_connectivity_graph(x: &DataMatrix, k_neighbors: usize) -> AffinityGraph {
    let lists = k_nearest(x, k_neighbors);
    let mut edges = Vec::new();
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            let mutual = lists[j].contains(&i);
            if !mutual || i < j {
                edges.push((i, j, 1.0));
            }
        }
    }
    AffinityGraph::from_edges(x.n(), edges, GraphVariant::Completed)
}

/// Spectral clustering on a binary k-NN graph.
pub fn baseline_sc_knn(raw: &DataMatrix, k: usize, k_neighbors: usize) -> Result<Partition> {
    baseline_sc_knn_with(raw, k, k_neighbors, &ClusterConfig::default())
}

pub fn baseline_sc_knn_with(
    raw: &DataMatrix,
    k: usize,
    k_neighbors: usize,
    cfg: &ClusterConfig,
) -> Result<Partition> {
    let n = raw.n();
    if n <= k_neighbors {
        return Err(Error::TooFewSamples {
            needed: k_neighbors + 1,
            got: n,
        });
    }
    let x = normalize(raw)?;
    let w = knn_connectivity_graph(&x, k_neighbors);
    spectral_partition(&w, k, cfg)
}
