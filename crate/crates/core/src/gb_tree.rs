//! Best-first granular-ball tree under the graph-regularized local MDL
//! decision.
//!
//! A ball `B` is kept whole at cost `L_leaf(B) + log 2`. A split into
//! `(L, R)` costs `L_leaf(L) + L_leaf(R) + L_cut(L, R) + log 2 +
//! log(|Q_B| + 1)`, where `L_cut` charges `-log(1 - a)` for every reciprocal
//! edge of weight `a` the split severs and `Q_B` is the set of admissible
//! (ordering, cut position) pairs. The tree repeatedly splits the leaf with
//! the largest positive gain until no leaf gains anything.
//!
//! Candidate generation: every ball is ordered along its principal direction
//! and along its highest-variance coordinate axis. Each ordering contributes
//! evenly spaced cut positions (one of them the median), at most
//! `max(2, ceil(sqrt(n_B)))` pairs in total, and only those are scored with
//! the full split code.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::ball_coding::{BallCoder, CodeModel, CodedBall};
use crate::dataio::DataMatrix;
use crate::knn_graph::NeighborGraph;
use crate::{Result, EPSILON};

/// Smallest admissible child size for a ball of `n_b` samples in `d`
/// dimensions.
pub fn min_child_size(n_b: usize, d: usize) -> usize {
    if n_b <= 3 {
        return 1;
    }
    let nb = n_b as f64;
    let dd = d as f64;
    let soft = (nb.sqrt() / (dd + 2.0).sqrt().ln()).min(dd + 2.0).ceil();
    let lower = (soft as usize).max(2);
    (n_b / 2).min(lower)
}

/// Upper bound on the number of fully scored candidates for a ball.
pub fn candidate_budget(n_b: usize) -> usize {
    ((n_b as f64).sqrt().ceil() as usize).max(2)
}

/// One scored (ordering, cut position) pair: `left` is the first `position`
/// samples of the ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub ordering: usize,
    pub position: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct SplitCandidateSet {
    /// Distinct deterministic sample orderings of the ball.
    pub orderings: Vec<Vec<usize>>,
    /// `|Q_B|`: every admissible (ordering, position) pair.
    pub admissible_pairs: usize,
    /// `S_B`, in enumeration order (ordering, then position).
    pub evaluated: Vec<SplitCandidate>,
}

/// Orderings along the principal direction and the highest-variance axis,
/// ties broken by sample index. Identical orderings are kept once.
pub fn candidate_orderings(ball: &CodedBall, x: &DataMatrix) -> Vec<Vec<usize>> {
    let idx = &ball.stats.indices;
    let center = &ball.stats.center;
    let d = x.d();

    let principal = &ball.spectrum.principal;
    let by_principal = sort_by_key_then_index(idx, |i| {
        x.row(i)
            .iter()
            .zip(center)
            .zip(principal)
            .map(|((v, c), p)| (v - c) * p)
            .sum()
    });

    let mut axis = 0;
    let mut best_var = f64::NEG_INFINITY;
    for j in 0..d {
        let var: f64 = idx
            .iter()
            .map(|&i| (x.row(i)[j] - center[j]).powi(2))
            .sum();
        if var > best_var {
            best_var = var;
            axis = j;
        }
    }
    let by_axis = sort_by_key_then_index(idx, |i| x.row(i)[axis]);

    let mut orderings = vec![by_principal];
    if orderings[0] != by_axis {
        orderings.push(by_axis);
    }
    orderings
}

fn sort_by_key_then_index(idx: &[usize], key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = idx.iter().map(|&i| (key(i), i)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Cut cost of severing one reciprocal edge of weight `a`.
#[inline]
pub fn edge_cut_cost(a: f64, eps: f64) -> f64 {
    -(1.0 - a).max(eps).ln()
}

/// Build `S_B` for a ball. Empty when no admissible split exists.
pub fn generate_candidates(ball: &CodedBall, x: &DataMatrix) -> SplitCandidateSet {
    let n_b = ball.stats.n_b();
    let d = x.d();
    let n_min = min_child_size(n_b, d);
    if n_b < 2 || n_b < 2 * n_min {
        return SplitCandidateSet::default();
    }
    let orderings = candidate_orderings(ball, x);
    let (lo, hi) = (n_min, n_b - n_min);
    let per_ordering = hi - lo + 1;
    let admissible_pairs = orderings.len() * per_ordering;

    let budget = candidate_budget(n_b).min(admissible_pairs);
    let per = budget.div_ceil(orderings.len()).min(per_ordering);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(budget);
    'outer: for (o, order) in orderings.iter().enumerate() {
        for p in cut_positions(lo, hi, per, n_b / 2) {
            if chosen.len() == budget {
                break 'outer;
            }
            if seen.insert(canonical_side(order, p)) {
                chosen.push((o, p));
            }
        }
    }

    let evaluated = chosen
        .into_iter()
        .map(|(o, p)| SplitCandidate {
            ordering: o,
            position: p,
            left: orderings[o][..p].to_vec(),
            right: orderings[o][p..].to_vec(),
        })
        .collect();
    SplitCandidateSet {
        orderings,
        admissible_pairs,
        evaluated,
    }
}

/// The side of a cut holding the smallest sample index, sorted; identifies
/// the partition regardless of which ordering produced it.
fn canonical_side(order: &[usize], p: usize) -> Vec<usize> {
    let min = *order.iter().min().expect("non-empty ordering");
    let side = if order[..p].contains(&min) {
        &order[..p]
    } else {
        &order[p..]
    };
    let mut side = side.to_vec();
    side.sort_unstable();
    side
}

/// `count` cut positions spread evenly over `[lo, hi]` (both ends included
/// when `count > 1`), with the one nearest `median` moved onto it. Ascending,
/// deduplicated.
pub fn cut_positions(lo: usize, hi: usize, count: usize, median: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![median];
    }
    let span = hi - lo;
    let mut positions: Vec<usize> = (0..count)
        .map(|t| lo + (t * span + (count - 1) / 2) / (count - 1))
        .collect();
    if !positions.contains(&median) {
        let nearest = (0..count)
            .min_by_key(|&t| positions[t].abs_diff(median))
            .expect("count > 1");
        positions[nearest] = median;
    }
    positions.sort_unstable();
    positions.dedup();
    positions
}

/// `L_cut`: cost of every reciprocal edge with one end in `left` and the
/// other in `right`, each edge counted once.
pub fn cut_code(left: &[usize], right: &[usize], rec: &NeighborGraph, eps: f64) -> f64 {
    let mut right_sorted = right.to_vec();
    right_sorted.sort_unstable();
    let mut total = 0.0;
    for &i in left {
        for &(j, a) in rec.rec_neighbors(i) {
            if right_sorted.binary_search(&j).is_ok() {
                total += edge_cut_cost(a, eps);
            }
        }
    }
    total
}

/// Split description length from the two child leaf codes, the cut cost
/// and `|Q_B|`.
pub fn split_code(left_code: f64, right_code: f64, cut: f64, admissible_pairs: usize) -> f64 {
    left_code + right_code + cut + LN_2 + ((admissible_pairs + 1) as f64).ln()
}

/// A candidate after full scoring; the child codes are reused verbatim if the
/// split is accepted.
#[derive(Debug, Clone)]
pub struct EvaluatedSplit {
    pub candidate: SplitCandidate,
    pub left: CodedBall,
    pub right: CodedBall,
    pub cut: f64,
    pub code: f64,
}

#[derive(Debug, Clone)]
pub struct SplitDecision {
    /// `L_1 - L_2`; `-inf` when no admissible split exists.
    pub gain: f64,
    pub retain_code: f64,
    pub best: Option<EvaluatedSplit>,
    pub admissible_pairs: usize,
    pub evaluated: usize,
}

impl SplitDecision {
    pub fn splits(&self) -> bool {
        self.gain > 0.0
    }
}

/// Score every candidate of `ball` and compare the best against retaining it.
pub fn mdl_gain(
    ball: &CodedBall,
    coder: &BallCoder<'_>,
    rec: &NeighborGraph,
    eps: f64,
) -> Result<SplitDecision> {
    let set = generate_candidates(ball, coder.data);
    let retain_code = ball.code.total + LN_2;
    let q = set.admissible_pairs;
    let scored: Vec<Result<EvaluatedSplit>> = set
        .evaluated
        .par_iter()
        .map(|cand| {
            let left = coder.code(&cand.left)?;
            let right = coder.code(&cand.right)?;
            let cut = cut_code(&cand.left, &cand.right, rec, eps);
            let code = split_code(left.code.total, right.code.total, cut, q);
            Ok(EvaluatedSplit {
                candidate: cand.clone(),
                left,
                right,
                cut,
                code,
            })
        })
        .collect();
    let mut best: Option<EvaluatedSplit> = None;
    for s in scored {
        let s = s?;
        if best.as_ref().map_or(true, |b| s.code < b.code) {
            best = Some(s);
        }
    }
    let gain = best
        .as_ref()
        .map_or(f64::NEG_INFINITY, |b| retain_code - b.code);
    Ok(SplitDecision {
        gain,
        retain_code,
        best,
        admissible_pairs: q,
        evaluated: set.evaluated.len(),
    })
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub ball: CodedBall,
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
    /// Gain evaluated when the node was created.
    pub gain: f64,
    pub admissible_pairs: usize,
    pub evaluated_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct GbTree {
    pub nodes: Vec<TreeNode>,
    /// Node ids of the stable leaves, ascending.
    pub leaves: Vec<usize>,
    /// Sample -> position in `leaves`.
    pub assignment: Vec<usize>,
    pub accepted_splits: usize,
}

impl GbTree {
    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_ball(&self, b: usize) -> &CodedBall {
        &self.nodes[self.leaves[b]].ball
    }

    /// Node-per-entry JSON description for inspection.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct NodeDump {
            id: usize,
            parent: Option<usize>,
            children: Option<(usize, usize)>,
            size: usize,
            leaf_code: f64,
            model: CodeModel,
            best_q: Option<usize>,
            gain: Option<f64>,
        }
        let dump: Vec<NodeDump> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| NodeDump {
                id,
                parent: n.parent,
                children: n.children,
                size: n.ball.stats.n_b(),
                leaf_code: n.ball.code.total,
                model: n.ball.code.model,
                best_q: n.ball.code.best_q,
                gain: n.gain.is_finite().then_some(n.gain),
            })
            .collect();
        serde_json::to_string_pretty(&dump).expect("tree dump serializes")
    }
}

#[derive(Debug, PartialEq)]
struct Pending {
    gain: f64,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on gain, earlier node first on ties
        self.gain
            .total_cmp(&other.gain)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Grow the tree over a normalized dataset with its preliminary graph.
pub fn build_tree(x: &DataMatrix, rec: &NeighborGraph) -> Result<GbTree> {
    build_tree_with(x, rec, EPSILON)
}

pub fn build_tree_with(x: &DataMatrix, rec: &NeighborGraph, eps: f64) -> Result<GbTree> {
    let coder = BallCoder::with_epsilon(x, rec.nn1(), eps);
    let root: Vec<usize> = (0..x.n()).collect();
    let root_ball = coder.code(&root)?;

    let mut nodes = Vec::new();
    let mut decisions: Vec<Option<SplitDecision>> = Vec::new();
    let mut heap = BinaryHeap::new();

    let push = |ball: CodedBall,
                    parent: Option<usize>,
                    nodes: &mut Vec<TreeNode>,
                    decisions: &mut Vec<Option<SplitDecision>>,
                    heap: &mut BinaryHeap<Pending>|
     -> Result<()> {
        let decision = mdl_gain(&ball, &coder, rec, eps)?;
        let id = nodes.len();
        nodes.push(TreeNode {
            ball,
            parent,
            children: None,
            gain: decision.gain,
            admissible_pairs: decision.admissible_pairs,
            evaluated_candidates: decision.evaluated,
        });
        if decision.splits() {
            heap.push(Pending {
                gain: decision.gain,
                node: id,
            });
            decisions.push(Some(decision));
        } else {
            decisions.push(None);
        }
        Ok(())
    };

    push(root_ball, None, &mut nodes, &mut decisions, &mut heap)?;
    let mut accepted = 0;
    while let Some(Pending { node, .. }) = heap.pop() {
        let decision = decisions[node].take().expect("queued node has a decision");
        let split = decision.best.expect("positive gain implies a split");
        let left_id = nodes.len();
        push(split.left, Some(node), &mut nodes, &mut decisions, &mut heap)?;
        push(split.right, Some(node), &mut nodes, &mut decisions, &mut heap)?;
        nodes[node].children = Some((left_id, left_id + 1));
        accepted += 1;
    }

    let leaves: Vec<usize> = (0..nodes.len())
        .filter(|&id| nodes[id].children.is_none())
        .collect();
    let mut assignment = vec![usize::MAX; x.n()];
    for (b, &id) in leaves.iter().enumerate() {
        for &i in &nodes[id].ball.stats.indices {
            debug_assert_eq!(assignment[i], usize::MAX, "leaves overlap");
            assignment[i] = b;
        }
    }
    debug_assert!(assignment.iter().all(|&b| b != usize::MAX));
    Ok(GbTree {
        nodes,
        leaves,
        assignment,
        accepted_splits: accepted,
    })
}
