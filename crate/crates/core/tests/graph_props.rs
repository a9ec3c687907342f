use gbtrsc::affinity::{
    bridge_adjust, bridge_costs, coding_scales, edge_costs, symmetrize, tree_affinity,
    AffinityGraph, GraphVariant,
};
use gbtrsc::dataio::{normalize, DataMatrix};
use gbtrsc::eigen::dense_eigenvalues_ascending;
use gbtrsc::gb_tree::build_tree;
use gbtrsc::knn_graph::build_neighbor_graph;
use gbtrsc::spectral::{connected_components, normalized_laplacian, partition_graph, ClusterConfig, PartitionMode};
use gbtrsc::EPSILON;
use proptest::prelude::*;

fn matrix(max_n: usize, max_d: usize) -> impl Strategy<Value = DataMatrix> {
    (3..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        // a coarse grid makes duplicate points and distance ties common
        prop::collection::vec(0u8..8, n * d).prop_map(move |v| {
            let values = v.into_iter().map(|c| c as f64 / 7.0).collect();
            normalize(&DataMatrix::new(values, n, d).unwrap()).unwrap()
        })
    })
}

fn assert_symmetric_unit_range(w: &AffinityGraph) {
    for (i, j, a) in w.edges() {
        assert!(a > 0.0 && a <= 1.0, "weight {a} on ({i},{j})");
        assert_eq!(w.weight(i, j), w.weight(j, i));
    }
}

/// Graph in which every vertex has at least one edge.
fn no_isolated_graph() -> impl Strategy<Value = AffinityGraph> {
    (2usize..25).prop_flat_map(|n| {
        (
            prop::collection::vec((0..n, 0.05f64..1.0), n),
            prop::collection::vec((0..n, 0..n, 0.05f64..1.0), 0..n),
        )
            .prop_map(move |(partners, extra)| {
                let mut edges = Vec::new();
                for (i, (p, w)) in partners.into_iter().enumerate() {
                    let j = if p == i { (i + 1) % n } else { p };
                    edges.push((i, j, w));
                }
                edges.extend(extra.into_iter().filter(|(i, j, _)| i != j));
                AffinityGraph::from_edges(n, edges, GraphVariant::Completed)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reciprocal_weights_in_unit_range_and_symmetric(x in matrix(40, 3)) {
        let g = build_neighbor_graph(&x).unwrap();
        for e in g.rec_edges() {
            prop_assert!(e.weight > 0.0 && e.weight <= 1.0);
            prop_assert!(e.i < e.j);
            prop_assert!(g.is_neighbor(e.i, e.j) && g.is_neighbor(e.j, e.i));
        }
        for i in 0..x.n() {
            for &(j, a) in g.rec_neighbors(i) {
                prop_assert!(g.rec_neighbors(j).iter().any(|&(t, b)| t == i && b == a));
            }
        }
        let tree = build_tree(&x, &g).unwrap();
        let aff = tree_affinity(&g, &tree, Some(3), EPSILON);
        assert_symmetric_unit_range(&aff.rec);
        assert_symmetric_unit_range(&aff.com);
        for (i, j, a) in aff.rec.edges() {
            prop_assert!(aff.com.weight(i, j) >= a);
        }
    }

    #[test]
    fn bridge_only_lowers_weights(x in matrix(40, 3)) {
        let g = build_neighbor_graph(&x).unwrap();
        let tree = build_tree(&x, &g).unwrap();
        let costs = edge_costs(&g, &coding_scales(&tree, EPSILON), &tree.assignment);
        let bridge = bridge_costs(&g, EPSILON);
        for i in 0..x.n() {
            for s in 0..g.k() {
                prop_assert!(bridge.cost(i, s) >= 0.0);
                let plain = costs.affinity(i, s);
                let bridged = (-(costs.cost(i, s) + bridge.cost(i, s))).exp().max(f64::MIN_POSITIVE);
                prop_assert!(bridged > 0.0 && bridged <= plain && plain <= 1.0);
            }
        }
        let (rec, com) = symmetrize(&g, &costs);
        let (rec_off, com_off) = bridge_adjust(&g, &costs, false, EPSILON);
        prop_assert_eq!(rec.edges().collect::<Vec<_>>(), rec_off.edges().collect::<Vec<_>>());
        prop_assert_eq!(com.edges().collect::<Vec<_>>(), com_off.edges().collect::<Vec<_>>());
        let (rec_on, com_on) = bridge_adjust(&g, &costs, true, EPSILON);
        for (plain, bridged) in [(&rec, &rec_on), (&com, &com_on)] {
            prop_assert_eq!(plain.num_edges(), bridged.num_edges());
            for (i, j, w) in bridged.edges() {
                prop_assert!(w <= plain.weight(i, j));
            }
        }
    }

    #[test]
    fn laplacian_spectrum_bounds_and_zero_multiplicity(w in no_isolated_graph()) {
        let values = dense_eigenvalues_ascending(normalized_laplacian(&w, EPSILON).to_dense()).unwrap();
        prop_assert!(values[0] >= -1e-8);
        prop_assert!(*values.last().unwrap() <= 2.0 + 1e-8);
        let zeros = values.iter().filter(|v| v.abs() < 1e-6).count();
        prop_assert_eq!(zeros, connected_components(&w).0);
    }

    #[test]
    fn component_partition_cuts_nothing(w in no_isolated_graph()) {
        let (kappa, _) = connected_components(&w);
        let p = partition_graph(&w, kappa, &ClusterConfig::default()).unwrap();
        prop_assert_eq!(p.k_used, kappa);
        if kappa > 1 {
            prop_assert_eq!(p.mode, PartitionMode::Components);
        }
        for (i, j, _) in w.edges() {
            prop_assert_eq!(p.labels[i], p.labels[j]);
        }
    }

    #[test]
    fn any_k_gives_nonempty_clusters(w in no_isolated_graph(), k in 1usize..6) {
        prop_assume!(k <= w.n());
        let p = partition_graph(&w, k, &ClusterConfig::default()).unwrap();
        prop_assert!(p.k_used <= k.max(connected_components(&w).0));
        for c in 0..p.k_used {
            prop_assert!(p.labels.contains(&c));
        }
        prop_assert!(p.labels.iter().all(|&l| l < p.k_used));
    }
}

#[test]
fn completed_knn_graph_zero_multiplicity_matches_components() {
    // two groups far apart on both axes (min-max scaling is per axis); the
    // completed graph has no isolated vertices
    let mut rows = Vec::new();
    for c in 0..2 {
        for i in 0..12 {
            let offset = c as f64 * 10.0;
            rows.push(vec![offset + (i as f64 * 0.37).sin(), offset + (i as f64 * 0.91).cos()]);
        }
    }
    let x = normalize(&DataMatrix::from_rows(&rows).unwrap()).unwrap();
    let g = build_neighbor_graph(&x).unwrap();
    let tree = build_tree(&x, &g).unwrap();
    let aff = tree_affinity(&g, &tree, None, EPSILON);
    let values = dense_eigenvalues_ascending(normalized_laplacian(&aff.com, EPSILON).to_dense()).unwrap();
    let zeros = values.iter().filter(|v| v.abs() < 1e-6).count();
    assert_eq!(zeros, connected_components(&aff.com).0);
    assert_eq!(zeros, 2);
}
