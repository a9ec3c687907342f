use std::path::PathBuf;

use gbtrsc::dataio::{generate, load_csv, normalize, DataMatrix};
use gbtrsc::gb_tree::{build_tree, GbTree};
use gbtrsc::knn_graph::build_neighbor_graph;
use gbtrsc::metrics::ari;
use gbtrsc::spectral::{baseline_sc_knn, cluster, cluster_with, ClusterConfig, PartitionMode};
use gbtrsc::Error;
use proptest::prelude::*;

fn iris() -> DataMatrix {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
    load_csv(path, true, Some(4)).unwrap()
}

fn gen(spec: &str) -> DataMatrix {
    generate(&spec.parse().unwrap()).unwrap()
}

fn check_tree(tree: &GbTree, n: usize) {
    assert!(tree.accepted_splits <= n.saturating_sub(1));
    assert_eq!(tree.num_leaves(), tree.accepted_splits + 1);
    let mut seen = vec![false; n];
    for (b, &leaf) in tree.leaves.iter().enumerate() {
        let node = &tree.nodes[leaf];
        assert!(node.children.is_none());
        for &i in &node.ball.stats.indices {
            assert!(!seen[i], "sample {i} in two leaves");
            seen[i] = true;
            assert_eq!(tree.assignment[i], b);
        }
    }
    assert!(seen.iter().all(|&s| s), "leaves miss a sample");
    for node in &tree.nodes {
        if let Some((l, r)) = node.children {
            assert!(node.gain > 0.0);
            assert_eq!(
                tree.nodes[l].ball.stats.n_b() + tree.nodes[r].ball.stats.n_b(),
                node.ball.stats.n_b()
            );
        }
    }
}

fn tree_of(raw: &DataMatrix) -> GbTree {
    let x = normalize(raw).unwrap();
    let g = build_neighbor_graph(&x).unwrap();
    build_tree(&x, &g).unwrap()
}

#[test]
fn tree_structure_on_reference_data() {
    for raw in [
        iris(),
        gen("spirals:312:3:0.02:0"),
        gen("nested_circles:770:3:0.02:0"),
        gen("moons:373:2:0.05:0"),
        gen("blobs:300:3:0.3:0"),
    ] {
        check_tree(&tree_of(&raw), raw.n());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_structure_on_random_data((n, d, v) in (2usize..60, 1usize..5).prop_flat_map(|(n, d)| (Just(n), Just(d), prop::collection::vec(0u8..20, n * d)))) {
        let raw = DataMatrix::new(v.into_iter().map(f64::from).collect(), n, d).unwrap();
        check_tree(&tree_of(&raw), n);
    }

    #[test]
    fn partitions_are_well_formed((n, v) in (4usize..50).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0f64..1.0, n * 2))), k in 2usize..5) {
        prop_assume!(k <= n);
        let raw = DataMatrix::new(v, n, 2).unwrap();
        let p = cluster(&raw, Some(k)).unwrap();
        prop_assert!(p.k_used >= 1 && p.k_used <= n);
        for c in 0..p.k_used {
            prop_assert!(p.labels.contains(&c));
        }
        prop_assert!(p.labels.iter().all(|&l| l < p.k_used));
    }
}

#[test]
fn repeated_runs_agree_bit_for_bit() {
    let raw = gen("moons:200:2:0.08:5");
    let a = cluster_with(&raw, Some(2), &ClusterConfig::default()).unwrap();
    let b = cluster_with(&raw, Some(2), &ClusterConfig::default()).unwrap();
    assert_eq!(a.partition, b.partition);
    assert_eq!(a.tree.to_json(), b.tree.to_json());
    let c = cluster(&raw, None).unwrap();
    let d = cluster(&raw, None).unwrap();
    assert_eq!(c, d);
}

#[test]
fn row_permutation_only_renames_clusters() {
    let raw = gen("blobs:150:3:0.15:4");
    let truth = raw.labels.clone().unwrap();
    let n = raw.n();
    let perm: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
    let permuted = raw.select_rows(&perm);
    let a = cluster(&raw, Some(3)).unwrap().labels;
    let b = cluster(&permuted, Some(3)).unwrap().labels;
    let mut back = vec![0; n];
    for (pos, &orig) in perm.iter().enumerate() {
        back[orig] = b[pos];
    }
    assert_eq!(ari(&a, &back).unwrap(), 1.0);
    assert_eq!(ari(&truth, &a).unwrap(), 1.0);
}

#[test]
fn noiseless_spirals_are_recovered() {
    let raw = gen("spirals:312:3:0.0:0");
    let p = cluster(&raw, Some(3)).unwrap();
    assert_eq!(ari(raw.labels.as_ref().unwrap(), &p.labels).unwrap(), 1.0);
}

#[test]
fn iris_lands_near_reference_scores() {
    let raw = iris();
    let truth = raw.labels.clone().unwrap();
    let ours = ari(&truth, &cluster(&raw, Some(3)).unwrap().labels).unwrap();
    let base = ari(&truth, &baseline_sc_knn(&raw, 3, 10).unwrap().labels).unwrap();
    assert!(ours >= 0.80, "ours {ours}");
    assert!((base - 0.7445).abs() <= 0.10, "baseline {base}");
}

#[test]
fn two_points_two_clusters() {
    let raw = DataMatrix::from_rows(&[vec![0.0, 1.0], vec![3.0, -2.0]]).unwrap();
    let mut labels = cluster(&raw, Some(2)).unwrap().labels;
    labels.sort_unstable();
    assert_eq!(labels, vec![0, 1]);
}

#[test]
fn input_errors() {
    let one = DataMatrix::from_rows(&[vec![1.0]]).unwrap();
    assert!(matches!(cluster(&one, None), Err(Error::TooFewSamples { .. })));
    let raw = gen("blobs:20:2:0.1:0");
    assert!(cluster(&raw, Some(21)).is_err());
    assert!(cluster(&raw, Some(0)).is_err());
}

#[test]
fn baseline_examples() {
    let raw = gen("blobs:120:2:0.05:1");
    let truth = raw.labels.clone().unwrap();
    assert_eq!(ari(&truth, &baseline_sc_knn(&raw, 2, 10).unwrap().labels).unwrap(), 1.0);
    let single = baseline_sc_knn(&raw, 1, 10).unwrap();
    assert!(single.labels.iter().all(|&l| l == 0));
    assert_eq!(single.mode, PartitionMode::GlobalSpectral);
}

#[test]
fn estimated_k_path() {
    let raw = gen("blobs:240:4:0.05:2");
    let run = cluster_with(&raw, None, &ClusterConfig::default()).unwrap();
    let k_hat = run.estimated_k.unwrap();
    assert_eq!(run.k_target, k_hat);
    assert!((2..=20).contains(&k_hat));
    // the four blobs are separate components, so no cluster straddles two
    let truth = raw.labels.as_ref().unwrap();
    for c in 0..run.partition.k_used {
        let mut members = truth.iter().zip(&run.partition.labels).filter(|(_, &l)| l == c).map(|(&t, _)| t);
        let first = members.next().unwrap();
        assert!(members.all(|t| t == first));
    }
    // n < 3 falls back to the component count
    let two = DataMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
    let run = cluster_with(&two, None, &ClusterConfig::default()).unwrap();
    assert_eq!(run.estimated_k, Some(run.selected_components));
}
