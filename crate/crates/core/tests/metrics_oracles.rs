// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use concept_circuits::circuit::{build_comp_graph, Circuit, CircuitEdge, CompGraph};
use concept_circuits::lm::{ModelConfig, PortKind};
use concept_circuits::metrics::*;
use common::{brute_core, eigen_oracle, floyd_warshall_efficiency, random_graphs};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

#[test]
fn centrality_matches_dense_eigensolver() {
    let star = UGraph::new(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
    let c = eigenvector_centrality(&star).unwrap();
    let o = eigen_oracle(&star);
    for (a, b) in c.iter().zip(&o) {
        assert!((a - b).abs() < 1e-8, "{c:?} vs {o:?}");
    }
    // hub = 1/sqrt(2), leaves = 1/sqrt(6)
    assert!((c[0] - 0.5f64.sqrt()).abs() < 1e-8);
    for g in random_graphs() {
        let c = eigenvector_centrality(&g).unwrap();
        let o = eigen_oracle(&g);
        for (a, b) in c.iter().zip(&o) {
            assert!((a - b).abs() < 1e-8, "{:?}: {c:?} vs {o:?}", g.edges());
        }
        let std = eigenvector_centrality_std(&g).unwrap();
        assert!((0.0..=1.0).contains(&std));
    }
}

#[test]
fn density_matches_pair_count() {
    for g in random_graphs() {
        let n = g.n();
        let mut count = 0;
        for a in 0..n {
            for b in 0..n {
                if a < b && g.neighbors(a).contains(&b) {
                    count += 1;
                }
            }
        }
        let expected = if n < 2 { 0.0 } else { 2.0 * count as f64 / (n * (n - 1)) as f64 };
        assert!((density(&g) - expected).abs() <= 1e-12);
    }
}

#[test]
fn efficiency_matches_floyd_warshall() {
    for g in random_graphs() {
        assert!((global_efficiency(&g) - floyd_warshall_efficiency(&g)).abs() <= 1e-12);
    }
}

#[test]
fn core_numbers_match_definition() {
    for g in random_graphs() {
        let cores = core_numbers(&g);
        for (u, &core) in cores.iter().enumerate() {
            assert_eq!(core, brute_core(&g, u), "node {u} of {:?}", g.edges());
        }
        let avg = avg_kcore(&g);
        assert!(avg >= 0.0 && avg <= g.n().saturating_sub(1) as f64);
    }
}

fn relabel(g: &UGraph, perm: &[usize]) -> UGraph {
    UGraph::new(g.n(), g.edges().iter().map(|&(a, b)| (perm[a], perm[b]))).unwrap()
}

fn arb_graph() -> impl Strategy<Value = UGraph> {
    (1usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let m = pairs.len();
        prop::collection::vec(any::<bool>(), m).prop_map(move |mask| {
            UGraph::new(n, pairs.iter().zip(&mask).filter(|(_, &k)| k).map(|(&e, _)| e)).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn metrics_are_permutation_invariant(g in arb_graph(), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..g.n()).collect();
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let h = relabel(&g, &perm);
        let (a, b) = (ugraph_metrics(&g).unwrap(), ugraph_metrics(&h).unwrap());
        prop_assert!((a.density - b.density).abs() <= 1e-12);
        prop_assert!((a.global_efficiency - b.global_efficiency).abs() <= 1e-12);
        prop_assert!((a.avg_kcore - b.avg_kcore).abs() <= 1e-12);
        // The largest component can be ambiguous on ties; compare the sorted
        // centrality multiset only when it is unique.
        let comps = g.components();
        let max = comps.iter().map(|c| c.len()).max().unwrap();
        if comps.iter().filter(|c| c.len() == max).count() == 1 {
            prop_assert!((a.centrality_std - b.centrality_std).abs() <= 1e-8);
        }
    }

    #[test]
    fn adding_an_edge_never_lowers_density_or_efficiency(g in arb_graph(), a in 0usize..12, b in 0usize..12) {
        let (a, b) = (a % g.n(), b % g.n());
        prop_assume!(a != b);
        let h = UGraph::new(g.n(), g.edges().iter().copied().chain([(a, b)])).unwrap();
        prop_assert!(density(&h) >= density(&g));
        prop_assert!(global_efficiency(&h) >= global_efficiency(&g) - 1e-15);
        prop_assert!((0.0..=1.0).contains(&density(&h)));
        prop_assert!((0.0..=1.0).contains(&global_efficiency(&h)));
    }
}

fn graph_2x2() -> CompGraph {
    build_comp_graph(&ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 4,
        d_mlp: 4,
        context_len: 4,
        vocab_size: 5,
    })
    .unwrap()
}

fn circuit(ids: &[usize]) -> Circuit {
    Circuit {
        concept_id: 0,
        checkpoint: "c".into(),
        threshold: 0.7,
        m: 5,
        k_edges: ids.len(),
        faithfulness: 1.0,
        flagged: false,
        excluded_pairs: 0,
        n_layers: 2,
        n_heads: 2,
        edges: ids
            .iter()
            .map(|&id| CircuitEdge {
                id,
                src: String::new(),
                dst: String::new(),
                port: PortKind::In,
                score: 0.0,
            })
            .collect(),
    }
}

#[test]
fn projection_collapses_ports_and_counts_incident_nodes() {
    let g = graph_2x2();
    assert_eq!(to_undirected(&circuit(&[]), &g).unwrap().n(), 0);
    assert_eq!(metric_vector(&circuit(&[]), &g).unwrap().as_array(), [0.0; 4]);
    // embed -> a0.h0 via q, k and v
    let qkv: Vec<usize> = g.edges.iter().filter(|e| e.src == 0 && e.dst == 1).map(|e| e.id).collect();
    assert_eq!(qkv.len(), 3);
    let u = to_undirected(&circuit(&qkv), &g).unwrap();
    assert_eq!((u.n(), u.edges().len()), (2, 1));
    assert_eq!(u.labels, vec![0, 1]);

    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    for _ in 0..30 {
        let ids: Vec<usize> = (0..g.n_edges()).filter(|_| rng.random_bool(0.2)).collect();
        let u = to_undirected(&circuit(&ids), &g).unwrap();
        let mut incident: Vec<usize> = ids.iter().flat_map(|&i| [g.edges[i].src, g.edges[i].dst]).collect();
        incident.sort_unstable();
        incident.dedup();
        assert_eq!(u.n(), incident.len());
        assert_eq!(u.labels, incident);
        let m = metric_vector(&circuit(&ids), &g).unwrap();
        assert_eq!(m, ugraph_metrics(&u).unwrap());
        let dd = directed_density(&circuit(&ids), &g).unwrap();
        assert!((0.0..=1.0).contains(&dd));
    }
}

#[test]
fn complete_projection_values() {
    // Embed, a0.h0, a0.h1 and m0 are pairwise connected only through the
    // ordered stage structure; heads of one layer share no edge, so pick
    // embed, a0.h0, m0, a1.h0 which form a chain of stages.
    let g = graph_2x2();
    let nodes = [0usize, 1, 3, 4];
    let ids: Vec<usize> = g
        .edges
        .iter()
        .filter(|e| nodes.contains(&e.src) && nodes.contains(&e.dst))
        .map(|e| e.id)
        .collect();
    let m = metric_vector(&circuit(&ids), &g).unwrap();
    assert!(m.centrality_std.abs() < 1e-12);
    assert_eq!((m.density, m.global_efficiency, m.avg_kcore), (1.0, 1.0, 3.0));
}

#[test]
fn jaccard_examples() {
    assert_eq!(jaccard_edges(&circuit(&[1, 2, 3]), &circuit(&[1, 2, 3])).unwrap(), 1.0);
    assert_eq!(jaccard_edges(&circuit(&[1, 2]), &circuit(&[3, 4])).unwrap(), 0.0);
    assert_eq!(jaccard_edges(&circuit(&[1, 2, 3]), &circuit(&[2, 3, 4])).unwrap(), 0.5);
    assert_eq!(jaccard_edges(&circuit(&[]), &circuit(&[])).unwrap(), 1.0);
    let mut other = circuit(&[1]);
    other.n_layers = 3;
    assert!(jaccard_edges(&circuit(&[1]), &other).is_err());
}
