use std::collections::BTreeSet;

use proptest::prelude::*;
use unet::gallery;
use unet::graph::*;
use unet::linalg::{self, haar_unitary};
use unet::tensor::{gate_tensor, Tensor};

#[test]
fn identity_bilayer_is_clean() {
    let d = validate(&gallery::build_identity_bilayer(3, 2, 2).unwrap());
    assert!(d.structural.is_empty());
    assert!(d.non_unitary.is_empty());
    assert!(d.dag);
    assert!(d.cycle.is_none());
}

#[test]
fn single_layer_ring_has_a_loop() {
    let d = validate(&gallery::build_single_layer_ring(4, 2, 0).unwrap());
    assert!(d.structural.is_empty());
    assert!(!d.dag);
    assert!(d.cycle.is_some());
}

#[test]
fn dim_mismatch_names_both_legs() {
    let mut net = Network::new(2);
    net.add_vertex("a", Tensor::identity(&[("i", "o", 2)], "a"), 0, 0);
    net.add_vertex("b", Tensor::identity(&[("i", "o", 3)], "b"), 0, 1);
    net.source("a", "i", 0).connect("a", "o", "b", "i").sink("b", "o", 0);
    let d = validate(&net);
    assert_eq!(d.structural.len(), 1, "{:?}", d.structural);
    assert!(d.structural[0].contains("`a.o`") && d.structural[0].contains("`b.i`"));
}

#[test]
fn bilayer_order_and_loop_witness() {
    let TopoResult::Order(o) = topological_sort(&gallery::build_identity_bilayer(3, 2, 2).unwrap()) else { panic!() };
    assert_eq!(o, ["B1", "B2", "B3", "T3", "T2", "T1"]);
    let TopoResult::Cycle(c) = topological_sort(&gallery::build_loop_example(0).unwrap()) else { panic!() };
    assert_eq!(c, ["A", "B"]);
    assert_eq!(topological_sort(&Network::new(2)), TopoResult::Order(vec![]));
}

/// Two-layer qubit brickwork: w blocks on cells (2m, 2m+1), then v blocks on
/// (2m−1, 2m); cells 1..=n with n even.
fn margolus_brickwork(n: usize, seed: u64) -> Network {
    let mut r = linalg::rng(seed);
    let mut net = Network::new(2);
    let mut top: Vec<(String, String)> = (1..=n).map(|c| (String::new(), format!("src{c}"))).collect();
    for c in (2..n).step_by(2) {
        let id = format!("w{c}");
        let g = gate_tensor(&[("a", 2), ("b", 2)], &[("x", 2), ("y", 2)], &haar_unitary(4, &mut r), &id).unwrap();
        net.add_vertex(&id, g, c as i64, 0);
        net.source(&id, "a", c as i64).source(&id, "b", c as i64 + 1);
        top[c - 1] = (id.clone(), "x".into());
        top[c] = (id, "y".into());
    }
    for c in (1..n).step_by(2) {
        let id = format!("v{c}");
        let g = gate_tensor(&[("a", 2), ("b", 2)], &[("x", 2), ("y", 2)], &haar_unitary(4, &mut r), &id).unwrap();
        net.add_vertex(&id, g, c as i64, 1);
        for (k, leg) in [(c - 1, "a"), (c, "b")] {
            let (from, from_leg) = &top[k];
            if from.is_empty() {
                net.source(&id, leg, k as i64 + 1);
            } else {
                net.connect(from, from_leg, &id, leg);
            }
        }
        net.sink(&id, "x", c as i64).sink(&id, "y", c as i64 + 1);
    }
    net
}

#[test]
fn margolus_cone_has_four_sites() {
    let net = margolus_brickwork(8, 3);
    assert!(validate(&net).is_valid_unitary_network());
    let k = net.sources.iter().position(|s| s.site == 4).unwrap();
    let cone = causal_cone(&net, Node::Source(k)).unwrap();
    assert_eq!(cone.base, BTreeSet::from([3, 4, 5, 6]));
}

#[test]
fn sink_apex_and_bilayer_cones() {
    let net = gallery::build_haar_bilayer(4, 2, 2, 2, 7).unwrap();
    let cone = causal_cone(&net, Node::Sink(2)).unwrap();
    assert!(cone.cone.net.vertices.is_empty());
    assert_eq!(cone.base, BTreeSet::from([net.sinks[2].site]));
    for k in 0..net.sources.len() {
        if net.sources[k].is_physical() {
            let c = causal_cone(&net, Node::Source(k)).unwrap();
            assert_eq!(c.base, BTreeSet::from([1, 2, 3, 4]));
        }
    }
}

#[test]
fn distances() {
    let net = gallery::build_identity_bilayer(3, 2, 2).unwrap();
    assert_eq!(network_distance(&net, "B1", "B2").unwrap(), 1.0);
    assert_eq!(network_distance(&net, "B1", "T1").unwrap(), 0.0);
    assert_eq!(network_distance(&net, "B1", "T2").unwrap(), 1.0);
    assert_eq!(network_distance(&net, "T1", "B1").unwrap(), f64::INFINITY);
}

#[test]
fn subnetwork_counts() {
    let net = gallery::build_subnetwork_example(0).unwrap();
    let full: Vec<&str> = net.vertices.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(extract_subnetwork(&net, &full).unwrap().net, net);
    let ab = extract_subnetwork(&net, &["A", "B"]).unwrap();
    assert_eq!(ab.net.vertices.len(), 2);
    assert_eq!(ab.net.edges.len(), 1);
    assert_eq!(ab.net.sources.len() + ab.net.sinks.len(), 5);
    let empty = extract_subnetwork(&net, &[]).unwrap();
    assert!(empty.net.vertices.is_empty() && empty.net.edges.is_empty());
}

#[test]
fn canonical_centers() {
    let net = gallery::build_identity_bilayer(3, 2, 2).unwrap();
    let all: Vec<&str> = net.vertices.iter().map(|v| v.id.as_str()).collect();
    assert!(canonical_form_check(&net, &all).unwrap().canonical);
    assert!(canonical_form_check(&net, &["B3", "T3"]).unwrap().canonical);
    let c = canonical_form_check(&net, &["B1", "T3"]).unwrap();
    assert!(!c.canonical);
    assert_eq!(c.witness.as_deref(), Some("B2"));
}

/// Exhaustive oracle: a center is canonical iff some topological order lists
/// it contiguously.
fn contiguous_in_some_order(net: &Network, center: &BTreeSet<usize>) -> bool {
    let succ = successors(net);
    let n = succ.len();
    fn rec(succ: &[Vec<usize>], indeg: &mut Vec<usize>, placed: &mut Vec<usize>, center: &BTreeSet<usize>) -> bool {
        let n = succ.len();
        if placed.len() == n {
            let pos: Vec<usize> = placed.iter().enumerate().filter(|(_, v)| center.contains(v)).map(|(i, _)| i).collect();
            return pos.is_empty() || pos[pos.len() - 1] - pos[0] + 1 == pos.len();
        }
        for v in 0..n {
            if indeg[v] == 0 && !placed.contains(&v) {
                placed.push(v);
                for &w in &succ[v] {
                    indeg[w] -= 1;
                }
                let ok = rec(succ, indeg, placed, center);
                for &w in &succ[v] {
                    indeg[w] += 1;
                }
                placed.pop();
                if ok {
                    return true;
                }
            }
        }
        false
    }
    let mut indeg = vec![0; n];
    for s in &succ {
        for &w in s {
            indeg[w] += 1;
        }
    }
    rec(&succ, &mut indeg, &mut Vec::new(), center)
}

#[test]
fn canonical_check_matches_order_enumeration() {
    let net = gallery::build_identity_bilayer(3, 2, 2).unwrap();
    let ids: Vec<&str> = net.vertices.iter().map(|v| v.id.as_str()).collect();
    for mask in 1u32..(1 << ids.len()) {
        let set: BTreeSet<usize> = (0..ids.len()).filter(|i| mask >> i & 1 == 1).collect();
        let center: Vec<&str> = set.iter().map(|&i| ids[i]).collect();
        let got = canonical_form_check(&net, &center).unwrap().canonical;
        assert_eq!(got, contiguous_in_some_order(&net, &set), "center {center:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_dags_sort_respects_edges(seed in any::<u64>(), size in 1usize..=8) {
        let net = gallery::build_random_dag(size, 4, seed).unwrap();
        let d = validate(&net);
        prop_assert!(d.is_valid_unitary_network());
        let TopoResult::Order(o) = topological_sort(&net) else { panic!("cycle") };
        prop_assert_eq!(o.len(), net.vertices.len());
        let pos = |id: &str| o.iter().position(|x| x == id).unwrap();
        for e in &net.edges {
            prop_assert!(pos(&e.from) < pos(&e.to));
        }
    }

    #[test]
    fn every_leg_bound_once(seed in any::<u64>(), size in 1usize..=8) {
        let net = gallery::build_random_dag(size, 4, seed).unwrap();
        let mut seen = std::collections::HashMap::new();
        for e in &net.edges {
            *seen.entry((e.from.clone(), e.from_leg.clone())).or_insert(0) += 1;
            *seen.entry((e.to.clone(), e.to_leg.clone())).or_insert(0) += 1;
        }
        for x in net.sources.iter().chain(&net.sinks) {
            *seen.entry((x.vertex.clone(), x.leg.clone())).or_insert(0) += 1;
        }
        let legs: usize = net.vertices.iter().map(|v| v.tensor.legs().len()).sum();
        prop_assert_eq!(seen.len(), legs);
        prop_assert!(seen.values().all(|&c| c == 1));
    }
}
