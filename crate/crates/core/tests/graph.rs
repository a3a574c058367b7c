mod common;

use noir_core::graph::{ConnectivityMode, GraphError, GraphSpec, GraphViolation, NoirGraph};
use proptest::prelude::*;

use common::closure;

/// Boundary-valid networks with arbitrary interior wiring, so the path
/// conditions hold or fail at random.
fn network(max: usize) -> impl Strategy<Value = GraphSpec> {
    (1..=3usize, 1..=3usize, 1..=max).prop_flat_map(|(inlets, outlets, interior)| {
        let first = inlets + outlets + 1;
        let last = inlets + outlets + interior;
        (
            proptest::collection::vec(first..=last, inlets),
            proptest::collection::vec(first..=last, outlets),
            proptest::collection::btree_set((first..=last, first..=last), 0..=2 * interior),
        )
            .prop_map(move |(feeds, drains, inner)| {
                let mut edges: Vec<[usize; 2]> = feeds.iter().enumerate().map(|(j, &t)| [j + 1, t]).collect();
                edges.extend(drains.iter().enumerate().map(|(o, &s)| [s, inlets + 1 + o]));
                edges.extend(inner.into_iter().filter(|(a, b)| a != b).map(|(a, b)| [a, b]));
                GraphSpec { inlets, outlets, interior, edges }
            })
    })
}

#[test]
fn violations_are_reported_together() {
    let spec = GraphSpec { inlets: 1, outlets: 1, interior: 1, edges: vec![[1, 3], [3, 3], [3, 9], [3, 2], [3, 2]] };
    let GraphError::Rejected(v) = NoirGraph::build(&spec).unwrap_err() else { panic!() };
    assert!(v.contains(&GraphViolation::SelfLoop { node: 3 }));
    assert!(v.contains(&GraphViolation::InvalidIndex { edge: (3, 9), node: 9 }));
    assert!(v.contains(&GraphViolation::DuplicateEdge { from: 3, to: 2 }));
}

#[test]
fn some_inlet_mode_is_weaker() {
    // Inlet 1 feeds road 4, inlet 2 feeds road 5 which drains through road 4.
    let g = NoirGraph::build(&GraphSpec {
        inlets: 2,
        outlets: 1,
        interior: 2,
        edges: vec![[1, 4], [2, 5], [4, 3], [5, 4]],
    })
    .unwrap();
    let strict = g.check_connectivity(ConnectivityMode::EveryInlet);
    let weak = g.check_connectivity(ConnectivityMode::SomeInlet);
    assert_eq!(strict.unreached, vec![(1, 5)]);
    assert!(!strict.is_satisfied());
    assert!(weak.is_satisfied());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reachability_matches_closure(spec in network(7)) {
        let g = NoirGraph::build(&spec).unwrap();
        let c = closure(&g);
        for v in 1..=g.len() {
            let expected: Vec<usize> = (1..=g.len()).filter(|&w| c[v][w]).collect();
            prop_assert_eq!(g.reachable_from(v).unwrap().into_iter().collect::<Vec<_>>(), expected);
        }
        let report = g.check_connectivity(ConnectivityMode::EveryInlet);
        let unreached: Vec<(usize, usize)> = g
            .interior()
            .flat_map(|i| g.inlets().map(move |j| (j, i)))
            .filter(|&(j, i)| !c[j][i])
            .collect();
        let stranded: Vec<(usize, usize)> = g
            .interior()
            .flat_map(|i| g.outlets().map(move |o| (i, o)))
            .filter(|&(i, o)| !c[i][o])
            .collect();
        prop_assert_eq!(report.unreached, unreached);
        prop_assert_eq!(report.stranded, stranded);
    }

    #[test]
    fn spec_round_trip(spec in network(7)) {
        let g = NoirGraph::build(&spec).unwrap();
        let again = NoirGraph::build(&g.spec()).unwrap();
        prop_assert_eq!(&again, &g);
        let text = toml::to_string(&g.spec()).unwrap();
        prop_assert_eq!(toml::from_str::<GraphSpec>(&text).unwrap(), g.spec());
    }

    #[test]
    fn neighbor_sets_mirror_edges(spec in network(7)) {
        let g = NoirGraph::build(&spec).unwrap();
        for v in 1..=g.len() {
            for w in g.out_neighbors(v).unwrap() {
                prop_assert!(g.has_edge(v, w));
                prop_assert!(g.in_neighbors(w).unwrap().contains(&v));
            }
        }
        prop_assert_eq!(g.edges().count(), spec.edges.len());
    }
}
