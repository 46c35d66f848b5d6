//! Structural properties of the disagreement set and its decompositions,
//! over randomly generated matching pairs.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use apdesign::decompose::{decompose_one_to_one, ComponentKind, EdgeLabel};
use apdesign::many_to_one::{
    build_aux_digraph, build_flow_network, decompose_many_to_one, edmonds_karp,
    validate_decomposition, FlowArc,
};
use apdesign::matching::{build_disagreement, AgentId, DisagreementSet, MatchEdge, Matching};
use apdesign::sim::random_many_to_one;

fn id(v: u32) -> AgentId {
    AgentId::new(v).unwrap()
}

/// Pair of (possibly partial) one-to-one matchings on the same population.
fn matching_pair() -> impl Strategy<Value = (Matching, Matching)> {
    (1usize..=8, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let population: BTreeSet<AgentId> = (1..=2 * n as u32).map(id).collect();
        let draw = |rng: &mut ChaCha12Rng| {
            let mut order: Vec<u32> = (1..=2 * n as u32).collect();
            order.shuffle(rng);
            let keep = rng.gen_range(0..=n);
            let edges: Vec<MatchEdge> = order[..2 * keep]
                .chunks(2)
                .map(|c| MatchEdge::one_to_one(id(c[0]), id(c[1])).unwrap())
                .collect();
            Matching::one_to_one(edges, population.clone()).unwrap()
        };
        (draw(&mut rng), draw(&mut rng))
    })
}

proptest! {
    #[test]
    fn disagreement_partitions_each_plan((mt, mc) in matching_pair()) {
        let d = build_disagreement(&mt, &mc).unwrap();
        let shared: BTreeSet<MatchEdge> = mt.edges().intersection(mc.edges()).copied().collect();
        let mut t_union: BTreeSet<MatchEdge> = d.t_edges().clone();
        t_union.extend(shared.iter().copied());
        prop_assert_eq!(&t_union, mt.edges());
        let mut c_union: BTreeSet<MatchEdge> = d.c_edges().clone();
        c_union.extend(shared.iter().copied());
        prop_assert_eq!(&c_union, mc.edges());
    }

    #[test]
    fn swapping_plans_swaps_labels((mt, mc) in matching_pair()) {
        let d = build_disagreement(&mt, &mc).unwrap();
        let swapped = build_disagreement(&mc, &mt).unwrap();
        prop_assert_eq!(d.t_edges(), swapped.c_edges());
        prop_assert_eq!(d.c_edges(), swapped.t_edges());
    }

    #[test]
    fn every_agent_has_degree_at_most_two((mt, mc) in matching_pair()) {
        let d = build_disagreement(&mt, &mc).unwrap();
        let mut t_deg: BTreeMap<AgentId, usize> = BTreeMap::new();
        let mut c_deg: BTreeMap<AgentId, usize> = BTreeMap::new();
        for e in d.t_edges() {
            *t_deg.entry(e.a).or_insert(0) += 1;
            *t_deg.entry(e.b).or_insert(0) += 1;
        }
        for e in d.c_edges() {
            *c_deg.entry(e.a).or_insert(0) += 1;
            *c_deg.entry(e.b).or_insert(0) += 1;
        }
        prop_assert!(t_deg.values().all(|&d| d <= 1));
        prop_assert!(c_deg.values().all(|&d| d <= 1));
    }

    #[test]
    fn decomposition_partitions_the_disagreement_set((mt, mc) in matching_pair()) {
        let d = build_disagreement(&mt, &mc).unwrap();
        let comps = decompose_one_to_one(&d).unwrap();
        let total: usize = comps.iter().map(|c| c.k()).sum();
        prop_assert_eq!(total, d.len());
        let mut seen: BTreeSet<(MatchEdge, EdgeLabel)> = BTreeSet::new();
        for comp in &comps {
            for (u, v, l) in comp.edges() {
                let e = MatchEdge::one_to_one(u, v).unwrap();
                prop_assert!(seen.insert((e, l)), "edge covered twice");
                match l {
                    EdgeLabel::T => prop_assert!(d.t_edges().contains(&e)),
                    EdgeLabel::C => prop_assert!(d.c_edges().contains(&e)),
                }
            }
        }
        prop_assert_eq!(seen.len(), d.len());
    }

    #[test]
    fn decomposition_shape_invariants((mt, mc) in matching_pair()) {
        let d = build_disagreement(&mt, &mc).unwrap();
        let mut degree: BTreeMap<AgentId, usize> = BTreeMap::new();
        for e in d.t_edges().iter().chain(d.c_edges()) {
            *degree.entry(e.a).or_insert(0) += 1;
            *degree.entry(e.b).or_insert(0) += 1;
        }
        for comp in decompose_one_to_one(&d).unwrap() {
            let t = comp.labels.iter().filter(|&&l| l == EdgeLabel::T).count();
            let c = comp.k() - t;
            match comp.kind {
                ComponentKind::Cycle => {
                    prop_assert!(comp.k() >= 4 && comp.k() % 2 == 0);
                    prop_assert_eq!(t, c);
                }
                ComponentKind::Path => {
                    prop_assert!(t.abs_diff(c) <= 1);
                    let first = comp.vertices[0];
                    let last = comp.vertices[comp.k()];
                    prop_assert_eq!(degree[&first], 1);
                    prop_assert_eq!(degree[&last], 1);
                    // Canonical start is the smaller endpoint.
                    prop_assert!(first < last);
                }
            }
        }
    }

    #[test]
    fn decomposition_is_input_order_independent(
        (mt, mc) in matching_pair(),
        seed in any::<u64>(),
    ) {
        let d = build_disagreement(&mt, &mc).unwrap();
        let baseline = decompose_one_to_one(&d).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut t: Vec<MatchEdge> = d.t_edges().iter().copied().collect();
        let mut c: Vec<MatchEdge> = d.c_edges().iter().copied().collect();
        t.shuffle(&mut rng);
        c.shuffle(&mut rng);
        let reshuffled = DisagreementSet::new(t, c).unwrap();
        prop_assert_eq!(decompose_one_to_one(&reshuffled).unwrap(), baseline);
    }
}

/// Independent max-flow oracle: plain Ford-Fulkerson with full reverse
/// residual edges, sharing nothing with the BFS implementation under test.
fn ford_fulkerson_value(node_count: usize, source: usize, sink: usize, arcs: &[FlowArc]) -> u32 {
    let mut capacity = vec![vec![0i64; node_count]; node_count];
    for a in arcs {
        capacity[a.from][a.to] += a.capacity as i64;
    }
    fn dfs(
        u: usize,
        sink: usize,
        pushed: i64,
        capacity: &mut Vec<Vec<i64>>,
        visited: &mut Vec<bool>,
    ) -> i64 {
        if u == sink {
            return pushed;
        }
        visited[u] = true;
        for v in 0..capacity.len() {
            if !visited[v] && capacity[u][v] > 0 {
                let flow = dfs(v, sink, pushed.min(capacity[u][v]), capacity, visited);
                if flow > 0 {
                    capacity[u][v] -= flow;
                    capacity[v][u] += flow;
                    return flow;
                }
            }
        }
        0
    }
    let mut total = 0i64;
    loop {
        let mut visited = vec![false; node_count];
        let pushed = dfs(source, sink, i64::MAX, &mut capacity, &mut visited);
        if pushed == 0 {
            break;
        }
        total += pushed;
    }
    total as u32
}

#[test]
fn many_to_one_random_instances_are_feasible() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xfeed);
    for trial in 0..60 {
        let suppliers = rng.gen_range(1..=12);
        let demands = rng.gen_range(1..=40);
        let capacity = rng.gen_range(1..=4);
        let (mt, mc) = random_many_to_one(suppliers, demands, capacity, &mut rng).unwrap();
        let d = build_disagreement(&mt, &mc).unwrap();

        // Degree accounting on the auxiliary digraph.
        let aux = build_aux_digraph(&d).unwrap();
        let mut t_count: BTreeMap<AgentId, usize> = BTreeMap::new();
        let mut c_count: BTreeMap<AgentId, usize> = BTreeMap::new();
        for e in d.t_edges() {
            *t_count.entry(e.a).or_insert(0) += 1;
        }
        for e in d.c_edges() {
            *c_count.entry(e.a).or_insert(0) += 1;
        }
        for v in aux.vertices() {
            if let apdesign::many_to_one::AuxVertex::Supplier(s) = v {
                assert_eq!(aux.out_degree(v), t_count.get(&s).copied().unwrap_or(0));
                assert_eq!(aux.in_degree(v), c_count.get(&s).copied().unwrap_or(0));
            }
        }

        // Flow value matches both the imbalance and the independent oracle.
        let net = build_flow_network(&aux);
        let paths = edmonds_karp(&net);
        assert_eq!(paths.len() as u32, net.c_prime, "trial {trial}");
        let oracle = ford_fulkerson_value(net.node_count, net.source, net.sink, &net.arcs);
        assert_eq!(oracle, net.c_prime, "trial {trial}");

        // Full decomposition passes every feasibility condition.
        let comps = decompose_many_to_one(&d).unwrap();
        let total: usize = comps.iter().map(|c| c.k()).sum();
        assert_eq!(total, d.len(), "trial {trial}");
        let report = validate_decomposition(&d, &comps, capacity);
        assert!(report.pass, "trial {trial}: {report:?}");
    }
}

#[test]
fn many_to_one_decomposition_is_deterministic() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let (mt, mc) = random_many_to_one(8, 30, 3, &mut rng).unwrap();
    let d = build_disagreement(&mt, &mc).unwrap();
    let a = decompose_many_to_one(&d).unwrap();
    let b = decompose_many_to_one(&d).unwrap();
    assert_eq!(a, b);
}
