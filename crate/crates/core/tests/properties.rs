mod common;

use causalkit::bandits::{self, BanditEnv, BetaPosterior, Policy, SimConfig};
use causalkit::discovery::{self, BicScorer, ChiSquareOracle, DSeparationOracle, Pattern, Skeleton};
use causalkit::estimation;
use causalkit::transport::{self, StratumEffects};
use causalkit::{Assignment, CausalGraph, Column, DiscreteDataset, DiscreteScm, ProbTable};
use common::{build, NAMES};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

/// Builds a dataset whose every (z, x, y) cell holds at least one row.
fn positive_dataset(zc: usize, extra: &[(u32, u32, u32)]) -> DiscreteDataset {
    let zs: Vec<String> = (0..zc).map(|i| format!("z{i}")).collect();
    let zs: Vec<&str> = zs.iter().map(String::as_str).collect();
    let mut ds = DiscreteDataset::new(vec![
        Column::new("Z", &zs),
        Column::new("X", &["a", "b"]),
        Column::new("Y", &["0", "1"]),
    ])
    .unwrap();
    for z in 0..zc as u32 {
        for x in 0..2 {
            for y in 0..2 {
                ds.push_cells(vec![Some(z), Some(x), Some(y)]).unwrap();
            }
        }
    }
    for &(z, x, y) in extra {
        ds.push_cells(vec![Some(z % zc as u32), Some(x), Some(y)]).unwrap();
    }
    ds
}

fn rows() -> impl Strategy<Value = Vec<(u32, u32, u32)>> {
    prop::collection::vec((0..4u32, 0..2u32, 0..2u32), 0..200)
}

/// Random DAG over the first `n` names, edges respecting name order.
fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=5usize).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let k = pairs.len();
        prop::collection::vec(any::<bool>(), k)
            .prop_map(move |bits| (n, pairs.iter().zip(bits).filter(|(_, b)| *b).map(|(p, _)| *p).collect()))
    })
}

fn chain_scm(p: [f64; 5]) -> DiscreteScm {
    let json = serde_json::json!({
        "nodes": [{"name": "A"}, {"name": "B"}, {"name": "C"}],
        "edges": [["A", "B"], ["B", "C"], ["A", "C"]],
        "cpts": {
            "A": {"states": ["0", "1"], "probs": [1.0 - p[0], p[0]]},
            "B": {"parents": ["A"], "states": ["0", "1"], "rows": {"A=0": [1.0 - p[1], p[1]], "A=1": [1.0 - p[2], p[2]]}},
            "C": {"parents": ["A", "B"], "states": ["0", "1"], "rows": {
                "A=0,B=0": [1.0 - p[3], p[3]], "A=0,B=1": [1.0 - p[4], p[4]],
                "A=1,B=0": [p[3], 1.0 - p[3]], "A=1,B=1": [p[4], 1.0 - p[4]]}}
        }
    });
    serde_json::from_value(json).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sum_and_ratio_adjustment_agree(zc in 1..4usize, extra in rows()) {
        let ds = positive_dataset(zc, &extra);
        for x in ["a", "b"] {
            let s = estimation::backdoor_adjust(&ds, "X", x, "Y", "1", &["Z"]).unwrap();
            let r = estimation::backdoor_adjust_ratio(&ds, "X", x, "Y", "1", &["Z"]).unwrap();
            prop_assert!((s - r).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn ace_is_antisymmetric(zc in 1..4usize, extra in rows()) {
        let ds = positive_dataset(zc, &extra);
        let fwd = estimation::compute_ace(&ds, "X", "a", "b", "Y", "1", &["Z"]).unwrap();
        let back = estimation::compute_ace(&ds, "X", "b", "a", "Y", "1", &["Z"]).unwrap();
        prop_assert!((fwd + back).abs() <= 1e-12);
    }

    #[test]
    fn ci_test_is_symmetric(zc in 1..4usize, extra in rows()) {
        let ds = positive_dataset(zc, &extra);
        let z: &[&str] = if zc > 1 { &["Z"] } else { &[] };
        match (discovery::ci_test(&ds, "X", "Y", z, 0.05), discovery::ci_test(&ds, "Y", "X", z, 0.05)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.statistic, b.statistic);
                prop_assert_eq!(a.p_value, b.p_value);
                prop_assert_eq!(a.independent, b.independent);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "symmetric calls disagree on success"),
        }
    }

    #[test]
    fn marginals_of_exact_joint_are_consistent(p in prop::array::uniform5(0.01..0.99f64)) {
        let m = chain_scm(p);
        let full = m.exact_joint(&["A", "B", "C"]).unwrap();
        let ab = m.exact_joint(&["A", "B"]).unwrap();
        prop_assert!(full.marginalize("C").unwrap().l1_distance(&ab) <= 1e-12);
        let pa = m.probability(&"A=1".parse::<Assignment>().unwrap()).unwrap();
        prop_assert!((pa - p[0]).abs() <= 1e-12);
        prop_assert!((full.total() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn intervention_on_a_root_matches_conditioning(p in prop::array::uniform5(0.01..0.99f64)) {
        let m = chain_scm(p);
        let c1: Assignment = "C=1".parse().unwrap();
        for a in ["A=0", "A=1"] {
            let a: Assignment = a.parse().unwrap();
            let done = m.interventional(&c1, &a, &Assignment::default()).unwrap();
            let seen = m.query_conditional(&c1, &a).unwrap();
            prop_assert!((done - seen).abs() <= 1e-12);
        }
    }

    #[test]
    fn d_separation_is_symmetric((n, edges) in dag(), x in 0..5usize, y in 0..5usize, zmask in 0..32u32) {
        let (x, y) = (x % n, y % n);
        prop_assume!(x != y);
        let g = build(n, &edges);
        let z: Vec<&str> = (0..n).filter(|&v| v != x && v != y && zmask >> v & 1 == 1).map(|v| NAMES[v]).collect();
        prop_assert_eq!(
            g.is_d_separated(&[NAMES[x]], &[NAMES[y]], &z).unwrap(),
            g.is_d_separated(&[NAMES[y]], &[NAMES[x]], &z).unwrap()
        );
    }

    #[test]
    fn graph_and_pattern_json_round_trip((n, edges) in dag()) {
        let g = build(n, &edges);
        let back: CausalGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(&back, &g);
        let (_, pat) = discovery::pc(&DSeparationOracle { graph: &g }, 3).unwrap();
        let back: Pattern = serde_json::from_str(&serde_json::to_string(&pat).unwrap()).unwrap();
        prop_assert_eq!(back, pat);
    }

    #[test]
    fn oracle_pc_matches_the_true_pattern((n, edges) in dag()) {
        let g = build(n, &edges);
        let (_, pat) = discovery::pc(&DSeparationOracle { graph: &g }, 3).unwrap();
        let truth = Pattern::of_dag(&g);
        prop_assert_eq!(pat.skeleton(), truth.skeleton());
        prop_assert_eq!(pat.v_structures(), truth.v_structures());
    }

    #[test]
    fn orientation_never_creates_a_cycle(
        bits in prop::collection::vec(any::<bool>(), 10),
        seps in prop::collection::vec(prop::collection::vec(any::<bool>(), 5), 10),
    ) {
        let nodes: Vec<String> = NAMES.iter().map(|s| s.to_string()).collect();
        let mut edges = BTreeSet::new();
        let mut sepsets = BTreeMap::new();
        let mut k = 0;
        for i in 0..5 {
            for j in i + 1..5 {
                if bits[k] {
                    edges.insert((nodes[i].clone(), nodes[j].clone()));
                } else {
                    let s: Vec<String> = (0..5).filter(|&v| v != i && v != j && seps[k][v]).map(|v| nodes[v].clone()).collect();
                    sepsets.insert(format!("{}|{}", nodes[i], nodes[j]), s);
                }
                k += 1;
            }
        }
        let pat = discovery::orient(&Skeleton { nodes: nodes.clone(), edges: edges.clone(), sepsets });
        let directed: Vec<(&str, &str)> = pat.directed.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let names: Vec<&str> = nodes.iter().map(String::as_str).collect();
        prop_assert!(CausalGraph::new(&causalkit::GraphDoc::observed(&names, &directed)).is_ok());
        prop_assert_eq!(pat.skeleton(), edges);
    }

    #[test]
    fn bic_decomposes_over_families(extra in rows(), parents in prop::collection::vec(0..3usize, 3)) {
        let ds = positive_dataset(3, &extra);
        let mut s = BicScorer::new(&ds);
        // each node takes at most one earlier node as parent, keeping the graph acyclic
        let pa: Vec<Vec<usize>> = (0..3).map(|c| if parents[c] < c { vec![parents[c]] } else { vec![] }).collect();
        let total = s.score(&pa);
        let parts: f64 = (0..3).map(|c| s.family(c, &pa[c])).sum();
        prop_assert!((total - parts).abs() <= 1e-9);
    }

    #[test]
    fn posterior_counts_track_rewards(rewards in prop::collection::vec(0..2u8, 0..100), a0 in 0.5..3.0f64, b0 in 0.5..3.0f64) {
        let post = rewards.iter().fold(BetaPosterior::new(a0, b0).unwrap(), |p, &r| p.update(r));
        let wins = rewards.iter().filter(|&&r| r == 1).count() as f64;
        prop_assert!((post.alpha - a0 - wins).abs() <= 1e-12);
        prop_assert!((post.beta - b0 - (rewards.len() as f64 - wins)).abs() <= 1e-12);
    }

    #[test]
    fn table_json_round_trip(p in prop::array::uniform5(0.01..0.99f64)) {
        let t = chain_scm(p).exact_joint(&["A", "C"]).unwrap();
        let back: ProbTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        prop_assert_eq!(back, t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transport_is_linear_and_bounded(
        cells in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.01..1.0f64), 1..8),
        c in 0.0..1.0f64,
    ) {
        let total: f64 = cells.iter().map(|t| t.2).sum();
        let weights: BTreeMap<String, f64> = cells.iter().enumerate().map(|(i, t)| (format!("s{i}"), t.2 / total)).collect();
        let effects = |f: &dyn Fn(&(f64, f64, f64)) -> f64| -> BTreeMap<String, f64> {
            cells.iter().enumerate().map(|(i, t)| (format!("s{i}"), f(t))).collect()
        };
        let est = |e: BTreeMap<String, f64>| {
            transport::transport_estimate(&StratumEffects { stratum: "S".into(), effects: e, weights: weights.clone() }).unwrap()
        };
        let (e1, e2) = (est(effects(&|t| t.0)), est(effects(&|t| t.1)));
        let mixed = est(effects(&|t| c * t.0 + (1.0 - c) * t.1));
        prop_assert!((mixed - (c * e1 + (1.0 - c) * e2)).abs() <= 1e-9);
        let lo = cells.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let hi = cells.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(e1 >= lo - 1e-12 && e1 <= hi + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn cumulative_regret_never_decreases(seed in any::<u64>(), horizon in 1..400usize, which in 0..4usize) {
        let env = BanditEnv::unconfounded(&[0.2, 0.5, 0.45]).unwrap();
        let policy = [Policy::Thompson, Policy::Uniform, Policy::Greedy, Policy::Epsilon { epsilon: 0.1 }][which];
        let run = bandits::simulate(&env, &SimConfig::new(policy, horizon), seed).unwrap();
        prop_assert_eq!(run.rounds.len(), horizon);
        prop_assert!(run.rounds.windows(2).all(|w| w[1].cum_regret >= w[0].cum_regret - 1e-12));
        prop_assert!(run.rounds.iter().all(|r| r.regret >= -1e-12));
    }

    #[test]
    fn pc_ignores_column_order(seed in 0..1000u64) {
        let m: DiscreteScm = common::load("scm/collider_chain.json");
        let ds = m.sample(2_000, seed, false).unwrap();
        let shuffled = ds.select(&["W", "Z", "Y", "X"]).unwrap();
        let (_, a) = discovery::pc(&ChiSquareOracle { data: &ds, alpha: 0.05 }, 3).unwrap();
        let (_, b) = discovery::pc(&ChiSquareOracle { data: &shuffled, alpha: 0.05 }, 3).unwrap();
        prop_assert_eq!(a.directed, b.directed);
        prop_assert_eq!(a.undirected, b.undirected);
    }
}
