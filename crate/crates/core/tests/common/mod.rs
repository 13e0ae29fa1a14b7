#![allow(dead_code)]

use causalkit::{CausalGraph, DiscreteDataset, GraphDoc};
use serde::de::DeserializeOwned;
use std::path::PathBuf;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn load<T: DeserializeOwned>(rel: &str) -> T {
    let text = std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn kidney() -> DiscreteDataset {
    DiscreteDataset::read_csv_path(&fixture("data/kidney.csv"), b',').unwrap()
}

pub const NAMES: [&str; 5] = ["A", "B", "C", "D", "E"];

/// Every DAG on `n` nodes whose edges respect the order A < B < ...; bit `k`
/// of `mask` switches on the k-th pair in row-major order. Every unlabeled DAG
/// shape appears at least once.
pub fn ordered_dags(n: usize) -> Vec<(usize, Vec<(usize, usize)>)> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0..1u32 << pairs.len())
        .map(|mask| (n, pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &p)| p).collect()))
        .collect()
}

pub fn build(n: usize, edges: &[(usize, usize)]) -> CausalGraph {
    let e: Vec<(&str, &str)> = edges.iter().map(|&(a, b)| (NAMES[a], NAMES[b])).collect();
    CausalGraph::new(&GraphDoc::observed(&NAMES[..n], &e)).unwrap()
}

fn descendants(n: usize, edges: &[(usize, usize)], v: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        if seen[u] {
            continue;
        }
        seen[u] = true;
        stack.extend(edges.iter().filter(|e| e.0 == u).map(|e| e.1));
    }
    seen
}

/// Enumerates simple paths and applies the blocking rules node by node.
pub fn brute_d_separated(n: usize, edges: &[(usize, usize)], x: usize, y: usize, z: &[usize]) -> bool {
    let in_z = |v: usize| z.contains(&v);
    let arrow_into = |from: usize, to: usize| edges.contains(&(from, to));
    let mut paths = Vec::new();
    let mut path = vec![x];
    fn walk(n: usize, edges: &[(usize, usize)], y: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if last == y {
            out.push(path.clone());
            return;
        }
        for v in 0..n {
            let adj = edges.contains(&(last, v)) || edges.contains(&(v, last));
            if adj && !path.contains(&v) {
                path.push(v);
                walk(n, edges, y, path, out);
                path.pop();
            }
        }
    }
    walk(n, edges, y, &mut path, &mut paths);
    paths.iter().all(|p| {
        p.windows(3).any(|w| {
            let (a, m, b) = (w[0], w[1], w[2]);
            if arrow_into(a, m) && arrow_into(b, m) {
                let d = descendants(n, edges, m);
                !(0..n).any(|v| d[v] && in_z(v))
            } else {
                in_z(m)
            }
        })
    })
}
