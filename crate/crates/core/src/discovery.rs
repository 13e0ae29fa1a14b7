//! Structure search: PC (skeleton, v-structures, Meek rule 1) on top of a
//! pluggable independence oracle, and greedy hill climbing on the BIC score.

use crate::data::{DataError, DiscreteDataset};
use crate::graph::{combinations, CausalGraph, GraphDoc, GraphError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_MAX_COND_SIZE: usize = 3;
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("InsufficientData: {0}")]
    InsufficientData(String),
    #[error("TooFewVariables: need at least 2, got {0}")]
    TooFewVariables(usize),
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = DiscoveryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub x: String,
    pub y: String,
    pub z: Vec<String>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub independent: bool,
}

/// Pearson chi-square test of `x ⫫ y | z`: one statistic per observed z-stratum,
/// summed together with the degrees of freedom. Rows or columns with zero
/// margin inside a stratum are dropped; any remaining cell with expected count
/// below [`MIN_EXPECTED_COUNT`] is an error.
pub fn ci_test(ds: &DiscreteDataset, x: &str, y: &str, z: &[&str], alpha: f64) -> Result<CiResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DiscoveryError::InvalidParameter(format!("alpha {alpha} outside [0,1]")));
    }
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    let mut zs: Vec<&str> = z.to_vec();
    zs.sort();
    let ac = ds.index_of(a)?;
    let bc = ds.index_of(b)?;
    let zc: Vec<usize> = zs.iter().map(|v| ds.index_of(v)).collect::<Result<_, _>>()?;
    let (ra, rb) = (ds.column(ac).cardinality(), ds.column(bc).cardinality());
    let mut tables: BTreeMap<Vec<u32>, Vec<f64>> = BTreeMap::new();
    let mut cols = vec![ac, bc];
    cols.extend(&zc);
    for (key, n) in ds.counts(&cols) {
        let t = tables.entry(key[2..].to_vec()).or_insert_with(|| vec![0.0; ra * rb]);
        t[key[0] as usize * rb + key[1] as usize] += n as f64;
    }
    if tables.is_empty() {
        return Err(DiscoveryError::InsufficientData(format!("no complete rows for {a}, {b} given {zs:?}")));
    }
    let mut statistic = 0.0;
    let mut df = 0usize;
    for (key, t) in &tables {
        let row: Vec<f64> = (0..ra).map(|i| (0..rb).map(|j| t[i * rb + j]).sum()).collect();
        let col: Vec<f64> = (0..rb).map(|j| (0..ra).map(|i| t[i * rb + j]).sum()).collect();
        let n: f64 = row.iter().sum();
        let live_r: Vec<usize> = (0..ra).filter(|&i| row[i] > 0.0).collect();
        let live_c: Vec<usize> = (0..rb).filter(|&j| col[j] > 0.0).collect();
        for &i in &live_r {
            for &j in &live_c {
                let e = row[i] * col[j] / n;
                if e < MIN_EXPECTED_COUNT && live_r.len() > 1 && live_c.len() > 1 {
                    let label: Vec<String> = zc
                        .iter()
                        .zip(key)
                        .map(|(&c, &s)| format!("{}={}", ds.column(c).name, ds.column(c).states[s as usize]))
                        .collect();
                    return Err(DiscoveryError::InsufficientData(format!(
                        "expected count {e:.2} below {MIN_EXPECTED_COUNT} in stratum [{}] of {a}, {b}",
                        label.join(",")
                    )));
                }
                let o = t[i * rb + j];
                statistic += (o - e) * (o - e) / e;
            }
        }
        df += (live_r.len().saturating_sub(1)) * (live_c.len().saturating_sub(1));
    }
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).expect("df > 0").sf(statistic).clamp(0.0, 1.0)
    };
    Ok(CiResult {
        x: a.to_string(),
        y: b.to_string(),
        z: zs.iter().map(|s| s.to_string()).collect(),
        statistic,
        df,
        p_value,
        independent: p_value > alpha,
    })
}

/// Answers independence queries for PC.
pub trait IndependenceOracle: Sync {
    fn variables(&self) -> Vec<String>;
    fn independent(&self, x: &str, y: &str, z: &[&str]) -> Result<bool>;
}

pub struct ChiSquareOracle<'a> {
    pub data: &'a DiscreteDataset,
    pub alpha: f64,
}

impl IndependenceOracle for ChiSquareOracle<'_> {
    fn variables(&self) -> Vec<String> {
        self.data.column_names().map(str::to_string).collect()
    }

    fn independent(&self, x: &str, y: &str, z: &[&str]) -> Result<bool> {
        Ok(ci_test(self.data, x, y, z, self.alpha)?.independent)
    }
}

/// d-separation in a known graph, restricted to its observed nodes.
pub struct DSeparationOracle<'a> {
    pub graph: &'a CausalGraph,
}

impl IndependenceOracle for DSeparationOracle<'_> {
    fn variables(&self) -> Vec<String> {
        self.graph.nodes_of_kind(crate::graph::NodeKind::Observed).iter().map(|s| s.to_string()).collect()
    }

    fn independent(&self, x: &str, y: &str, z: &[&str]) -> Result<bool> {
        Ok(self.graph.is_d_separated(&[x], &[y], z)?)
    }
}

type Edge = (String, String);

fn edge(a: &str, b: &str) -> Edge {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub nodes: Vec<String>,
    pub edges: BTreeSet<Edge>,
    /// Separating set per removed pair, keyed by the sorted pair.
    pub sepsets: BTreeMap<String, Vec<String>>,
}

fn pair_key(a: &str, b: &str) -> String {
    let (a, b) = edge(a, b);
    format!("{a}|{b}")
}

impl Skeleton {
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&edge(a, b))
    }

    pub fn neighbors(&self, a: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter_map(|(p, q)| if p == a { Some(q.as_str()) } else if q == a { Some(p.as_str()) } else { None })
            .collect()
    }

    pub fn sepset(&self, a: &str, b: &str) -> Option<&[String]> {
        self.sepsets.get(&pair_key(a, b)).map(Vec::as_slice)
    }
}

/// PC-stable skeleton: within a level every test uses the adjacencies frozen at
/// the start of the level, so the result does not depend on test order.
pub fn pc_skeleton(oracle: &dyn IndependenceOracle, max_cond_size: usize) -> Result<Skeleton> {
    let mut nodes = oracle.variables();
    nodes.sort();
    if nodes.len() < 2 {
        return Err(DiscoveryError::TooFewVariables(nodes.len()));
    }
    let mut adj: BTreeMap<String, BTreeSet<String>> = nodes
        .iter()
        .map(|n| (n.clone(), nodes.iter().filter(|m| *m != n).cloned().collect()))
        .collect();
    let mut sepsets = BTreeMap::new();
    for level in 0..=max_cond_size {
        let frozen = adj.clone();
        let edges: Vec<Edge> = frozen
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (a.clone(), b.clone())))
            .collect();
        let testable = edges.iter().any(|(a, b)| frozen[a].len() > level || frozen[b].len() > level);
        if !testable {
            break;
        }
        let results: Vec<Option<(Edge, Vec<String>)>> = edges
            .par_iter()
            .map(|(a, b)| -> Result<Option<(Edge, Vec<String>)>> {
                for (from, other) in [(a, b), (b, a)] {
                    let cands: Vec<&str> = frozen[from].iter().filter(|n| *n != other).map(String::as_str).collect();
                    if cands.len() < level {
                        continue;
                    }
                    for idx in combinations(cands.len(), level) {
                        let s: Vec<&str> = idx.iter().map(|&i| cands[i]).collect();
                        if oracle.independent(a, b, &s)? {
                            return Ok(Some(((a.clone(), b.clone()), s.iter().map(|v| v.to_string()).collect())));
                        }
                    }
                }
                Ok(None)
            })
            .collect::<Result<_>>()?;
        for (e, s) in results.into_iter().flatten() {
            adj.get_mut(&e.0).unwrap().remove(&e.1);
            adj.get_mut(&e.1).unwrap().remove(&e.0);
            sepsets.insert(pair_key(&e.0, &e.1), s);
        }
    }
    let edges = adj
        .iter()
        .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (a.clone(), b.clone())))
        .collect();
    Ok(Skeleton { nodes, edges, sepsets })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Pattern {
    #[serde(default)]
    pub nodes: Vec<String>,
    pub undirected: BTreeSet<Edge>,
    pub directed: BTreeSet<Edge>,
    /// Edges two v-structures wanted oriented in opposite directions.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub conflicts: BTreeSet<Edge>,
}

impl Pattern {
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        let e = edge(a, b);
        self.undirected.contains(&e)
            || self.directed.contains(&(a.to_string(), b.to_string()))
            || self.directed.contains(&(b.to_string(), a.to_string()))
    }

    pub fn skeleton(&self) -> BTreeSet<Edge> {
        self.undirected.iter().cloned().chain(self.directed.iter().map(|(a, b)| edge(a, b))).collect()
    }

    /// Directed colliders `a -> c <- b` with `a`, `b` non-adjacent, as `(a, c, b)` with `a < b`.
    pub fn v_structures(&self) -> BTreeSet<(String, String, String)> {
        let mut out = BTreeSet::new();
        for (a, c) in &self.directed {
            for (b, c2) in &self.directed {
                if c == c2 && a < b && !self.adjacent(a, b) {
                    out.insert((a.clone(), c.clone(), b.clone()));
                }
            }
        }
        out
    }

    fn has_directed_path(&self, from: &str, to: &str) -> bool {
        let mut stack = vec![from.to_string()];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n.clone()) {
                stack.extend(self.directed.iter().filter(|(p, _)| *p == n).map(|(_, c)| c.clone()));
            }
        }
        false
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph pattern {\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  \"{n}\";");
        }
        for (a, b) in &self.directed {
            let _ = writeln!(s, "  \"{a}\" -> \"{b}\";");
        }
        for (a, b) in &self.undirected {
            let _ = writeln!(s, "  \"{a}\" -> \"{b}\" [dir=none];");
        }
        s.push_str("}\n");
        s
    }

    /// Skeleton plus v-structures of a DAG, every other edge left undirected.
    pub fn of_dag(g: &CausalGraph) -> Pattern {
        let directed: BTreeSet<Edge> = g.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let full = Pattern { nodes: g.names().map(str::to_string).collect(), undirected: BTreeSet::new(), directed, conflicts: BTreeSet::new() };
        let in_v: BTreeSet<Edge> = full
            .v_structures()
            .into_iter()
            .flat_map(|(a, c, b)| [(a, c.clone()), (b, c)])
            .collect();
        let undirected = full.directed.iter().filter(|e| !in_v.contains(*e)).map(|(a, b)| edge(a, b)).collect();
        Pattern { directed: in_v, undirected, ..full }
    }
}

/// Orients unshielded colliders, then applies Meek rule 1 until nothing changes.
pub fn orient(skel: &Skeleton) -> Pattern {
    let mut demands: BTreeMap<Edge, BTreeSet<Edge>> = BTreeMap::new();
    for z in &skel.nodes {
        let ns = skel.neighbors(z);
        for i in 0..ns.len() {
            for j in i + 1..ns.len() {
                let (x, y) = (ns[i], ns[j]);
                if skel.adjacent(x, y) {
                    continue;
                }
                let separated_by_z = skel.sepset(x, y).is_some_and(|s| s.iter().any(|v| v == z));
                if !separated_by_z {
                    for a in [x, y] {
                        demands.entry(edge(a, z)).or_default().insert((a.to_string(), z.clone()));
                    }
                }
            }
        }
    }
    let mut p = Pattern { nodes: skel.nodes.clone(), ..Default::default() };
    for e in &skel.edges {
        match demands.get(e) {
            Some(d) if d.len() == 1 => {
                p.directed.insert(d.iter().next().unwrap().clone());
            }
            Some(_) => {
                p.conflicts.insert(e.clone());
                p.undirected.insert(e.clone());
            }
            None => {
                p.undirected.insert(e.clone());
            }
        }
    }
    // Drop any collider orientation that closed a cycle.
    let cyclic: Vec<Edge> = p
        .directed
        .iter()
        .filter(|(a, b)| {
            let mut without = p.clone();
            without.directed.remove(&(a.clone(), b.clone()));
            without.has_directed_path(b, a)
        })
        .cloned()
        .collect();
    for (a, b) in cyclic {
        p.directed.remove(&(a.clone(), b.clone()));
        let e = edge(&a, &b);
        p.conflicts.insert(e.clone());
        p.undirected.insert(e);
    }
    loop {
        let mut change = None;
        'search: for (a, b) in &p.directed {
            for (u, v) in &p.undirected {
                if p.conflicts.contains(&(u.clone(), v.clone())) {
                    continue;
                }
                let c = if u == b {
                    v
                } else if v == b {
                    u
                } else {
                    continue;
                };
                if c != a && !p.adjacent(a, c) && !p.has_directed_path(c, b) {
                    change = Some(((u.clone(), v.clone()), (b.clone(), c.clone())));
                    break 'search;
                }
            }
        }
        match change {
            Some((und, dir)) => {
                p.undirected.remove(&und);
                p.directed.insert(dir);
            }
            None => break,
        }
    }
    p
}

pub fn pc(oracle: &dyn IndependenceOracle, max_cond_size: usize) -> Result<(Skeleton, Pattern)> {
    let skel = pc_skeleton(oracle, max_cond_size)?;
    let pattern = orient(&skel);
    Ok((skel, pattern))
}

/// Same skeleton and same v-structures.
pub fn markov_equivalent(a: &CausalGraph, b: &CausalGraph) -> bool {
    let (pa, pb) = (Pattern::of_dag(a), Pattern::of_dag(b));
    pa.skeleton() == pb.skeleton() && pa.v_structures() == pb.v_structures()
}

/// BIC family scores over the complete rows of a dataset.
pub struct BicScorer {
    data: DiscreteDataset,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl BicScorer {
    pub fn new(ds: &DiscreteDataset) -> Self {
        let mut data = ds.clone();
        let all: Vec<usize> = (0..ds.columns().len()).collect();
        if ds.rows().iter().any(|r| r.iter().any(Option::is_none)) {
            let mut complete = DiscreteDataset::new(ds.columns().to_vec()).expect("columns already unique");
            for r in ds.rows().iter().filter(|r| all.iter().all(|&c| r[c].is_some())) {
                complete.push_cells(r.clone()).expect("row shape unchanged");
            }
            data = complete;
        }
        BicScorer { data, cache: HashMap::new() }
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// `Σ N_jk ln(N_jk / N_j) - (ln n / 2)(r - 1) q` for `child` given `parents`.
    pub fn family(&mut self, child: usize, parents: &[usize]) -> f64 {
        let mut parents = parents.to_vec();
        parents.sort_unstable();
        if let Some(&s) = self.cache.get(&(child, parents.clone())) {
            return s;
        }
        let mut cols = parents.clone();
        cols.push(child);
        let counts = self.data.counts(&cols);
        let mut parent_totals: HashMap<Vec<u32>, f64> = HashMap::new();
        for (k, &n) in &counts {
            *parent_totals.entry(k[..parents.len()].to_vec()).or_default() += n as f64;
        }
        let ll: f64 = counts
            .iter()
            .map(|(k, &n)| {
                let n = n as f64;
                n * (n / parent_totals[&k[..parents.len()]]).ln()
            })
            .sum();
        let r = self.data.column(child).cardinality() as f64;
        let q: f64 = parents.iter().map(|&p| self.data.column(p).cardinality() as f64).product();
        let score = ll - 0.5 * (self.n().max(1) as f64).ln() * (r - 1.0) * q;
        self.cache.insert((child, parents), score);
        score
    }

    pub fn score(&mut self, parents: &[Vec<usize>]) -> f64 {
        (0..parents.len()).map(|c| self.family(c, &parents[c])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOp {
    Start,
    Add(String, String),
    Delete(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStep {
    pub op: SearchOp,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub graph: CausalGraph,
    pub score: f64,
    pub trace: Vec<ScoreStep>,
}

fn reaches(parents: &[Vec<usize>], from: usize, to: usize) -> bool {
    // walks child links: is there a directed path from -> to?
    let n = parents.len();
    let mut stack = vec![from];
    let mut seen = vec![false; n];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend((0..n).filter(|&c| parents[c].contains(&v)));
    }
    false
}

/// Greedy BIC hill climbing over DAGs: add the best edge while the score
/// strictly improves, then delete the best edge while it strictly improves.
/// Ties go to the lexicographically first `(parent, child)` pair.
pub fn greedy_score_search(ds: &DiscreteDataset) -> Result<SearchResult> {
    let names: Vec<String> = ds.column_names().map(str::to_string).collect();
    if names.len() < 2 {
        return Err(DiscoveryError::TooFewVariables(names.len()));
    }
    let mut scorer = BicScorer::new(ds);
    if scorer.n() == 0 {
        return Err(DiscoveryError::InsufficientData("no complete rows".into()));
    }
    let n = names.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut score = scorer.score(&parents);
    let mut trace = vec![ScoreStep { op: SearchOp::Start, score }];
    const EPS: f64 = 1e-9;
    // Score-equivalent moves differ only by rounding; the first in name order wins.
    const TIE: f64 = 1e-7;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for &p in &order {
            for &c in &order {
                if p == c || parents[c].contains(&p) || parents[p].contains(&c) || reaches(&parents, c, p) {
                    continue;
                }
                let mut with = parents[c].clone();
                with.push(p);
                let delta = scorer.family(c, &with) - scorer.family(c, &parents[c]);
                if delta > EPS && best.is_none_or(|(d, _, _)| delta > d + TIE) {
                    best = Some((delta, p, c));
                }
            }
        }
        let Some((delta, p, c)) = best else { break };
        parents[c].push(p);
        score += delta;
        trace.push(ScoreStep { op: SearchOp::Add(names[p].clone(), names[c].clone()), score });
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for &p in &order {
            for &c in &order {
                if !parents[c].contains(&p) {
                    continue;
                }
                let without: Vec<usize> = parents[c].iter().copied().filter(|&q| q != p).collect();
                let delta = scorer.family(c, &without) - scorer.family(c, &parents[c]);
                if delta > EPS && best.is_none_or(|(d, _, _)| delta > d + TIE) {
                    best = Some((delta, p, c));
                }
            }
        }
        let Some((delta, p, c)) = best else { break };
        parents[c].retain(|&q| q != p);
        score += delta;
        trace.push(ScoreStep { op: SearchOp::Delete(names[p].clone(), names[c].clone()), score });
    }
    let edges: Vec<(String, String)> =
        (0..n).flat_map(|c| parents[c].iter().map(move |&p| (p, c))).map(|(p, c)| (names[p].clone(), names[c].clone())).collect();
    let nodes: Vec<&str> = names.iter().map(String::as_str).collect();
    let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let graph = CausalGraph::new(&GraphDoc::observed(&nodes, &edge_refs))?;
    Ok(SearchResult { graph, score, trace })
}
