//! Discrete structural causal models.
//!
//! Every node carries a conditional probability table over its graph parents;
//! latent roots carry a plain marginal. Queries are answered by exact
//! enumeration over the ancestral closure of the queried nodes, interventions
//! mutilate the graph and replace the intervened CPTs by point masses, and
//! sampling is ancestral.
//!
//! Sampling uses ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`), so a run
//! is a pure function of `(model, n, seed)`.

use crate::assignment::Assignment;
use crate::data::{Column, DiscreteDataset};
use crate::graph::{CausalGraph, GraphDoc, GraphError, NodeId, NodeKind};
use crate::table::ProbTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const MAX_SCM_NODES: usize = 20;
pub const MAX_STATES: usize = 5;
/// Largest number of joint configurations a single enumeration may visit.
pub const ENUMERATION_LIMIT: u128 = 1 << 24;
const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("MissingCpt: no table for node {0}")]
    MissingCpt(String),
    #[error("UnexpectedCpt: {0} is not a node of the graph")]
    UnexpectedCpt(String),
    #[error("ParentMismatch: table for {node} lists {found:?}, graph parents are {expected:?}")]
    ParentMismatch { node: String, expected: Vec<String>, found: Vec<String> },
    #[error("BadRow: table for {node}, row {key:?}: {reason}")]
    BadRow { node: String, key: String, reason: String },
    #[error("MissingRow: table for {node} has no row for {key:?}")]
    MissingRow { node: String, key: String },
    #[error("ModelTooLarge: {0}")]
    ModelTooLarge(String),
    #[error("UnknownState: {state:?} is not a state of {node}")]
    UnknownState { node: String, state: String },
    #[error("PartialAssignment: {0} is unassigned")]
    PartialAssignment(String),
    #[error("PartialOverlap: {0} appears in both target and evidence")]
    PartialOverlap(String),
    #[error("ZeroEvidenceProbability: P({0}) = 0")]
    ZeroEvidenceProbability(String),
    #[error("LatentIntervention: cannot intervene on latent node {0}")]
    LatentIntervention(String),
    #[error("EnumerationTooLarge: {0} configurations")]
    EnumerationTooLarge(u128),
    #[error("InvalidSampleSize: n must be at least 1")]
    InvalidSampleSize,
}

pub type Result<T, E = ScmError> = std::result::Result<T, E>;

/// Conditional probability table. Rows are stored in mixed-radix order over the
/// parents' state indices, parents sorted by name, first parent most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    node: String,
    parents: Vec<String>,
    parent_states: Vec<Vec<String>>,
    states: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn parents(&self) -> &[String] {
        &self.parents
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn row_index(&self, parent_states: &[usize]) -> usize {
        parent_states
            .iter()
            .zip(&self.parent_states)
            .fold(0, |acc, (&s, ps)| acc * ps.len() + s)
    }

    pub fn row(&self, parent_states: &[usize]) -> &[f64] {
        &self.rows[self.row_index(parent_states)]
    }

    /// Row key in `A=a,B=b` form for a row index.
    pub fn row_key(&self, mut index: usize) -> String {
        let mut parts = vec![String::new(); self.parents.len()];
        for k in (0..self.parents.len()).rev() {
            let card = self.parent_states[k].len();
            parts[k] = format!("{}={}", self.parents[k], self.parent_states[k][index % card]);
            index /= card;
        }
        parts.join(",")
    }

    /// Builds a table from rows keyed by parent assignments.
    ///
    /// `parents` maps each parent name to its state list; the key `""` addresses
    /// the single row of a root node.
    pub fn from_keyed_rows(
        node: &str,
        parents: &[(String, Vec<String>)],
        states: Vec<String>,
        keyed: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Cpt> {
        if states.is_empty() {
            return Err(ScmError::BadRow { node: node.into(), key: String::new(), reason: "no states".into() });
        }
        let mut parents = parents.to_vec();
        parents.sort_by(|a, b| a.0.cmp(&b.0));
        let mut cpt = Cpt {
            node: node.to_string(),
            parents: parents.iter().map(|p| p.0.clone()).collect(),
            parent_states: parents.iter().map(|p| p.1.clone()).collect(),
            states,
            rows: Vec::new(),
        };
        let n_rows: usize = cpt.parent_states.iter().map(Vec::len).product();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n_rows];
        for (key, probs) in keyed {
            let bad = |reason: String| ScmError::BadRow { node: node.into(), key: key.clone(), reason };
            let a: Assignment = key.parse().map_err(|e| bad(format!("{e}")))?;
            if a.len() != cpt.parents.len() {
                return Err(bad(format!("expected {} parent states", cpt.parents.len())));
            }
            let mut idx = Vec::with_capacity(cpt.parents.len());
            for (p, ps) in cpt.parents.iter().zip(&cpt.parent_states) {
                let v = a.get(p).ok_or_else(|| bad(format!("parent {p} unassigned")))?;
                idx.push(ps.iter().position(|s| s == v).ok_or_else(|| bad(format!("{v:?} is not a state of {p}")))?);
            }
            let r = cpt.row_index(&idx);
            if rows[r].is_some() {
                return Err(bad("duplicate row".into()));
            }
            check_distribution(probs, cpt.states.len()).map_err(bad)?;
            rows[r] = Some(probs.clone());
        }
        let mut out = Vec::with_capacity(n_rows);
        for (i, r) in rows.into_iter().enumerate() {
            match r {
                Some(r) => out.push(r),
                None => return Err(ScmError::MissingRow { node: node.into(), key: cpt.row_key(i) }),
            }
        }
        cpt.rows = out;
        Ok(cpt)
    }

    fn point_mass(node: &str, states: Vec<String>, state: usize) -> Cpt {
        let mut row = vec![0.0; states.len()];
        row[state] = 1.0;
        Cpt { node: node.to_string(), parents: Vec::new(), parent_states: Vec::new(), states, rows: vec![row] }
    }

    fn to_doc(&self) -> CptDoc {
        CptDoc {
            parents: self.parents.clone(),
            states: self.states.clone(),
            rows: self.rows.iter().enumerate().map(|(i, r)| (self.row_key(i), r.clone())).collect(),
            probs: None,
        }
    }
}

fn check_distribution(probs: &[f64], n_states: usize) -> std::result::Result<(), String> {
    if probs.len() != n_states {
        return Err(format!("{} probabilities for {} states", probs.len(), n_states));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("negative or non-finite probability".into());
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > PROB_TOLERANCE {
        return Err(format!("probabilities sum to {s}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptDoc {
    #[serde(default)]
    pub parents: Vec<String>,
    pub states: Vec<String>,
    #[serde(default)]
    pub rows: BTreeMap<String, Vec<f64>>,
    /// Shorthand for the single row of a root node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDoc {
    pub states: Vec<String>,
    pub probs: Vec<f64>,
}

/// SCM document: the graph schema plus `cpts` and optional `latent` marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmDoc {
    #[serde(flatten)]
    pub graph: GraphDoc,
    pub cpts: BTreeMap<String, CptDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub latent: BTreeMap<String, LatentDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    graph: CausalGraph,
    cpts: Vec<Cpt>,
}

impl Serialize for DiscreteScm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteScm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ScmDoc::deserialize(d)?;
        DiscreteScm::from_doc(&doc).map_err(serde::de::Error::custom)
    }
}

impl DiscreteScm {
    pub fn from_doc(doc: &ScmDoc) -> Result<Self> {
        let graph = CausalGraph::new(&doc.graph)?;
        if graph.len() > MAX_SCM_NODES {
            return Err(ScmError::ModelTooLarge(format!("{} nodes (limit {MAX_SCM_NODES})", graph.len())));
        }
        for name in doc.cpts.keys().chain(doc.latent.keys()) {
            if !graph.contains(name) {
                return Err(ScmError::UnexpectedCpt(name.clone()));
            }
        }
        let states_of = |name: &str| -> Result<Vec<String>> {
            if let Some(c) = doc.cpts.get(name) {
                Ok(c.states.clone())
            } else if let Some(l) = doc.latent.get(name) {
                Ok(l.states.clone())
            } else {
                Err(ScmError::MissingCpt(name.to_string()))
            }
        };
        let mut cpts = Vec::with_capacity(graph.len());
        for id in graph.ids() {
            let name = graph.name(id);
            let states = states_of(name)?;
            if states.len() > MAX_STATES {
                return Err(ScmError::ModelTooLarge(format!("{name} has {} states (limit {MAX_STATES})", states.len())));
            }
            let parents: Vec<(String, Vec<String>)> = graph
                .parent_ids(id)
                .map(|p| Ok((graph.name(p).to_string(), states_of(graph.name(p))?)))
                .collect::<Result<_>>()?;
            let expected: Vec<String> = parents.iter().map(|p| p.0.clone()).collect();
            let cpt = match (doc.cpts.get(name), doc.latent.get(name)) {
                (Some(c), _) => {
                    let mut found = c.parents.clone();
                    found.sort();
                    if found != expected {
                        return Err(ScmError::ParentMismatch { node: name.into(), expected, found: c.parents.clone() });
                    }
                    let mut rows = c.rows.clone();
                    if let Some(p) = &c.probs {
                        if !rows.is_empty() || !parents.is_empty() {
                            return Err(ScmError::BadRow {
                                node: name.into(),
                                key: String::new(),
                                reason: "`probs` is only valid for root nodes without `rows`".into(),
                            });
                        }
                        rows.insert(String::new(), p.clone());
                    }
                    Cpt::from_keyed_rows(name, &parents, c.states.clone(), &rows)?
                }
                (None, Some(l)) => {
                    if graph.kind(id) != NodeKind::Latent || !parents.is_empty() {
                        return Err(ScmError::BadRow {
                            node: name.into(),
                            key: String::new(),
                            reason: "`latent` marginals are only valid for latent root nodes".into(),
                        });
                    }
                    let rows = BTreeMap::from([(String::new(), l.probs.clone())]);
                    Cpt::from_keyed_rows(name, &[], l.states.clone(), &rows)?
                }
                (None, None) => return Err(ScmError::MissingCpt(name.to_string())),
            };
            cpts.push(cpt);
        }
        Ok(DiscreteScm { graph, cpts })
    }

    pub fn to_doc(&self) -> ScmDoc {
        ScmDoc {
            graph: self.graph.to_doc(),
            cpts: self.cpts.iter().map(|c| (c.node.clone(), c.to_doc())).collect(),
            latent: BTreeMap::new(),
        }
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn cpt(&self, name: &str) -> Result<&Cpt> {
        Ok(&self.cpts[self.graph.id(name)?.0])
    }

    pub fn states(&self, name: &str) -> Result<&[String]> {
        Ok(self.cpt(name)?.states())
    }

    fn resolve(&self, a: &Assignment) -> Result<Vec<(usize, usize)>> {
        a.iter()
            .map(|(k, v)| {
                let id = self.graph.id(k)?;
                let s = self.cpts[id.0]
                    .state_index(v)
                    .ok_or_else(|| ScmError::UnknownState { node: k.into(), state: v.into() })?;
                Ok((id.0, s))
            })
            .collect()
    }

    fn local_prob(&self, node: usize, values: &[usize]) -> f64 {
        let cpt = &self.cpts[node];
        let pa: Vec<usize> = self.graph.parent_ids(NodeId(node)).map(|p| values[p.0]).collect();
        cpt.row(&pa)[values[node]]
    }

    /// Product of CPT entries for a total assignment.
    pub fn joint_probability(&self, a: &Assignment) -> Result<f64> {
        let resolved = self.resolve(a)?;
        let mut values = vec![usize::MAX; self.graph.len()];
        for (n, s) in resolved {
            values[n] = s;
        }
        if let Some(i) = values.iter().position(|&v| v == usize::MAX) {
            return Err(ScmError::PartialAssignment(self.graph.name(NodeId(i)).to_string()));
        }
        Ok((0..self.graph.len()).map(|n| self.local_prob(n, &values)).product())
    }

    /// Probability mass of the partial assignment `fixed`, summing out the rest of
    /// its ancestral closure.
    fn mass(&self, fixed: &[(usize, usize)]) -> Result<f64> {
        let n = self.graph.len();
        let mut relevant = vec![false; n];
        for &(v, _) in fixed {
            relevant[v] = true;
            for a in self.graph.ancestor_ids(NodeId(v)) {
                relevant[a.0] = true;
            }
        }
        let mut value = vec![None; n];
        for &(v, s) in fixed {
            value[v] = Some(s);
        }
        let order: Vec<usize> =
            self.graph.topological_order().into_iter().map(|i| i.0).filter(|&i| relevant[i]).collect();
        let configs: u128 = order
            .iter()
            .filter(|&&v| value[v].is_none())
            .map(|&v| self.cpts[v].states.len() as u128)
            .product();
        if configs > ENUMERATION_LIMIT {
            return Err(ScmError::EnumerationTooLarge(configs));
        }
        let mut values = vec![0usize; n];
        Ok(self.enumerate(&order, 0, &value, &mut values))
    }

    fn enumerate(&self, order: &[usize], depth: usize, fixed: &[Option<usize>], values: &mut [usize]) -> f64 {
        let Some(&v) = order.get(depth) else {
            return 1.0;
        };
        match fixed[v] {
            Some(s) => {
                values[v] = s;
                let p = self.local_prob(v, values);
                if p == 0.0 {
                    0.0
                } else {
                    p * self.enumerate(order, depth + 1, fixed, values)
                }
            }
            None => {
                let mut total = 0.0;
                for s in 0..self.cpts[v].states.len() {
                    values[v] = s;
                    let p = self.local_prob(v, values);
                    if p != 0.0 {
                        total += p * self.enumerate(order, depth + 1, fixed, values);
                    }
                }
                total
            }
        }
    }

    /// Marginal probability of a partial assignment.
    pub fn probability(&self, a: &Assignment) -> Result<f64> {
        let fixed = self.resolve(a)?;
        self.mass(&fixed)
    }

    /// `P(target | evidence)` by exact enumeration.
    pub fn query_conditional(&self, target: &Assignment, evidence: &Assignment) -> Result<f64> {
        if let Some(v) = target.overlap(evidence) {
            return Err(ScmError::PartialOverlap(v.to_string()));
        }
        let e = self.resolve(evidence)?;
        let t = self.resolve(target)?;
        let pe = self.mass(&e)?;
        if pe == 0.0 {
            return Err(ScmError::ZeroEvidenceProbability(evidence.to_string()));
        }
        let mut both = e;
        both.extend(t);
        Ok(self.mass(&both)? / pe)
    }

    /// Exact joint distribution over `vars`, every state combination listed.
    pub fn exact_joint(&self, vars: &[&str]) -> Result<ProbTable> {
        let ids: Vec<usize> = vars.iter().map(|v| self.graph.id(v).map(|i| i.0)).collect::<Result<_, _>>()?;
        let mut entries = BTreeMap::new();
        let cards: Vec<usize> = ids.iter().map(|&i| self.cpts[i].states.len()).collect();
        let total: usize = cards.iter().product();
        for mut k in 0..total {
            let mut fixed = vec![(0, 0); ids.len()];
            for j in (0..ids.len()).rev() {
                fixed[j] = (ids[j], k % cards[j]);
                k /= cards[j];
            }
            let key: Vec<String> = fixed.iter().map(|&(v, s)| self.cpts[v].states[s].clone()).collect();
            entries.insert(key, self.mass(&fixed)?);
        }
        ProbTable::new(vars.iter().map(|s| s.to_string()).collect(), entries)
            .map_err(|e| ScmError::BadRow { node: vars.join(","), key: String::new(), reason: e.to_string() })
    }

    /// The model under `do(assignment)`: incoming edges of intervened nodes are
    /// removed and their tables replaced by point masses.
    pub fn intervene(&self, dos: &Assignment) -> Result<DiscreteScm> {
        let resolved = self.resolve(dos)?;
        for &(v, _) in &resolved {
            if self.graph.kind(NodeId(v)) == NodeKind::Latent {
                return Err(ScmError::LatentIntervention(self.graph.name(NodeId(v)).to_string()));
            }
        }
        let names: Vec<&str> = dos.vars().collect();
        let graph = self.graph.mutilate(&names)?;
        let mut cpts = self.cpts.clone();
        for (v, s) in resolved {
            cpts[v] = Cpt::point_mass(&self.cpts[v].node, self.cpts[v].states.clone(), s);
        }
        Ok(DiscreteScm { graph, cpts })
    }

    /// `P(target | do(dos), evidence)`.
    pub fn interventional(&self, target: &Assignment, dos: &Assignment, evidence: &Assignment) -> Result<f64> {
        self.intervene(dos)?.query_conditional(target, evidence)
    }

    /// Ancestral sampling. Latent columns are dropped unless `include_latent`.
    pub fn sample(&self, n: usize, seed: u64, include_latent: bool) -> Result<DiscreteDataset> {
        if n == 0 {
            return Err(ScmError::InvalidSampleSize);
        }
        let order: Vec<usize> = self.graph.topological_order().into_iter().map(|i| i.0).collect();
        let emitted: Vec<usize> = self
            .graph
            .ids()
            .filter(|&i| include_latent || self.graph.kind(i) != NodeKind::Latent)
            .map(|i| i.0)
            .collect();
        let columns = emitted
            .iter()
            .map(|&i| Column { name: self.cpts[i].node.clone(), states: self.cpts[i].states.clone() })
            .collect();
        let mut ds = DiscreteDataset::new(columns).expect("graph names are unique");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0usize; self.graph.len()];
        for _ in 0..n {
            for &v in &order {
                let pa: Vec<usize> = self.graph.parent_ids(NodeId(v)).map(|p| values[p.0]).collect();
                values[v] = draw(self.cpts[v].row(&pa), &mut rng);
            }
            ds.push_cells(emitted.iter().map(|&i| Some(values[i] as u32)).collect())
                .expect("sampled states are in range");
        }
        Ok(ds)
    }
}

/// Inverse-CDF draw from a categorical distribution.
pub fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
