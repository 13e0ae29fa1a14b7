//! Missingness graphs: each partially observed variable `V` has an indicator
//! `R_V` and a proxy `V*` that equals `V` when `R_V = 0` and is missing otherwise.

use crate::data::{Column, DataError, DiscreteDataset};
use crate::estimation::state_space;
use crate::graph::{CausalGraph, GraphDoc, GraphError, NodeId, NodeKind};
use crate::scm::{draw, Cpt, CptDoc};
use crate::table::ProbTable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MissingError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("InvalidMGraph: {0}")]
    InvalidMGraph(String),
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("EmptyStratum: no fully observed rows with {0}")]
    EmptyStratum(String),
    #[error("UnmatchedPattern: {0}")]
    UnmatchedPattern(String),
    #[error("OverlappingSets: {0} appears in more than one set")]
    OverlappingSets(String),
    #[error("InvalidStatement: {0}")]
    InvalidStatement(String),
}

pub type Result<T, E = MissingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialVar {
    pub var: String,
    pub r: String,
    pub proxy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MGraphDoc {
    #[serde(flatten)]
    pub graph: GraphDoc,
    #[serde(default)]
    pub partial: Vec<PartialVar>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MGraph {
    graph: CausalGraph,
    partial: Vec<PartialVar>,
}

impl Serialize for MGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MGraphDoc { graph: self.graph.to_doc(), partial: self.partial.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = MGraphDoc::deserialize(d)?;
        MGraph::from_doc(&doc).map_err(serde::de::Error::custom)
    }
}

fn is_substantive(kind: NodeKind) -> bool {
    matches!(kind, NodeKind::Observed | NodeKind::Latent)
}

impl MGraph {
    pub fn from_doc(doc: &MGraphDoc) -> Result<Self> {
        let graph = CausalGraph::new(&doc.graph)?;
        let invalid = |m: String| MissingError::InvalidMGraph(m);
        let mut bound = BTreeSet::new();
        for p in &doc.partial {
            for n in [&p.var, &p.r, &p.proxy] {
                if !bound.insert(n.clone()) {
                    return Err(invalid(format!("{n} is bound more than once")));
                }
            }
            if graph.kind_of(&p.var)? != NodeKind::Observed {
                return Err(invalid(format!("partially observed {} must be an observed node", p.var)));
            }
            if graph.kind_of(&p.r)? != NodeKind::MissIndicator {
                return Err(invalid(format!("{} must have kind miss_indicator", p.r)));
            }
            if graph.kind_of(&p.proxy)? != NodeKind::Proxy {
                return Err(invalid(format!("{} must have kind proxy", p.proxy)));
            }
            let mut parents = graph.parents(&p.proxy)?;
            parents.sort();
            let mut expected = vec![p.var.as_str(), p.r.as_str()];
            expected.sort();
            if parents != expected {
                return Err(invalid(format!("proxy {} must have exactly the parents {} and {}", p.proxy, p.var, p.r)));
            }
        }
        for id in graph.ids() {
            let kind = graph.kind(id);
            if matches!(kind, NodeKind::MissIndicator | NodeKind::Proxy) {
                if !bound.contains(graph.name(id)) {
                    return Err(invalid(format!("{} is not bound to a partially observed variable", graph.name(id))));
                }
                if let Some(c) = graph.child_ids(id).find(|&c| is_substantive(graph.kind(c))) {
                    return Err(invalid(format!("{} may not be a parent of {}", graph.name(id), graph.name(c))));
                }
            }
        }
        let mut partial = doc.partial.clone();
        partial.sort_by(|a, b| a.var.cmp(&b.var));
        Ok(MGraph { graph, partial })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn partial(&self) -> &[PartialVar] {
        &self.partial
    }

    pub fn partial_of(&self, var: &str) -> Option<&PartialVar> {
        self.partial.iter().find(|p| p.var == var)
    }

    pub fn r_nodes(&self) -> Vec<&str> {
        self.partial.iter().map(|p| p.r.as_str()).collect()
    }

    /// Fully observed substantive variables.
    pub fn v_obs(&self) -> Vec<&str> {
        self.graph
            .ids()
            .filter(|&i| self.graph.kind(i) == NodeKind::Observed && self.partial_of(self.graph.name(i)).is_none())
            .map(|i| self.graph.name(i))
            .collect()
    }

    pub fn v_mis(&self) -> Vec<&str> {
        self.partial.iter().map(|p| p.var.as_str()).collect()
    }

    pub fn latent(&self) -> Vec<&str> {
        self.graph.nodes_of_kind(NodeKind::Latent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "MCAR",
            Mechanism::Mar => "MAR",
            Mechanism::Mnar => "MNAR",
        })
    }
}

/// MCAR if the indicators are d-separated from every substantive variable,
/// MAR if they are d-separated from the partially observed and latent ones given
/// the fully observed ones, MNAR otherwise.
pub fn classify_mechanism(mg: &MGraph) -> Mechanism {
    let r = mg.r_nodes();
    if r.is_empty() {
        return Mechanism::Mcar;
    }
    let obs = mg.v_obs();
    let mut hidden = mg.v_mis();
    hidden.extend(mg.latent());
    let mut all = obs.clone();
    all.extend(&hidden);
    let sep = |a: &[&str], b: &[&str], z: &[&str]| b.is_empty() || mg.graph.is_d_separated(a, b, z).expect("m-graph names are valid");
    if sep(&r, &all, &[]) {
        Mechanism::Mcar
    } else if sep(&r, &hidden, &obs) {
        Mechanism::Mar
    } else {
        Mechanism::Mnar
    }
}

/// Builds a table for an indicator whose parents are dataset columns or other indicators.
fn indicator_cpt(name: &str, doc: &CptDoc, parent_states: &[(String, Vec<String>)]) -> Result<Cpt> {
    if doc.states != ["0", "1"] {
        return Err(MissingError::SchemaMismatch(format!("{name} must have states [\"0\",\"1\"]")));
    }
    let mut rows = doc.rows.clone();
    if let Some(p) = &doc.probs {
        rows.insert(String::new(), p.clone());
    }
    Cpt::from_keyed_rows(name, parent_states, doc.states.clone(), &rows)
        .map_err(|e| MissingError::SchemaMismatch(e.to_string()))
}

/// Samples every indicator row by row, blanks the masked cells and appends one
/// `0`/`1` column per indicator.
pub fn apply_missingness(
    ds: &DiscreteDataset,
    mg: &MGraph,
    r_cpts: &BTreeMap<String, CptDoc>,
    seed: u64,
) -> Result<DiscreteDataset> {
    let g = &mg.graph;
    for v in mg.v_obs().into_iter().chain(mg.v_mis()) {
        if !ds.has_column(v) {
            return Err(MissingError::SchemaMismatch(format!("dataset has no column {v}")));
        }
    }
    for name in r_cpts.keys() {
        if !mg.r_nodes().contains(&name.as_str()) {
            return Err(MissingError::SchemaMismatch(format!("{name} is not a missingness indicator")));
        }
    }
    let order: Vec<NodeId> =
        g.topological_order().into_iter().filter(|&i| g.kind(i) == NodeKind::MissIndicator).collect();
    let binary = vec!["0".to_string(), "1".to_string()];
    // Per indicator: its table and where each parent value comes from.
    enum Source {
        Column(usize),
        Indicator(usize),
    }
    let mut plan: Vec<(Cpt, Vec<Source>)> = Vec::new();
    for &r in &order {
        let name = g.name(r);
        let doc = r_cpts.get(name).ok_or_else(|| MissingError::SchemaMismatch(format!("no table for {name}")))?;
        let mut graph_parents: Vec<&str> = g.parents(name)?;
        graph_parents.sort();
        let mut listed: Vec<&str> = doc.parents.iter().map(String::as_str).collect();
        listed.sort();
        if listed != graph_parents {
            return Err(MissingError::SchemaMismatch(format!(
                "table for {name} lists parents {listed:?}, graph has {graph_parents:?}"
            )));
        }
        let mut states = Vec::new();
        let mut sources = Vec::new();
        for p in &graph_parents {
            if let Some(k) = order.iter().position(|&o| g.name(o) == *p) {
                states.push((p.to_string(), binary.clone()));
                sources.push(Source::Indicator(k));
            } else {
                let c = ds.index_of(p).map_err(|_| MissingError::SchemaMismatch(format!("dataset has no column {p}")))?;
                states.push((p.to_string(), ds.column(c).states.clone()));
                sources.push(Source::Column(c));
            }
        }
        plan.push((indicator_cpt(name, doc, &states)?, sources));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r_values = vec![vec![0u32; ds.len()]; order.len()];
    for (row_idx, row) in ds.rows().iter().enumerate() {
        let mut sampled = vec![0usize; order.len()];
        for (k, (cpt, sources)) in plan.iter().enumerate() {
            let mut pa = Vec::with_capacity(sources.len());
            for s in sources {
                pa.push(match *s {
                    Source::Indicator(j) => sampled[j],
                    Source::Column(c) => row[c].ok_or_else(|| {
                        MissingError::SchemaMismatch(format!("row {row_idx}: {} is already missing", ds.column(c).name))
                    })? as usize,
                });
            }
            sampled[k] = draw(cpt.row(&pa), &mut rng);
            r_values[k][row_idx] = sampled[k] as u32;
        }
    }
    let mut out = ds.clone();
    for (k, &r) in order.iter().enumerate() {
        let var = &mg.partial.iter().find(|p| p.r == g.name(r)).expect("indicator is bound").var;
        let c = out.index_of(var)?;
        for (i, &v) in r_values[k].iter().enumerate() {
            if v == 1 {
                out.set_cell(i, c, None);
            }
        }
    }
    for (k, &r) in order.iter().enumerate() {
        let cells = r_values[k].iter().map(|&v| Some(v)).collect();
        out = out.with_column(Column { name: g.name(r).to_string(), states: binary.clone() }, cells)?;
    }
    Ok(out)
}

/// The two-variable m-graph shapes the recovery step understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `X -> Y`, `R_y` has no parents.
    Mcar,
    /// `X -> Y`, `X -> R_y`.
    Mar,
    /// `X -> Y`, `Y -> R_y`.
    MnarSelf,
    /// `X -> Y`, `X -> R_y`, `X` also partially observed with a parentless `R_x`.
    MnarBoth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Recovery {
    Recovered { family: Family, estimand: String, table: ProbTable },
    NotRecoverable { family: Family, reason: String },
}

/// Matches `mg` against the known shapes; returns the family with the parent
/// variable first.
pub fn match_family(mg: &MGraph, vars: [&str; 2]) -> Result<(Family, [String; 2])> {
    let g = &mg.graph;
    let unmatched = |m: &str| MissingError::UnmatchedPattern(m.to_string());
    for v in vars {
        g.id(v)?;
    }
    let substantive: BTreeSet<&str> =
        g.ids().filter(|&i| is_substantive(g.kind(i))).map(|i| g.name(i)).collect();
    if substantive != vars.iter().copied().collect() || !g.nodes_of_kind(NodeKind::Latent).is_empty() {
        return Err(unmatched("expected exactly the two queried variables, no latent nodes"));
    }
    let (x, y) = if g.has_edge(vars[0], vars[1]) {
        (vars[0], vars[1])
    } else if g.has_edge(vars[1], vars[0]) {
        (vars[1], vars[0])
    } else {
        return Err(unmatched("the two variables are not adjacent"));
    };
    if !g.nodes_of_kind(NodeKind::Selection).is_empty() {
        return Err(unmatched("selection nodes are not supported"));
    }
    let parents = |n: &str| -> Vec<&str> {
        let mut p = g.parents(n).expect("bound nodes exist");
        p.sort();
        p
    };
    let py = mg.partial_of(y).ok_or_else(|| unmatched("the child variable is fully observed"))?;
    let ry = parents(&py.r);
    match (mg.partial_of(x), ry.as_slice()) {
        (None, []) => Ok(Family::Mcar),
        (None, [p]) if *p == x => Ok(Family::Mar),
        (None, [p]) if *p == y => Ok(Family::MnarSelf),
        (Some(px), [p]) if *p == x && parents(&px.r).is_empty() => Ok(Family::MnarBoth),
        _ => Err(unmatched("indicator wiring matches none of the known shapes")),
    }
    .map(|f| (f, [x.to_string(), y.to_string()]))
}

/// Column holding the observed values of `var`: its own name, else its proxy's.
fn observed_column(ds: &DiscreteDataset, mg: &MGraph, var: &str) -> Result<usize> {
    if let Ok(c) = ds.index_of(var) {
        return Ok(c);
    }
    if let Some(p) = mg.partial_of(var) {
        if let Ok(c) = ds.index_of(&p.proxy) {
            return Ok(c);
        }
    }
    Err(MissingError::SchemaMismatch(format!("dataset has no column for {var}")))
}

/// Indicator value per row: the indicator column when present, else whether the cell is missing.
fn indicator_values(ds: &DiscreteDataset, mg: &MGraph, var: &str, col: usize) -> Result<Vec<bool>> {
    let p = mg.partial_of(var).expect("caller passes partially observed variables");
    match ds.index_of(&p.r) {
        Ok(rc) => {
            let one = ds.column(rc).state_index("1");
            ds.rows()
                .iter()
                .enumerate()
                .map(|(i, r)| match r[rc] {
                    Some(s) => Ok(Some(s) == one),
                    None => Err(MissingError::SchemaMismatch(format!("row {i}: indicator {} is missing", p.r))),
                })
                .collect()
        }
        Err(_) => Ok(ds.rows().iter().map(|r| r[col].is_none()).collect()),
    }
}

/// Recovers `P(vars[0], vars[1])` from masked data for the known shapes.
///
/// Only cells whose indicator is 0 are read, so the values behind masked cells
/// never affect the result.
pub fn recover_joint(mg: &MGraph, masked: &DiscreteDataset, vars: [&str; 2]) -> Result<Recovery> {
    let (family, [x, y]) = match_family(mg, vars)?;
    let xc = observed_column(masked, mg, &x)?;
    let yc = observed_column(masked, mg, &y)?;
    let ry = indicator_values(masked, mg, &y, yc)?;
    let n_rows = masked.len();
    let x_card = masked.column(xc).cardinality();
    let y_card = masked.column(yc).cardinality();
    let value = |c: usize, i: usize, what: &str| -> Result<usize> {
        masked.rows()[i][c]
            .map(|s| s as usize)
            .ok_or_else(|| MissingError::SchemaMismatch(format!("row {i}: {what} is missing but its indicator is 0")))
    };
    let mut joint = vec![vec![0.0; y_card]; x_card];
    let estimand = match family {
        Family::MnarSelf => {
            return Ok(Recovery::NotRecoverable {
                family,
                reason: format!("the missingness of {y} depends on {y} itself"),
            })
        }
        Family::Mcar => {
            let mut n = 0usize;
            for i in (0..n_rows).filter(|&i| !ry[i]) {
                let xv = masked.rows()[i][xc].ok_or_else(|| {
                    MissingError::SchemaMismatch(format!("row {i}: fully observed {x} is missing"))
                })?;
                joint[xv as usize][value(yc, i, &y)?] += 1.0;
                n += 1;
            }
            if n == 0 {
                return Err(MissingError::EmptyStratum(format!("R_{y}=0")));
            }
            joint.iter_mut().flatten().for_each(|v| *v /= n as f64);
            format!("P({x},{y}*|{}=0)", mg.partial_of(&y).unwrap().r)
        }
        Family::Mar | Family::MnarBoth => {
            // rows usable for P(X): all rows under MAR, rows with R_x=0 under MnarBoth
            let rx: Vec<bool> = match family {
                Family::MnarBoth => indicator_values(masked, mg, &x, xc)?,
                _ => vec![false; n_rows],
            };
            let mut px = vec![0.0; x_card];
            let mut cond = vec![vec![0.0; y_card]; x_card];
            let mut n_x = 0usize;
            for i in 0..n_rows {
                if rx[i] {
                    continue;
                }
                let xv = masked.rows()[i][xc].ok_or_else(|| {
                    MissingError::SchemaMismatch(format!("row {i}: {x} is missing but its indicator is 0"))
                })? as usize;
                px[xv] += 1.0;
                n_x += 1;
                if !ry[i] {
                    cond[xv][value(yc, i, &y)?] += 1.0;
                }
            }
            if n_x == 0 {
                return Err(MissingError::EmptyStratum(format!("{x} observed")));
            }
            for xv in 0..x_card {
                if px[xv] == 0.0 {
                    continue;
                }
                let total: f64 = cond[xv].iter().sum();
                if total == 0.0 {
                    return Err(MissingError::EmptyStratum(format!("{x}={}", masked.column(xc).states[xv])));
                }
                for yv in 0..y_card {
                    joint[xv][yv] = cond[xv][yv] / total * px[xv] / n_x as f64;
                }
            }
            let r_y = &mg.partial_of(&y).unwrap().r;
            match family {
                Family::Mar => format!("P({y}*|{x},{r_y}=0)P({x})"),
                _ => {
                    let r_x = &mg.partial_of(&x).unwrap().r;
                    format!("P({y}*|{x}*,{r_y}=0,{r_x}=0)P({x}*|{r_x}=0)")
                }
            }
        }
    };
    let swap = vars[0] != x;
    let mut entries = BTreeMap::new();
    for key in state_space(&[x_card, y_card]) {
        let (xv, yv) = (key[0] as usize, key[1] as usize);
        let xl = masked.column(xc).states[xv].clone();
        let yl = masked.column(yc).states[yv].clone();
        let k = if swap { vec![yl, xl] } else { vec![xl, yl] };
        entries.insert(k, joint[xv][yv]);
    }
    let table = ProbTable::new(vars.iter().map(|s| s.to_string()).collect(), entries)
        .map_err(|e| MissingError::SchemaMismatch(e.to_string()))?;
    Ok(Recovery::Recovered { family, estimand, table })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Testability {
    /// `Y` holds something outside the indicators of the partially observed members of `X` and `Z`.
    pub condition1: bool,
    /// Indicators of partially observed members of `X` lie in `X ∪ Y ∪ Z`.
    pub condition2: bool,
    /// Indicators of partially observed members of `Y` and `Z` lie in `Y ∪ Z`.
    pub condition3: bool,
    pub testable: bool,
}

/// Whether `X ⫫ Y | Z` can be checked directly from the observed columns.
pub fn is_ci_testable(mg: &MGraph, x: &[&str], y: &[&str], z: &[&str]) -> Result<Testability> {
    let allowed: BTreeSet<&str> = mg.v_obs().into_iter().chain(mg.v_mis()).chain(mg.r_nodes()).collect();
    let mut seen = BTreeSet::new();
    for v in x.iter().chain(y).chain(z) {
        if !mg.graph.contains(v) {
            return Err(GraphError::UnknownNode(v.to_string()).into());
        }
        if !allowed.contains(v) {
            return Err(MissingError::InvalidStatement(format!("{v} is not a substantive variable or indicator")));
        }
        if !seen.insert(*v) {
            return Err(MissingError::OverlappingSets(v.to_string()));
        }
    }
    let r_of = |set: &[&str]| -> BTreeSet<&str> {
        set.iter().filter_map(|v| mg.partial_of(v)).map(|p| p.r.as_str()).collect()
    };
    let (rx, ry, rz) = (r_of(x), r_of(y), r_of(z));
    let xyz: BTreeSet<&str> = x.iter().chain(y).chain(z).copied().collect();
    let yz: BTreeSet<&str> = y.iter().chain(z).copied().collect();
    let condition1 = y.iter().any(|v| !rx.contains(v) && !rz.contains(v));
    let condition2 = rx.is_subset(&xyz);
    let condition3 = rz.union(&ry).all(|r| yz.contains(r));
    Ok(Testability { condition1, condition2, condition3, testable: condition1 && condition2 && condition3 })
}
