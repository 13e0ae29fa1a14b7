//! Causal DAGs with typed nodes, path enumeration, d-separation, the backdoor
//! criterion and the do-calculus applicability checks built on top of them.
//!
//! Graphs are immutable once constructed. Every constructor validates the
//! acyclicity and naming invariants, so any `CausalGraph` in hand is a DAG.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

/// Default cap on graph size; path enumeration is exponential.
pub const DEFAULT_MAX_NODES: usize = 32;

/// Environment variable overriding [`DEFAULT_MAX_NODES`].
pub const MAX_NODES_ENV: &str = "CAUSALKIT_MAX_NODES";

/// Node limit in effect: `CAUSALKIT_MAX_NODES` when set and parseable, else the default.
pub fn max_nodes_limit() -> usize {
    std::env::var(MAX_NODES_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_NODES)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("CycleDetected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("DanglingEdge: {0} -> {1} references an undeclared node")]
    DanglingEdge(String, String),
    #[error("DuplicateNode: {0}")]
    DuplicateNode(String),
    #[error("DuplicateEdge: {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("SelfLoop: {0}")]
    SelfLoop(String),
    #[error("InvalidName: {0:?} is not an identifier")]
    InvalidName(String),
    #[error("SelectionHasChildren: selection node {0} has outgoing edge to {1}")]
    SelectionHasChildren(String, String),
    #[error("GraphTooLarge: {nodes} nodes exceeds limit {limit}")]
    GraphTooLarge { nodes: usize, limit: usize },
    #[error("UnknownNode: {0}")]
    UnknownNode(String),
    #[error("OverlappingSets: {0} appears in more than one argument set")]
    OverlappingSets(String),
    #[error("NotIntervenable: {0} is latent")]
    NotIntervenable(String),
    #[error("InvalidPath: {0}")]
    InvalidPath(String),
    #[error("NotSupported: {0}")]
    NotSupported(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    #[default]
    Observed,
    Latent,
    Selection,
    MissIndicator,
    Proxy,
}

/// Index of a node inside one particular graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub name: String,
    #[serde(default)]
    pub kind: NodeKind,
}

/// On-disk graph document: `{"nodes":[{"name":"S","kind":"observed"}],"edges":[["G","S"]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<NodeDecl>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

impl GraphDoc {
    pub fn observed(names: &[&str], edges: &[(&str, &str)]) -> Self {
        GraphDoc {
            nodes: names
                .iter()
                .map(|n| NodeDecl { name: n.to_string(), kind: NodeKind::Observed })
                .collect(),
            edges: edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks every graph invariant on a raw document.
pub fn validate(doc: &GraphDoc, max_nodes: usize) -> Result<()> {
    build(doc, max_nodes).map(|_| ())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    index: HashMap<String, usize>,
    // neighbour lists sorted by node name
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

fn build(doc: &GraphDoc, max_nodes: usize) -> Result<CausalGraph> {
    if doc.nodes.len() > max_nodes {
        return Err(GraphError::GraphTooLarge { nodes: doc.nodes.len(), limit: max_nodes });
    }
    let mut index = HashMap::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.iter().enumerate() {
        if !is_identifier(&n.name) {
            return Err(GraphError::InvalidName(n.name.clone()));
        }
        if index.insert(n.name.clone(), i).is_some() {
            return Err(GraphError::DuplicateNode(n.name.clone()));
        }
    }
    let n = doc.nodes.len();
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    let mut seen = BTreeSet::new();
    for (a, b) in &doc.edges {
        let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) else {
            return Err(GraphError::DanglingEdge(a.clone(), b.clone()));
        };
        if ia == ib {
            return Err(GraphError::SelfLoop(a.clone()));
        }
        if !seen.insert((ia, ib)) {
            return Err(GraphError::DuplicateEdge(a.clone(), b.clone()));
        }
        if doc.nodes[ia].kind == NodeKind::Selection {
            return Err(GraphError::SelectionHasChildren(a.clone(), b.clone()));
        }
        parents[ib].push(ia);
        children[ia].push(ib);
    }
    let names: Vec<String> = doc.nodes.iter().map(|d| d.name.clone()).collect();
    for list in parents.iter_mut().chain(children.iter_mut()) {
        list.sort_by(|&x, &y| names[x].cmp(&names[y]));
    }
    let g = CausalGraph {
        names,
        kinds: doc.nodes.iter().map(|d| d.kind).collect(),
        index,
        parents,
        children,
    };
    if let Some(cycle) = g.find_cycle() {
        return Err(GraphError::CycleDetected(cycle.into_iter().map(|i| g.names[i].clone()).collect()));
    }
    Ok(g)
}

impl TryFrom<GraphDoc> for CausalGraph {
    type Error = GraphError;
    fn try_from(doc: GraphDoc) -> Result<Self> {
        build(&doc, max_nodes_limit())
    }
}

impl From<CausalGraph> for GraphDoc {
    fn from(g: CausalGraph) -> Self {
        g.to_doc()
    }
}

impl Serialize for CausalGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CausalGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = GraphDoc::deserialize(d)?;
        CausalGraph::try_from(doc).map_err(serde::de::Error::custom)
    }
}

/// Direction of one step along a path, relative to the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    /// `a -> b`
    Forward,
    /// `a <- b`
    Backward,
}

/// A simple path through the skeleton, annotated with the edge direction of each step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    pub nodes: Vec<String>,
    pub steps: Vec<Step>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n == name)
    }

    /// Interior nodes together with whether each is a collider on this path.
    pub fn interior(&self) -> impl Iterator<Item = (&str, bool)> {
        (1..self.nodes.len().saturating_sub(1)).map(move |i| {
            let collider = self.steps[i - 1] == Step::Forward && self.steps[i] == Step::Backward;
            (self.nodes[i].as_str(), collider)
        })
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(match self.steps[i - 1] {
                    Step::Forward => "→",
                    Step::Backward => "←",
                })?;
            }
            f.write_str(n)?;
        }
        Ok(())
    }
}

impl CausalGraph {
    pub fn new(doc: &GraphDoc) -> Result<Self> {
        build(doc, max_nodes_limit())
    }

    pub fn with_limit(doc: &GraphDoc, max_nodes: usize) -> Result<Self> {
        build(doc, max_nodes)
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            nodes: self
                .names
                .iter()
                .zip(&self.kinds)
                .map(|(n, k)| NodeDecl { name: n.clone(), kind: *k })
                .collect(),
            edges: self.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.index
            .get(name)
            .map(|&i| NodeId(i))
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.0]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.kinds[id.0]
    }

    pub fn kind_of(&self, name: &str) -> Result<NodeKind> {
        self.id(name).map(|id| self.kind(id))
    }

    /// Node names in declaration order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.names.len()).map(NodeId)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<&str> {
        self.ids().filter(|&i| self.kind(i) == kind).map(|i| self.name(i)).collect()
    }

    /// Edges sorted by (parent name, child name).
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        let mut out: Vec<(&str, &str)> = Vec::new();
        for (p, ch) in self.children.iter().enumerate() {
            for &c in ch {
                out.push((&self.names[p], &self.names[c]));
            }
        }
        out.sort();
        out.into_iter()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&a), Some(&b)) => self.children[a].contains(&b),
            _ => false,
        }
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.children[a.0].contains(&b.0) || self.parents[a.0].contains(&b.0)
    }

    pub fn parent_ids(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.parents[id.0].iter().map(|&i| NodeId(i))
    }

    pub fn child_ids(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children[id.0].iter().map(|&i| NodeId(i))
    }

    pub fn parents(&self, name: &str) -> Result<Vec<&str>> {
        let id = self.id(name)?;
        Ok(self.parent_ids(id).map(|p| self.name(p)).collect())
    }

    pub fn children(&self, name: &str) -> Result<Vec<&str>> {
        let id = self.id(name)?;
        Ok(self.child_ids(id).map(|c| self.name(c)).collect())
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.len();
        let mut state = vec![0u8; n];
        let mut stack: Vec<usize> = Vec::new();
        fn dfs(g: &CausalGraph, v: usize, state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
            state[v] = 1;
            stack.push(v);
            for &c in &g.children[v] {
                if state[c] == 1 {
                    let start = stack.iter().position(|&s| s == c).unwrap();
                    let mut cyc = stack[start..].to_vec();
                    cyc.push(c);
                    return Some(cyc);
                }
                if state[c] == 0 {
                    if let Some(cyc) = dfs(g, c, state, stack) {
                        return Some(cyc);
                    }
                }
            }
            stack.pop();
            state[v] = 2;
            None
        }
        for v in 0..n {
            if state[v] == 0 {
                if let Some(c) = dfs(self, v, &mut state, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Kahn's algorithm with ties broken by node name.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<(&str, usize)> =
            (0..n).filter(|&i| indeg[i] == 0).map(|i| (self.names[i].as_str(), i)).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(first) = ready.iter().next().copied() {
            ready.remove(&first);
            let v = first.1;
            out.push(NodeId(v));
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert((self.names[c].as_str(), c));
                }
            }
        }
        out
    }

    fn reach(&self, starts: &[usize], forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<usize> = starts.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            let next = if forward { &self.children[v] } else { &self.parents[v] };
            for &w in next {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn descendant_ids(&self, id: NodeId) -> Vec<NodeId> {
        let seen = self.reach(&[id.0], true);
        (0..self.len()).filter(|&i| seen[i]).map(NodeId).collect()
    }

    pub fn ancestor_ids(&self, id: NodeId) -> Vec<NodeId> {
        let seen = self.reach(&[id.0], false);
        (0..self.len()).filter(|&i| seen[i]).map(NodeId).collect()
    }

    /// All nodes reachable from `name` along directed edges, excluding `name`.
    pub fn descendants(&self, name: &str) -> Result<BTreeSet<String>> {
        let id = self.id(name)?;
        Ok(self.descendant_ids(id).into_iter().map(|d| self.name(d).to_string()).collect())
    }

    pub fn ancestors(&self, name: &str) -> Result<BTreeSet<String>> {
        let id = self.id(name)?;
        Ok(self.ancestor_ids(id).into_iter().map(|d| self.name(d).to_string()).collect())
    }

    pub fn has_directed_path(&self, from: NodeId, to: NodeId) -> bool {
        self.reach(&[from.0], true)[to.0]
    }

    fn ids_of(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.id(n).map(|i| i.0)).collect()
    }

    /// All simple paths between `x` and `y` ignoring direction, sorted by node sequence.
    pub fn undirected_paths(&self, x: &str, y: &str) -> Result<Vec<Path>> {
        let xi = self.id(x)?.0;
        let yi = self.id(y)?.0;
        if xi == yi {
            return Err(GraphError::OverlappingSets(x.to_string()));
        }
        let mut out = Vec::new();
        let mut on_path = vec![false; self.len()];
        let mut nodes = vec![xi];
        let mut steps = Vec::new();
        on_path[xi] = true;
        self.extend_paths(yi, &mut on_path, &mut nodes, &mut steps, &mut out);
        out.sort_by(|a, b| a.nodes.cmp(&b.nodes));
        Ok(out)
    }

    fn extend_paths(
        &self,
        target: usize,
        on_path: &mut [bool],
        nodes: &mut Vec<usize>,
        steps: &mut Vec<Step>,
        out: &mut Vec<Path>,
    ) {
        let v = *nodes.last().unwrap();
        let moves = self.children[v]
            .iter()
            .map(|&c| (c, Step::Forward))
            .chain(self.parents[v].iter().map(|&p| (p, Step::Backward)));
        for (w, step) in moves {
            if on_path[w] {
                continue;
            }
            nodes.push(w);
            steps.push(step);
            if w == target {
                out.push(Path {
                    nodes: nodes.iter().map(|&i| self.names[i].clone()).collect(),
                    steps: steps.clone(),
                });
            } else {
                on_path[w] = true;
                self.extend_paths(target, on_path, nodes, steps, out);
                on_path[w] = false;
            }
            nodes.pop();
            steps.pop();
        }
    }

    fn check_path(&self, path: &Path) -> Result<Vec<usize>> {
        if path.nodes.len() != path.steps.len() + 1 {
            return Err(GraphError::InvalidPath(format!("{} nodes but {} steps", path.nodes.len(), path.steps.len())));
        }
        let ids: Vec<usize> = path.nodes.iter().map(|n| self.id(n).map(|i| i.0)).collect::<Result<_>>()?;
        let mut seen = BTreeSet::new();
        for &i in &ids {
            if !seen.insert(i) {
                return Err(GraphError::InvalidPath(format!("{} repeats", self.names[i])));
            }
        }
        for (k, step) in path.steps.iter().enumerate() {
            let (a, b) = (ids[k], ids[k + 1]);
            let ok = match step {
                Step::Forward => self.children[a].contains(&b),
                Step::Backward => self.parents[a].contains(&b),
            };
            if !ok {
                return Err(GraphError::InvalidPath(format!(
                    "no edge for step {k} between {} and {}",
                    self.names[a], self.names[b]
                )));
            }
        }
        Ok(ids)
    }

    /// Whether the conditioning set `z` blocks `path`.
    ///
    /// A chain or fork node blocks when it is in `z`; a collider blocks unless it or
    /// one of its descendants is in `z`.
    pub fn is_path_blocked(&self, path: &Path, z: &[&str]) -> Result<bool> {
        let ids = self.check_path(path)?;
        let zs: BTreeSet<usize> = self.ids_of(z)?.into_iter().collect();
        for k in 1..ids.len().saturating_sub(1) {
            let v = ids[k];
            let collider = path.steps[k - 1] == Step::Forward && path.steps[k] == Step::Backward;
            if collider {
                let opened = zs.contains(&v) || self.descendant_ids(NodeId(v)).iter().any(|d| zs.contains(&d.0));
                if !opened {
                    return Ok(true);
                }
            } else if zs.contains(&v) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// d-separation of node sets `x` and `y` given `z`, by reachability over
    /// (node, direction) states rather than path enumeration.
    pub fn is_d_separated(&self, x: &[&str], y: &[&str], z: &[&str]) -> Result<bool> {
        let xs = self.ids_of(x)?;
        let ys = self.ids_of(y)?;
        let zs = self.ids_of(z)?;
        disjoint(self, &[&xs, &ys, &zs])?;
        Ok(self.d_separated_ids(&xs, &ys, &zs))
    }

    pub(crate) fn d_separated_ids(&self, xs: &[usize], ys: &[usize], zs: &[usize]) -> bool {
        let n = self.len();
        let mut in_z = vec![false; n];
        for &z in zs {
            in_z[z] = true;
        }
        // ancestors of z, including z itself
        let mut anc_z = self.reach(zs, false);
        for &z in zs {
            anc_z[z] = true;
        }
        let mut in_y = vec![false; n];
        for &y in ys {
            in_y[y] = true;
        }
        // visited[v][0]: arrived from a child (moving up); [1]: arrived from a parent
        let mut visited = vec![[false; 2]; n];
        let mut stack: Vec<(usize, usize)> = xs.iter().map(|&x| (x, 0)).collect();
        while let Some((v, dir)) = stack.pop() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !in_z[v] && in_y[v] {
                return false;
            }
            if dir == 0 {
                if !in_z[v] {
                    stack.extend(self.parents[v].iter().map(|&p| (p, 0)));
                    stack.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
            } else {
                if !in_z[v] {
                    stack.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
                if anc_z[v] {
                    stack.extend(self.parents[v].iter().map(|&p| (p, 0)));
                }
            }
        }
        true
    }

    /// Paths between `x` and `y` whose first edge points into `x`.
    pub fn backdoor_paths(&self, x: &str, y: &str) -> Result<Vec<Path>> {
        Ok(self
            .undirected_paths(x, y)?
            .into_iter()
            .filter(|p| p.steps.first() == Some(&Step::Backward))
            .collect())
    }

    /// `z` blocks every backdoor path from `x` to `y` and contains no descendant of `x`.
    pub fn satisfies_backdoor_criterion(&self, x: &str, y: &str, z: &[&str]) -> Result<bool> {
        let xi = self.id(x)?;
        let yi = self.id(y)?;
        let zs = self.ids_of(z)?;
        disjoint(self, &[&[xi.0], &[yi.0], &zs])?;
        let desc = self.reach(&[xi.0], true);
        if zs.iter().any(|&z| desc[z]) {
            return Ok(false);
        }
        // With no descendant of x in z, the backdoor paths are exactly the x-y paths
        // that survive deleting x's outgoing edges.
        let mut cut = self.clone();
        for c in std::mem::take(&mut cut.children[xi.0]) {
            cut.parents[c].retain(|&p| p != xi.0);
        }
        Ok(cut.d_separated_ids(&[xi.0], &[yi.0], &zs))
    }

    /// Backdoor-criterion form of the second do-calculus rule:
    /// `P(y | do(x), z) = P(y | x, z)`.
    pub fn rule2_applicable(&self, x: &str, y: &str, z: &[&str]) -> Result<bool> {
        self.satisfies_backdoor_criterion(x, y, z)
    }

    /// No directed path from `x` to `y`, so `P(y | do(x)) = P(y)`.
    pub fn rule3_applicable(&self, x: &str, y: &str) -> Result<bool> {
        let xi = self.id(x)?;
        let yi = self.id(y)?;
        if xi == yi {
            return Err(GraphError::OverlappingSets(x.to_string()));
        }
        Ok(!self.has_directed_path(xi, yi))
    }

    /// `P(y | do(x), z, w) = P(y | do(x), z)` when `w` is d-separated from `y`
    /// given `z ∪ {x}` in the graph with edges into `x` removed.
    pub fn rule1_applicable(&self, y: &str, x_do: &str, w: &[&str], z: &[&str]) -> Result<bool> {
        let yi = self.id(y)?.0;
        let xi = self.id(x_do)?.0;
        let ws = self.ids_of(w)?;
        let zs = self.ids_of(z)?;
        disjoint(self, &[&[yi], &[xi], &ws, &zs])?;
        if ws.is_empty() {
            return Ok(true);
        }
        let cut = self.mutilate(&[x_do])?;
        let mut cond = zs.clone();
        cond.push(xi);
        Ok(cut.d_separated_ids(&ws, &[yi], &cond))
    }

    /// Copy of the graph with every edge into a `do_set` node removed.
    pub fn mutilate(&self, do_set: &[&str]) -> Result<CausalGraph> {
        let ids = self.ids_of(do_set)?;
        for &i in &ids {
            if self.kinds[i] == NodeKind::Latent {
                return Err(GraphError::NotIntervenable(self.names[i].clone()));
            }
        }
        let mut g = self.clone();
        for &i in &ids {
            for p in std::mem::take(&mut g.parents[i]) {
                g.children[p].retain(|&c| c != i);
            }
        }
        Ok(g)
    }

    /// Admissible-adjustment report for `P(y | do(x))` restricted to the rules
    /// the toolkit can decide.
    pub fn identify(&self, x: &str, y: &str, adjust: Option<&[&str]>) -> Result<IdentifyReport> {
        let xi = self.id(x)?;
        let yi = self.id(y)?;
        if xi == yi {
            return Err(GraphError::OverlappingSets(x.to_string()));
        }
        let rule3 = self.rule3_applicable(x, y)?;
        let given = match adjust {
            Some(z) => Some((z.iter().map(|s| s.to_string()).collect(), self.satisfies_backdoor_criterion(x, y, z)?)),
            None => None,
        };
        let parents: Vec<&str> = self.parent_ids(xi).map(|p| self.name(p)).collect();
        let parents_observed = self.parent_ids(xi).all(|p| self.kind(p) == NodeKind::Observed);
        let parent_adjustment = if parents_observed && !parents.contains(&y) {
            Some(parents.iter().map(|s| s.to_string()).collect())
        } else {
            None
        };
        let minimal_adjustment = self.minimal_adjustment_set(xi, yi)?;
        let estimand = if rule3 {
            Estimand::NoEffect
        } else if let Some(z) = &minimal_adjustment {
            Estimand::Backdoor(z.clone())
        } else {
            Estimand::NotSupported
        };
        Ok(IdentifyReport {
            x: x.to_string(),
            y: y.to_string(),
            rule3_no_causal_path: rule3,
            given_adjustment: given,
            parent_adjustment,
            minimal_adjustment,
            estimand,
        })
    }

    /// Smallest backdoor-admissible set of observed non-descendants, searched by
    /// increasing size in lexicographic order.
    fn minimal_adjustment_set(&self, x: NodeId, y: NodeId) -> Result<Option<Vec<String>>> {
        const MAX_CANDIDATES: usize = 16;
        let desc = self.reach(&[x.0], true);
        let mut cands: Vec<&str> = self
            .ids()
            .filter(|&v| v != x && v != y && !desc[v.0] && self.kind(v) == NodeKind::Observed)
            .map(|v| self.name(v))
            .collect();
        cands.sort_unstable();
        if cands.len() > MAX_CANDIDATES {
            return Err(GraphError::NotSupported(format!(
                "adjustment search over {} candidates (limit {MAX_CANDIDATES})",
                cands.len()
            )));
        }
        let (xn, yn) = (self.name(x), self.name(y));
        for size in 0..=cands.len() {
            for combo in combinations(cands.len(), size) {
                let z: Vec<&str> = combo.iter().map(|&i| cands[i]).collect();
                if self.satisfies_backdoor_criterion(xn, yn, &z)? {
                    return Ok(Some(z.into_iter().map(String::from).collect()));
                }
            }
        }
        Ok(None)
    }
}

fn disjoint(g: &CausalGraph, sets: &[&[usize]]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for set in sets {
        let local: BTreeSet<usize> = set.iter().copied().collect();
        for v in local {
            if !seen.insert(v) {
                return Err(GraphError::OverlappingSets(g.names[v].clone()));
            }
        }
    }
    Ok(())
}

/// Index combinations of `size` elements out of `n`, in lexicographic order.
pub fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "adjust", rename_all = "snake_case")]
pub enum Estimand {
    /// `P(y | do(x)) = P(y)`
    NoEffect,
    /// `Σ_z P(y | x, z) P(z)`
    Backdoor(Vec<String>),
    NotSupported,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimand::NoEffect => write!(f, "P(y|do(x)) = P(y)"),
            Estimand::Backdoor(z) if z.is_empty() => write!(f, "P(y|do(x)) = P(y|x)"),
            Estimand::Backdoor(z) => {
                let z = z.join(",");
                write!(f, "P(y|do(x)) = Σ_{{{z}}} P(y|x,{z}) P({z})")
            }
            Estimand::NotSupported => write!(f, "NotSupported: no backdoor-admissible set of observed variables"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentifyReport {
    pub x: String,
    pub y: String,
    pub rule3_no_causal_path: bool,
    /// The caller's adjustment set and whether it satisfies the backdoor criterion.
    pub given_adjustment: Option<(Vec<String>, bool)>,
    /// Parents of `x`, when all are observed.
    pub parent_adjustment: Option<Vec<String>>,
    pub minimal_adjustment: Option<Vec<String>>,
    pub estimand: Estimand,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(names: &[&str], edges: &[(&str, &str)]) -> CausalGraph {
        CausalGraph::new(&GraphDoc::observed(names, edges)).unwrap()
    }

    fn fig2() -> CausalGraph {
        g(&["G", "S", "L"], &[("G", "S"), ("G", "L"), ("S", "L")])
    }

    fn kidney() -> CausalGraph {
        g(&["Sev", "T", "R"], &[("Sev", "T"), ("Sev", "R"), ("T", "R")])
    }

    fn chain() -> CausalGraph {
        g(&["X", "Z", "W"], &[("X", "Z"), ("Z", "W")])
    }

    #[test]
    fn validate_accepts_chain_and_rejects_bad_graphs() {
        assert!(validate(&GraphDoc::observed(&["A", "B", "C"], &[("A", "B"), ("B", "C")]), 32).is_ok());
        assert!(matches!(
            validate(&GraphDoc::observed(&["A", "B"], &[("A", "B"), ("B", "A")]), 32),
            Err(GraphError::CycleDetected(_))
        ));
        assert_eq!(
            validate(&GraphDoc::observed(&["A"], &[("A", "Z")]), 32),
            Err(GraphError::DanglingEdge("A".into(), "Z".into()))
        );
        assert_eq!(
            validate(&GraphDoc::observed(&["A", "A"], &[]), 32),
            Err(GraphError::DuplicateNode("A".into()))
        );
        assert!(matches!(
            validate(&GraphDoc::observed(&["A", "B"], &[("A", "B"), ("A", "B")]), 32),
            Err(GraphError::DuplicateEdge(..))
        ));
        assert!(matches!(validate(&GraphDoc::observed(&["A"], &[("A", "A")]), 32), Err(GraphError::SelfLoop(_))));
        assert!(matches!(validate(&GraphDoc::observed(&["1a"], &[]), 32), Err(GraphError::InvalidName(_))));
        assert!(matches!(
            validate(&GraphDoc::observed(&["A", "B", "C"], &[]), 2),
            Err(GraphError::GraphTooLarge { nodes: 3, limit: 2 })
        ));
    }

    #[test]
    fn cycle_report_lists_the_cycle() {
        let err = validate(&GraphDoc::observed(&["A", "B", "C"], &[("A", "B"), ("B", "C"), ("C", "A")]), 32).unwrap_err();
        let GraphError::CycleDetected(nodes) = err else { panic!() };
        assert_eq!(nodes.first(), nodes.last());
        assert_eq!(nodes.len(), 4);
    }

    #[test]
    fn selection_nodes_cannot_have_children() {
        let doc = GraphDoc {
            nodes: vec![
                NodeDecl { name: "S".into(), kind: NodeKind::Selection },
                NodeDecl { name: "A".into(), kind: NodeKind::Observed },
            ],
            edges: vec![("S".into(), "A".into())],
        };
        assert!(matches!(validate(&doc, 32), Err(GraphError::SelectionHasChildren(..))));
    }

    #[test]
    fn undirected_paths_fig2() {
        let paths = fig2().undirected_paths("S", "L").unwrap();
        let shown: Vec<String> = paths.iter().map(|p| p.to_string()).collect();
        assert_eq!(shown, vec!["S←G→L", "S→L"]);
        assert_eq!(chain().undirected_paths("X", "W").unwrap()[0].to_string(), "X→Z→W");
        assert!(g(&["A", "B"], &[]).undirected_paths("A", "B").unwrap().is_empty());
        assert!(matches!(fig2().undirected_paths("S", "Q"), Err(GraphError::UnknownNode(_))));
    }

    #[test]
    fn path_blocking_rules() {
        let c = chain();
        let p = &c.undirected_paths("X", "W").unwrap()[0];
        assert!(c.is_path_blocked(p, &["Z"]).unwrap());
        assert!(!c.is_path_blocked(p, &[]).unwrap());
        let col = g(&["A", "B", "C"], &[("A", "B"), ("C", "B")]);
        let p = &col.undirected_paths("A", "C").unwrap()[0];
        assert!(col.is_path_blocked(p, &[]).unwrap());
        assert!(!col.is_path_blocked(p, &["B"]).unwrap());
    }

    #[test]
    fn collider_opened_by_descendant() {
        let col = g(&["A", "B", "C", "D"], &[("A", "B"), ("C", "B"), ("B", "D")]);
        let p = &col.undirected_paths("A", "C").unwrap()[0];
        assert!(!col.is_path_blocked(p, &["D"]).unwrap());
        assert!(!col.is_d_separated(&["A"], &["C"], &["D"]).unwrap());
    }

    #[test]
    fn invalid_path_is_rejected() {
        let c = chain();
        let bogus = Path { nodes: vec!["X".into(), "W".into()], steps: vec![Step::Forward] };
        assert!(matches!(c.is_path_blocked(&bogus, &[]), Err(GraphError::InvalidPath(_))));
    }

    #[test]
    fn d_separation_collider_chain() {
        let g16 = g(&["X", "Y", "Z", "W"], &[("X", "Z"), ("Y", "Z"), ("Z", "W")]);
        assert!(g16.is_d_separated(&["X"], &["W"], &["Z"]).unwrap());
        assert!(g16.is_d_separated(&["X"], &["Y"], &[]).unwrap());
        assert!(!g16.is_d_separated(&["X"], &["Y"], &["Z"]).unwrap());
        assert!(!fig2().is_d_separated(&["S"], &["L"], &["G"]).unwrap());
        assert!(matches!(g16.is_d_separated(&["X"], &["X"], &[]), Err(GraphError::OverlappingSets(_))));
    }

    #[test]
    fn backdoor_paths_examples() {
        let bd = fig2().backdoor_paths("S", "L").unwrap();
        assert_eq!(bd.len(), 1);
        assert_eq!(bd[0].to_string(), "S←G→L");
        assert!(chain().backdoor_paths("X", "W").unwrap().is_empty());
    }

    #[test]
    fn backdoor_criterion_kidney() {
        let k = kidney();
        assert!(k.satisfies_backdoor_criterion("T", "R", &["Sev"]).unwrap());
        assert!(!k.satisfies_backdoor_criterion("T", "R", &[]).unwrap());
        assert!(chain().satisfies_backdoor_criterion("X", "W", &[]).unwrap());
        // z may not contain a descendant of x
        assert!(!chain().satisfies_backdoor_criterion("X", "W", &["Z"]).unwrap());
    }

    #[test]
    fn rule3_examples() {
        let sprinkler = g(&["Rain", "Sprinkler", "Wet"], &[("Rain", "Sprinkler"), ("Rain", "Wet"), ("Sprinkler", "Wet")]);
        assert!(sprinkler.rule3_applicable("Sprinkler", "Rain").unwrap());
        assert!(!sprinkler.rule3_applicable("Rain", "Wet").unwrap());
        assert!(kidney().rule3_applicable("T", "Sev").unwrap());
    }

    #[test]
    fn rule1_examples() {
        let k = kidney();
        assert!(k.rule1_applicable("R", "T", &[], &[]).unwrap());
        let iso = g(&["A", "Y", "B"], &[("A", "Y")]);
        assert!(iso.rule1_applicable("Y", "A", &["B"], &[]).unwrap());
        let direct = g(&["W", "Y", "A"], &[("W", "Y")]);
        assert!(!direct.rule1_applicable("Y", "A", &["W"], &[]).unwrap());
        // after do(T), Sev still reaches R directly
        assert!(!k.rule1_applicable("R", "T", &["Sev"], &[]).unwrap());
    }

    #[test]
    fn mutilation() {
        let m = kidney().mutilate(&["T"]).unwrap();
        let edges: Vec<(&str, &str)> = m.edges().collect();
        assert_eq!(edges, vec![("Sev", "R"), ("T", "R")]);
        assert_eq!(kidney().mutilate(&[]).unwrap(), kidney());
        let c = chain().mutilate(&["Z"]).unwrap();
        assert_eq!(c.edges().collect::<Vec<_>>(), vec![("Z", "W")]);
        assert!(matches!(chain().mutilate(&["Q"]), Err(GraphError::UnknownNode(_))));
        let once = kidney().mutilate(&["T"]).unwrap();
        assert_eq!(once.mutilate(&["T"]).unwrap(), once);
    }

    #[test]
    fn latent_nodes_are_not_intervenable() {
        let doc = GraphDoc {
            nodes: vec![
                NodeDecl { name: "U".into(), kind: NodeKind::Latent },
                NodeDecl { name: "X".into(), kind: NodeKind::Observed },
            ],
            edges: vec![("U".into(), "X".into())],
        };
        let g = CausalGraph::new(&doc).unwrap();
        assert!(matches!(g.mutilate(&["U"]), Err(GraphError::NotIntervenable(_))));
    }

    #[test]
    fn descendants_examples() {
        let c = chain();
        assert_eq!(c.descendants("X").unwrap(), ["Z", "W"].iter().map(|s| s.to_string()).collect());
        assert!(c.descendants("W").unwrap().is_empty());
        assert_eq!(fig2().descendants("G").unwrap(), ["L", "S"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn identify_kidney() {
        let r = kidney().identify("T", "R", Some(&["Sev"])).unwrap();
        assert!(!r.rule3_no_causal_path);
        assert_eq!(r.given_adjustment, Some((vec!["Sev".to_string()], true)));
        assert_eq!(r.minimal_adjustment, Some(vec!["Sev".to_string()]));
        assert_eq!(r.estimand, Estimand::Backdoor(vec!["Sev".into()]));
    }

    #[test]
    fn identify_with_latent_confounder_is_not_supported() {
        let doc = GraphDoc {
            nodes: vec![
                NodeDecl { name: "G".into(), kind: NodeKind::Latent },
                NodeDecl { name: "S".into(), kind: NodeKind::Observed },
                NodeDecl { name: "L".into(), kind: NodeKind::Observed },
            ],
            edges: vec![("G".into(), "S".into()), ("G".into(), "L".into()), ("S".into(), "L".into())],
        };
        let r = CausalGraph::new(&doc).unwrap().identify("S", "L", None).unwrap();
        assert_eq!(r.estimand, Estimand::NotSupported);
        assert_eq!(r.parent_adjustment, None);
    }

    #[test]
    fn combinations_enumerate_in_order() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
        assert_eq!(combinations(4, 4).len(), 1);
    }

    #[test]
    fn json_round_trip() {
        let g = fig2();
        let s = serde_json::to_string(&g).unwrap();
        let back: CausalGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
