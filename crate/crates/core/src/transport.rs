//! Selection-bias checks on graphs with selection nodes, stratified de-biasing,
//! and re-weighting of stratum effects into a target population.

use crate::data::{Cell, DiscreteDataset};
use crate::estimation::{EstimationError, Result as EstResult};
use crate::graph::{CausalGraph, GraphError, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStatus {
    pub path: String,
    pub nodes: Vec<String>,
    pub blocked_without_selection: bool,
    pub blocked_given_selection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub selection_nodes: Vec<String>,
    pub paths: Vec<PathStatus>,
    pub biased: bool,
}

/// Lists the backdoor paths from `x` to `y` passing through a selection node and
/// checks each with and without conditioning on every selection node.
pub fn detect_selection_bias(g: &CausalGraph, x: &str, y: &str) -> Result<SelectionReport, GraphError> {
    let selection: Vec<&str> = g.nodes_of_kind(NodeKind::Selection);
    let mut paths = Vec::new();
    for p in g.backdoor_paths(x, y)? {
        if !p.nodes.iter().any(|n| selection.contains(&n.as_str())) {
            continue;
        }
        paths.push(PathStatus {
            path: p.to_string(),
            blocked_without_selection: g.is_path_blocked(&p, &[])?,
            blocked_given_selection: g.is_path_blocked(&p, &selection)?,
            nodes: p.nodes,
        });
    }
    let biased = paths.iter().any(|p| !p.blocked_given_selection);
    Ok(SelectionReport { selection_nodes: selection.iter().map(|s| s.to_string()).collect(), paths, biased })
}

/// `Σ_s P(y | x, s) P(s | x)` over the joint states of `strata`.
///
/// `P(y | x, s)` uses the rows where `y` is observed, `P(s | x)` uses every row
/// where `x` and the strata are observed. On complete data this is `P(y | x)`.
pub fn stratified_debias(
    ds: &DiscreteDataset,
    x: &str,
    x_val: &str,
    y: &str,
    y_val: &str,
    strata: &[&str],
) -> EstResult<f64> {
    let (xc, xs) = ds.state_of(x, x_val)?;
    let (yc, ys) = ds.state_of(y, y_val)?;
    let sc: Vec<usize> = strata.iter().map(|s| ds.index_of(s)).collect::<Result<_, _>>()?;
    // stratum -> (rows with x, rows with x and y observed, rows with x and y=y_val)
    let mut counts: BTreeMap<Vec<u32>, (usize, usize, usize)> = BTreeMap::new();
    let mut n_x = 0usize;
    for r in ds.rows() {
        if r[xc] != Some(xs) {
            continue;
        }
        let key: Option<Vec<u32>> = sc.iter().map(|&c| r[c]).collect();
        let Some(key) = key else { continue };
        n_x += 1;
        let e = counts.entry(key).or_default();
        e.0 += 1;
        if let Some(yv) = r[yc] {
            e.1 += 1;
            if yv == ys {
                e.2 += 1;
            }
        }
    }
    if n_x == 0 {
        return Err(EstimationError::EmptyStratum(format!("{x}={x_val}")));
    }
    let mut total = 0.0;
    for (key, &(n_s, n_obs, n_y)) in &counts {
        if n_obs == 0 {
            let label: Vec<String> = sc
                .iter()
                .zip(key)
                .map(|(&c, &s)| format!("{}={}", ds.column(c).name, ds.column(c).states[s as usize]))
                .chain(std::iter::once(format!("{x}={x_val}")))
                .collect();
            return Err(EstimationError::EmptyStratum(label.join(",")));
        }
        total += (n_y as f64 / n_obs as f64) * (n_s as f64 / n_x as f64);
    }
    Ok(total)
}

/// Copy of `ds` with the cells of `masked` set to missing on rows where
/// `selection != selected`.
pub fn mask_unselected(ds: &DiscreteDataset, selection: &str, selected: &str, masked: &[&str]) -> EstResult<DiscreteDataset> {
    let (sc, ss) = ds.state_of(selection, selected)?;
    let mc: Vec<usize> = masked.iter().map(|m| ds.index_of(m)).collect::<Result<_, _>>()?;
    let mut out = ds.clone();
    for (i, r) in ds.rows().iter().enumerate() {
        if r[sc] != Some(ss) {
            for &c in &mc {
                out.set_cell(i, c, Cell::None);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("WeightMismatch: {0}")]
    WeightMismatch(String),
    #[error("WeightsNotNormalized: weights sum to {0}")]
    WeightsNotNormalized(f64),
    #[error("InvalidValue: {0}")]
    InvalidValue(String),
}

/// Per-stratum effects measured in a source study and the target population's
/// stratum distribution. The effects are assumed invariant across populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEffects {
    pub stratum: String,
    pub effects: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
}

impl StratumEffects {
    pub fn validate(&self) -> Result<(), TransportError> {
        for k in self.effects.keys() {
            if !self.weights.contains_key(k) {
                return Err(TransportError::WeightMismatch(format!("no weight for stratum {k:?}")));
            }
        }
        for k in self.weights.keys() {
            if !self.effects.contains_key(k) {
                return Err(TransportError::WeightMismatch(format!("no effect for stratum {k:?}")));
            }
        }
        for (k, &v) in &self.effects {
            if !v.is_finite() {
                return Err(TransportError::InvalidValue(format!("effect for {k:?} is {v}")));
            }
        }
        for (k, &w) in &self.weights {
            if !w.is_finite() || w < 0.0 {
                return Err(TransportError::InvalidValue(format!("weight for {k:?} is {w}")));
            }
        }
        let total: f64 = self.weights.values().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(TransportError::WeightsNotNormalized(total));
        }
        Ok(())
    }
}

/// `Σ_s effect(s) · weight(s)`.
pub fn transport_estimate(se: &StratumEffects) -> Result<f64, TransportError> {
    se.validate()?;
    Ok(se.effects.iter().map(|(k, e)| e * se.weights[k]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::graph::{GraphDoc, NodeDecl};

    fn covid() -> CausalGraph {
        let node = |n: &str, kind| NodeDecl { name: n.into(), kind };
        CausalGraph::new(&GraphDoc {
            nodes: vec![
                node("Risk", NodeKind::Observed),
                node("Virus", NodeKind::Observed),
                node("Test", NodeKind::Observed),
                node("Antibody", NodeKind::Observed),
                node("S", NodeKind::Selection),
            ],
            edges: [("Risk", "Test"), ("Risk", "S"), ("Virus", "S"), ("Virus", "Antibody"), ("Test", "Antibody")]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        })
        .unwrap()
    }

    #[test]
    fn covid_selection_path() {
        let r = detect_selection_bias(&covid(), "Test", "Antibody").unwrap();
        assert_eq!(r.paths.len(), 1);
        assert_eq!(r.paths[0].path, "Test←Risk→S←Virus→Antibody");
        assert!(r.paths[0].blocked_without_selection);
        assert!(!r.paths[0].blocked_given_selection);
        assert!(r.biased);
    }

    #[test]
    fn no_selection_node_no_report() {
        let g = CausalGraph::new(&GraphDoc::observed(&["Z", "X", "Y"], &[("Z", "X"), ("Z", "Y"), ("X", "Y")])).unwrap();
        let r = detect_selection_bias(&g, "X", "Y").unwrap();
        assert!(r.paths.is_empty());
        assert!(!r.biased);
    }

    fn effects(e: &[f64], w: &[f64]) -> StratumEffects {
        StratumEffects {
            stratum: "age".into(),
            effects: e.iter().enumerate().map(|(i, v)| (format!("g{i}"), *v)).collect(),
            weights: w.iter().enumerate().map(|(i, v)| (format!("g{i}"), *v)).collect(),
        }
    }

    #[test]
    fn transport_weighted_sum() {
        let se = effects(&[0.1, 0.2, 0.3, 0.4, 0.5], &[0.1, 0.2, 0.4, 0.2, 0.1]);
        let oracle = 0.1 * 0.1 + 0.2 * 0.2 + 0.3 * 0.4 + 0.4 * 0.2 + 0.5 * 0.1;
        assert!((transport_estimate(&se).unwrap() - oracle).abs() < 1e-12);
        assert!((transport_estimate(&effects(&[0.7; 3], &[0.2, 0.3, 0.5])).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(transport_estimate(&effects(&[0.1, 0.9], &[0.0, 1.0])).unwrap(), 0.9);
    }

    #[test]
    fn transport_validation() {
        assert!(matches!(
            transport_estimate(&effects(&[0.1, 0.2], &[0.5, 0.6])),
            Err(TransportError::WeightsNotNormalized(_))
        ));
        let mut se = effects(&[0.1, 0.2], &[0.5, 0.5]);
        se.weights.insert("other".into(), 0.0);
        assert!(matches!(transport_estimate(&se), Err(TransportError::WeightMismatch(_))));
        let json = r#"{"stratum":"age","effects":{"<10":0.1,"10-20":0.3},"weights":{"<10":0.5,"10-20":0.5}}"#;
        let se: StratumEffects = serde_json::from_str(json).unwrap();
        assert!((transport_estimate(&se).unwrap() - 0.2).abs() < 1e-12);
    }

    fn ds(rows: &[(&str, &str, Option<&str>)]) -> DiscreteDataset {
        let mut d = DiscreteDataset::new(vec![
            Column::new("Z", &["0", "1"]),
            Column::new("X", &["0", "1"]),
            Column::new("Y", &["0", "1"]),
        ])
        .unwrap();
        for (z, x, y) in rows {
            d.push_labels(&[Some(z), Some(x), *y]).unwrap();
        }
        d
    }

    #[test]
    fn debias_reduces_to_conditional_on_complete_data() {
        let d = ds(&[("0", "1", Some("1")), ("0", "1", Some("0")), ("1", "1", Some("1")), ("1", "0", Some("0"))]);
        let plain = crate::estimation::empirical_conditional(&d, "Y", &"X=1".parse().unwrap()).unwrap()[1];
        assert!((stratified_debias(&d, "X", "1", "Y", "1", &["Z"]).unwrap() - plain).abs() < 1e-12);
        assert!((stratified_debias(&d, "X", "1", "Y", "1", &[]).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn debias_uses_population_strata_weights() {
        // Y observed in one Z=0 row of three; the Z weights still come from all X=1 rows.
        let d = ds(&[
            ("0", "1", Some("1")),
            ("0", "1", None),
            ("0", "1", None),
            ("1", "1", Some("0")),
        ]);
        let p = stratified_debias(&d, "X", "1", "Y", "1", &["Z"]).unwrap();
        assert!((p - 0.75).abs() < 1e-12);
        let gap = ds(&[("0", "1", Some("1")), ("1", "1", None)]);
        assert!(matches!(stratified_debias(&gap, "X", "1", "Y", "1", &["Z"]), Err(EstimationError::EmptyStratum(_))));
    }

    #[test]
    fn masking_unselected_rows() {
        let mut d = DiscreteDataset::new(vec![Column::new("S", &["0", "1"]), Column::new("Y", &["0", "1"])]).unwrap();
        d.push_labels(&[Some("0"), Some("1")]).unwrap();
        d.push_labels(&[Some("1"), Some("1")]).unwrap();
        let m = mask_unselected(&d, "S", "1", &["Y"]).unwrap();
        assert_eq!(m.missing_count(1), 1);
        assert_eq!(m.rows()[1][1], Some(1));
    }
}
