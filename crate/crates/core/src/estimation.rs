//! Frequency estimates from categorical data and backdoor-adjusted
//! interventional probabilities.

use crate::assignment::Assignment;
use crate::data::{DataError, DiscreteDataset};
use crate::table::ProbTable;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("EmptySelection: no complete rows over {0}")]
    EmptySelection(String),
    #[error("EmptyStratum: no complete rows with {0}")]
    EmptyStratum(String),
    #[error("PositivityViolation: stratum {0} has no rows")]
    PositivityViolation(String),
    #[error("NotBinary: {var} has {states} states, expected 2")]
    NotBinary { var: String, states: usize },
    #[error("EmptyVariableList")]
    EmptyVariableList,
}

pub type Result<T, E = EstimationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Smoothing {
    #[default]
    None,
    /// Add-one counts on every cell of the conditional and stratum tables.
    Laplace,
}

/// Every state tuple for columns of the given cardinalities, first column most significant.
pub fn state_space(cards: &[usize]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..c as u32).map(move |s| {
                    let mut p = prefix.clone();
                    p.push(s);
                    p
                })
            })
            .collect();
    }
    out
}

fn indices(ds: &DiscreteDataset, vars: &[&str]) -> Result<Vec<usize>> {
    Ok(vars.iter().map(|v| ds.index_of(v)).collect::<Result<_, _>>()?)
}

fn stratum_label(ds: &DiscreteDataset, cols: &[usize], states: &[u32]) -> String {
    cols.iter()
        .zip(states)
        .map(|(&c, &s)| format!("{}={}", ds.column(c).name, ds.column(c).states[s as usize]))
        .collect::<Vec<_>>()
        .join(",")
}

/// Relative frequencies over `vars`, complete rows only. Every state tuple is listed.
pub fn empirical_joint(ds: &DiscreteDataset, vars: &[&str]) -> Result<ProbTable> {
    if vars.is_empty() {
        return Err(EstimationError::EmptyVariableList);
    }
    let cols = indices(ds, vars)?;
    let counts = ds.counts(&cols);
    let n: usize = counts.values().sum();
    if n == 0 {
        return Err(EstimationError::EmptySelection(vars.join(",")));
    }
    let cards: Vec<usize> = cols.iter().map(|&c| ds.column(c).cardinality()).collect();
    let entries: BTreeMap<Vec<String>, f64> = state_space(&cards)
        .into_iter()
        .map(|key| {
            let p = counts.get(&key).copied().unwrap_or(0) as f64 / n as f64;
            let labels = cols.iter().zip(&key).map(|(&c, &s)| ds.column(c).states[s as usize].clone()).collect();
            (labels, p)
        })
        .collect();
    ProbTable::new(vars.iter().map(|s| s.to_string()).collect(), entries)
        .map_err(|e| EstimationError::EmptySelection(e.to_string()))
}

/// Distribution of `target` among complete rows matching `given`, in state order.
pub fn empirical_conditional(ds: &DiscreteDataset, target: &str, given: &Assignment) -> Result<Vec<f64>> {
    let t = ds.index_of(target)?;
    let conds = ds.resolve(given)?;
    let mut counts = vec![0usize; ds.column(t).cardinality()];
    for r in ds.rows() {
        if conds.iter().all(|&(c, s)| r[c] == Some(s)) {
            if let Some(s) = r[t] {
                counts[s as usize] += 1;
            }
        }
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(EstimationError::EmptyStratum(given.to_string()));
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Counts needed by both adjustment forms, over rows complete in x, y and z.
struct AdjustCounts {
    n: usize,
    /// z-state -> (n_z, n_xz, n_xyz)
    strata: BTreeMap<Vec<u32>, (usize, usize, usize)>,
    z_cols: Vec<usize>,
    y_card: usize,
    z_cards: Vec<usize>,
}

fn adjust_counts(ds: &DiscreteDataset, x: &str, x_val: &str, y: &str, y_val: &str, z: &[&str]) -> Result<AdjustCounts> {
    let (xc, xs) = ds.state_of(x, x_val)?;
    let (yc, ys) = ds.state_of(y, y_val)?;
    let z_cols = indices(ds, z)?;
    let mut strata: BTreeMap<Vec<u32>, (usize, usize, usize)> = BTreeMap::new();
    let mut n = 0;
    'rows: for r in ds.rows() {
        let (Some(xv), Some(yv)) = (r[xc], r[yc]) else { continue };
        let mut key = Vec::with_capacity(z_cols.len());
        for &c in &z_cols {
            match r[c] {
                Some(s) => key.push(s),
                None => continue 'rows,
            }
        }
        n += 1;
        let e = strata.entry(key).or_default();
        e.0 += 1;
        if xv == xs {
            e.1 += 1;
            if yv == ys {
                e.2 += 1;
            }
        }
    }
    if n == 0 {
        return Err(EstimationError::EmptySelection([x, y].iter().chain(z).copied().collect::<Vec<_>>().join(",")));
    }
    let y_card = ds.column(yc).cardinality();
    let z_cards = z_cols.iter().map(|&c| ds.column(c).cardinality()).collect();
    Ok(AdjustCounts { n, strata, z_cols, y_card, z_cards })
}

/// `Σ_z P(y | x, z) P(z)`.
pub fn backdoor_adjust(ds: &DiscreteDataset, x: &str, x_val: &str, y: &str, y_val: &str, z: &[&str]) -> Result<f64> {
    backdoor_adjust_with(ds, x, x_val, y, y_val, z, Smoothing::None)
}

pub fn backdoor_adjust_with(
    ds: &DiscreteDataset,
    x: &str,
    x_val: &str,
    y: &str,
    y_val: &str,
    z: &[&str],
    smoothing: Smoothing,
) -> Result<f64> {
    let c = adjust_counts(ds, x, x_val, y, y_val, z)?;
    match smoothing {
        Smoothing::None => {
            let mut total = 0.0;
            for (key, &(nz, nxz, nxyz)) in &c.strata {
                if nxz == 0 {
                    return Err(EstimationError::PositivityViolation(stratum_label(ds, &c.z_cols, key)));
                }
                total += (nxyz as f64 / nxz as f64) * (nz as f64 / c.n as f64);
            }
            Ok(total)
        }
        Smoothing::Laplace => {
            let space = state_space(&c.z_cards);
            let k = space.len() as f64;
            Ok(space
                .iter()
                .map(|key| {
                    let (nz, nxz, nxyz) = c.strata.get(key).copied().unwrap_or_default();
                    let py = (nxyz as f64 + 1.0) / (nxz as f64 + c.y_card as f64);
                    let pz = (nz as f64 + 1.0) / (c.n as f64 + k);
                    py * pz
                })
                .sum())
        }
    }
}

/// `Σ_z P(x, y, z) / P(x | z)`; algebraically equal to [`backdoor_adjust`].
pub fn backdoor_adjust_ratio(ds: &DiscreteDataset, x: &str, x_val: &str, y: &str, y_val: &str, z: &[&str]) -> Result<f64> {
    let c = adjust_counts(ds, x, x_val, y, y_val, z)?;
    let n = c.n as f64;
    let mut total = 0.0;
    for (key, &(nz, nxz, nxyz)) in &c.strata {
        if nxz == 0 {
            return Err(EstimationError::PositivityViolation(stratum_label(ds, &c.z_cols, key)));
        }
        let p_xyz = nxyz as f64 / n;
        let p_x_given_z = nxz as f64 / nz as f64;
        total += p_xyz / p_x_given_z;
    }
    Ok(total)
}

/// `P(y | do(treat)) - P(y | do(control))` with both terms adjusted for `z`.
pub fn compute_ace(
    ds: &DiscreteDataset,
    x: &str,
    treat: &str,
    control: &str,
    y: &str,
    y_val: &str,
    z: &[&str],
) -> Result<f64> {
    Ok(backdoor_adjust(ds, x, treat, y, y_val, z)? - backdoor_adjust(ds, x, control, y, y_val, z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimpsonVerdict {
    /// Strata agree with each other and the aggregate points the other way.
    Reversal,
    Consistent,
    /// Strata disagree among themselves.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmComparison {
    /// `P(y | x=first)` and `P(y | x=second)` under the row's conditioning.
    pub rates: [f64; 2],
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpsonReport {
    pub x_states: [String; 2],
    pub aggregate: ArmComparison,
    pub strata: Vec<(String, ArmComparison)>,
    pub verdict: SimpsonVerdict,
    pub reversal: bool,
}

fn sign(a: f64, b: f64) -> i8 {
    match a.partial_cmp(&b) {
        Some(Ordering::Greater) => 1,
        Some(Ordering::Less) => -1,
        _ => 0,
    }
}

/// Compares `P(y=y_val | x)` for the two states of a binary `x`, overall and within each z stratum.
pub fn detect_simpson_reversal(ds: &DiscreteDataset, x: &str, y: &str, y_val: &str, z: &[&str]) -> Result<SimpsonReport> {
    let xc = ds.index_of(x)?;
    let x_col = ds.column(xc);
    if x_col.cardinality() != 2 {
        return Err(EstimationError::NotBinary { var: x.to_string(), states: x_col.cardinality() });
    }
    let (_, ys) = ds.state_of(y, y_val)?;
    let x_states = [x_col.states[0].clone(), x_col.states[1].clone()];
    let compare = |given: &Assignment| -> Result<ArmComparison> {
        let mut rates = [0.0; 2];
        for (i, xs) in x_states.iter().enumerate() {
            let g = given.clone().with(x, xs);
            rates[i] = empirical_conditional(ds, y, &g)?[ys as usize];
        }
        Ok(ArmComparison { rates, sign: sign(rates[0], rates[1]) })
    };
    let aggregate = compare(&Assignment::new())?;
    let z_cols = indices(ds, z)?;
    let mut strata = Vec::new();
    for key in ds.counts(&z_cols).keys() {
        let given: Assignment = z_cols
            .iter()
            .zip(key)
            .map(|(&c, &s)| (ds.column(c).name.as_str(), ds.column(c).states[s as usize].as_str()))
            .collect();
        strata.push((given.to_string(), compare(&given)?));
    }
    let first = strata.first().map(|s| s.1.sign);
    let unanimous = strata.iter().all(|s| Some(s.1.sign) == first);
    let (verdict, reversal) = match first {
        Some(s) if unanimous && s != 0 && aggregate.sign != s => (SimpsonVerdict::Reversal, true),
        _ if !unanimous => (SimpsonVerdict::Mixed, false),
        _ => (SimpsonVerdict::Consistent, false),
    };
    Ok(SimpsonReport { x_states, aggregate, strata, verdict, reversal })
}
