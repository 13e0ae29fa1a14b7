use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("NotNormalized: entries sum to {0}")]
    NotNormalized(f64),
    #[error("NegativeEntry: {0:?} has probability {1}")]
    NegativeEntry(Vec<String>, f64),
    #[error("ArityMismatch: key {0:?} for {1} variables")]
    ArityMismatch(Vec<String>, usize),
    #[error("UnknownVariable: {0}")]
    UnknownVariable(String),
}

/// A joint distribution over named categorical variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableDoc", into = "TableDoc")]
pub struct ProbTable {
    variables: Vec<String>,
    entries: BTreeMap<Vec<String>, f64>,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    variables: Vec<String>,
    entries: Vec<EntryDoc>,
}

#[derive(Serialize, Deserialize)]
struct EntryDoc {
    states: Vec<String>,
    p: f64,
}

impl TryFrom<TableDoc> for ProbTable {
    type Error = TableError;
    fn try_from(doc: TableDoc) -> Result<Self, TableError> {
        ProbTable::new(doc.variables, doc.entries.into_iter().map(|e| (e.states, e.p)).collect())
    }
}

impl From<ProbTable> for TableDoc {
    fn from(t: ProbTable) -> Self {
        TableDoc {
            variables: t.variables,
            entries: t.entries.into_iter().map(|(states, p)| EntryDoc { states, p }).collect(),
        }
    }
}

impl ProbTable {
    pub fn new(variables: Vec<String>, entries: BTreeMap<Vec<String>, f64>) -> Result<Self, TableError> {
        let mut total = 0.0;
        for (k, &p) in &entries {
            if k.len() != variables.len() {
                return Err(TableError::ArityMismatch(k.clone(), variables.len()));
            }
            if p < 0.0 || !p.is_finite() {
                return Err(TableError::NegativeEntry(k.clone(), p));
            }
            total += p;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(TableError::NotNormalized(total));
        }
        Ok(ProbTable { variables, entries })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn entries(&self) -> &BTreeMap<Vec<String>, f64> {
        &self.entries
    }

    /// Probability of a state tuple; tuples absent from the table have probability 0.
    pub fn get(&self, states: &[&str]) -> f64 {
        let key: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Sums out `var`.
    pub fn marginalize(&self, var: &str) -> Result<ProbTable, TableError> {
        let pos = self
            .variables
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| TableError::UnknownVariable(var.to_string()))?;
        let mut vars = self.variables.clone();
        vars.remove(pos);
        let mut entries: BTreeMap<Vec<String>, f64> = BTreeMap::new();
        for (k, &p) in &self.entries {
            let mut k = k.clone();
            k.remove(pos);
            *entries.entry(k).or_insert(0.0) += p;
        }
        Ok(ProbTable { variables: vars, entries })
    }

    /// Sum of absolute differences over the union of both supports.
    pub fn l1_distance(&self, other: &ProbTable) -> f64 {
        let mut d = 0.0;
        for (k, &p) in &self.entries {
            d += (p - other.entries.get(k).copied().unwrap_or(0.0)).abs();
        }
        for (k, &q) in &other.entries {
            if !self.entries.contains_key(k) {
                d += q.abs();
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(a: &[&str]) -> Vec<String> {
        a.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn validation_and_marginal() {
        let mut e = BTreeMap::new();
        e.insert(key(&["0", "0"]), 0.1);
        e.insert(key(&["0", "1"]), 0.2);
        e.insert(key(&["1", "0"]), 0.3);
        e.insert(key(&["1", "1"]), 0.4);
        let t = ProbTable::new(key(&["A", "B"]), e.clone()).unwrap();
        let m = t.marginalize("B").unwrap();
        assert!((m.get(&["0"]) - 0.3).abs() < 1e-12);
        assert!((m.get(&["1"]) - 0.7).abs() < 1e-12);
        e.insert(key(&["1", "1"]), 0.5);
        assert!(matches!(ProbTable::new(key(&["A", "B"]), e), Err(TableError::NotNormalized(_))));
    }

    #[test]
    fn json_round_trip() {
        let mut e = BTreeMap::new();
        e.insert(key(&["a"]), 1.0 / 3.0);
        e.insert(key(&["b"]), 2.0 / 3.0);
        let t = ProbTable::new(key(&["V"]), e).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: ProbTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
