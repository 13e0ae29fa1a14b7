//! Categorical datasets with optional missing cells, plus CSV ingestion and output.
//!
//! Cells hold indices into the column's state list. CSV ingestion treats an
//! empty cell or a literal `NA` as missing, and collects each column's states
//! in sorted order so the encoding is independent of row order.

use crate::assignment::Assignment;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use thiserror::Error;

pub const MISSING: &str = "NA";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("UnknownColumn: {0}")]
    UnknownColumn(String),
    #[error("UnknownState: {state:?} is not a state of {column}")]
    UnknownState { column: String, state: String },
    #[error("DuplicateColumn: {0}")]
    DuplicateColumn(String),
    #[error("RowArity: row {row} has {found} cells, expected {expected}")]
    RowArity { row: usize, found: usize, expected: usize },
    #[error("Csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub states: Vec<String>,
}

impl Column {
    pub fn new(name: &str, states: &[&str]) -> Self {
        Column { name: name.to_string(), states: states.iter().map(|s| s.to_string()).collect() }
    }

    pub fn state_index(&self, label: &str) -> Option<u32> {
        self.states.iter().position(|s| s == label).map(|i| i as u32)
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }
}

pub type Cell = Option<u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteDataset {
    columns: Vec<Column>,
    rows: Vec<Vec<Cell>>,
}

impl DiscreteDataset {
    pub fn new(columns: Vec<Column>) -> Result<Self, DataError> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(DiscreteDataset { columns, rows: Vec::new() })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, DataError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    pub fn state_of(&self, column: &str, label: &str) -> Result<(usize, u32), DataError> {
        let idx = self.index_of(column)?;
        let s = self.columns[idx].state_index(label).ok_or_else(|| DataError::UnknownState {
            column: column.to_string(),
            state: label.to_string(),
        })?;
        Ok((idx, s))
    }

    /// Resolves an assignment to (column, state) index pairs.
    pub fn resolve(&self, a: &Assignment) -> Result<Vec<(usize, u32)>, DataError> {
        a.iter().map(|(k, v)| self.state_of(k, v)).collect()
    }

    pub fn push_cells(&mut self, row: Vec<Cell>) -> Result<(), DataError> {
        if row.len() != self.columns.len() {
            return Err(DataError::RowArity { row: self.rows.len(), found: row.len(), expected: self.columns.len() });
        }
        for (c, cell) in row.iter().enumerate() {
            if let Some(s) = cell {
                if *s as usize >= self.columns[c].states.len() {
                    return Err(DataError::UnknownState {
                        column: self.columns[c].name.clone(),
                        state: format!("#{s}"),
                    });
                }
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Appends a row of labels; `None` or `"NA"` marks a missing cell.
    pub fn push_labels(&mut self, labels: &[Option<&str>]) -> Result<(), DataError> {
        if labels.len() != self.columns.len() {
            return Err(DataError::RowArity { row: self.rows.len(), found: labels.len(), expected: self.columns.len() });
        }
        let mut row = Vec::with_capacity(labels.len());
        for (c, l) in labels.iter().enumerate() {
            row.push(match l {
                None => None,
                Some(l) if *l == MISSING => None,
                Some(l) => Some(self.columns[c].state_index(l).ok_or_else(|| DataError::UnknownState {
                    column: self.columns[c].name.clone(),
                    state: l.to_string(),
                })?),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn label(&self, row: usize, col: usize) -> Option<&str> {
        self.rows[row][col].map(|s| self.columns[col].states[s as usize].as_str())
    }

    /// Appends a new column; `cells` must have one entry per row.
    pub fn with_column(mut self, column: Column, cells: Vec<Cell>) -> Result<Self, DataError> {
        if self.has_column(&column.name) {
            return Err(DataError::DuplicateColumn(column.name));
        }
        if cells.len() != self.rows.len() {
            return Err(DataError::RowArity { row: self.rows.len(), found: cells.len(), expected: self.rows.len() });
        }
        self.columns.push(column);
        for (row, cell) in self.rows.iter_mut().zip(cells) {
            row.push(cell);
        }
        Ok(self)
    }

    pub fn set_cell(&mut self, row: usize, col: usize, cell: Cell) {
        self.rows[row][col] = cell;
    }

    /// Projection onto the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<DiscreteDataset, DataError> {
        let idx: Vec<usize> = names.iter().map(|n| self.index_of(n)).collect::<Result<_, _>>()?;
        let mut out = DiscreteDataset::new(idx.iter().map(|&i| self.columns[i].clone()).collect())?;
        out.rows = self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
        Ok(out)
    }

    /// Rows restricted to those matching every (column, state) pair.
    pub fn filter(&self, conds: &[(usize, u32)]) -> DiscreteDataset {
        DiscreteDataset {
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| conds.iter().all(|&(c, s)| r[c] == Some(s)))
                .cloned()
                .collect(),
        }
    }

    /// Counts of complete (non-missing) configurations over `cols`.
    pub fn counts(&self, cols: &[usize]) -> BTreeMap<Vec<u32>, usize> {
        let mut out = BTreeMap::new();
        'rows: for r in &self.rows {
            let mut key = Vec::with_capacity(cols.len());
            for &c in cols {
                match r[c] {
                    Some(s) => key.push(s),
                    None => continue 'rows,
                }
            }
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    pub fn missing_count(&self, col: usize) -> usize {
        self.rows.iter().filter(|r| r[col].is_none()).count()
    }

    pub fn read_csv<R: Read>(reader: R, delimiter: u8) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut raw: Vec<Vec<Option<String>>> = Vec::new();
        let mut states: Vec<BTreeSet<String>> = vec![BTreeSet::new(); headers.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(DataError::RowArity { row: i, found: rec.len(), expected: headers.len() });
            }
            let row: Vec<Option<String>> = rec
                .iter()
                .map(|c| {
                    let c = c.trim();
                    (!c.is_empty() && c != MISSING).then(|| c.to_string())
                })
                .collect();
            for (c, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    states[c].insert(v.clone());
                }
            }
            raw.push(row);
        }
        let columns: Vec<Column> = headers
            .into_iter()
            .zip(states)
            .map(|(name, s)| Column { name, states: s.into_iter().collect() })
            .collect();
        let mut ds = DiscreteDataset::new(columns)?;
        ds.rows.reserve(raw.len());
        for row in raw {
            let cells = row
                .iter()
                .enumerate()
                .map(|(c, v)| v.as_ref().and_then(|v| ds.columns[c].state_index(v)))
                .collect();
            ds.rows.push(cells);
        }
        Ok(ds)
    }

    pub fn read_csv_path(path: &std::path::Path, delimiter: u8) -> Result<Self, DataError> {
        Self::read_csv(std::fs::File::open(path)?, delimiter)
    }

    pub fn write_csv<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), DataError> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in 0..self.rows.len() {
            w.write_record((0..self.columns.len()).map(|c| self.label(r, c).unwrap_or(MISSING)))?;
        }
        w.flush()?;
        Ok(())
    }
}
