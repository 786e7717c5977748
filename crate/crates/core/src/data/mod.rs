//! Heterogeneous tabular data with explicit missingness: schema and cell
//! types, the immutable [`Dataset`] store, and the row/column views
//! ([`DataSlice`]) that the recursive learners work on.

mod load;
mod synth;

pub use load::{
    load_benchmark_file, load_benchmark_triplet, load_mixed_csv, load_mixed_csv_with_kinds,
    write_benchmark_file, write_mixed_csv,
};
pub use synth::{generate_synthetic, SynthSpec, Synthetic};

use crate::spn::VarId;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
    #[error("variable {0} is not continuous")]
    NotContinuous(usize),
    #[error("validation fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("need at least 2 rows to split off a validation set")]
    TooFewRows,
    #[error("a dataset needs at least one variable")]
    EmptySchema,
    #[error("missing rate {0} must lie in [0, 1)")]
    InvalidMissingRate(f64),
}

/// Column type: categorical with a fixed arity, or real-valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Discrete { arity: u32 },
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnMeta {
    pub fn discrete(name: impl Into<String>, arity: u32) -> ColumnMeta {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Discrete { arity },
        }
    }

    pub fn continuous(name: impl Into<String>) -> ColumnMeta {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }
}

/// One observed (or missing) value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Discrete(u32),
    Continuous(f64),
    Missing,
}

impl Cell {
    pub fn is_missing(self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Immutable table of cells, row-major, with a typed schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Vec<ColumnMeta>,
    cells: Vec<Cell>,
    n_rows: usize,
}

impl Dataset {
    /// Builds a dataset and audits it against the schema invariants.
    pub fn new(
        schema: Vec<ColumnMeta>,
        rows: impl IntoIterator<Item = Vec<Cell>>,
    ) -> Result<Dataset, DataError> {
        let n_cols = schema.len();
        let mut cells = Vec::new();
        let mut n_rows = 0;
        for row in rows {
            if row.len() != n_cols {
                return Err(DataError::InvalidDataset(format!(
                    "row {n_rows} has {} cells, schema has {n_cols}",
                    row.len()
                )));
            }
            cells.extend(row);
            n_rows += 1;
        }
        let ds = Dataset {
            schema,
            cells,
            n_rows,
        };
        ds.audit()?;
        Ok(ds)
    }

    /// Shared audit: every cell must match its column's kind, discrete values
    /// must respect the arity, continuous values must be finite.
    pub fn audit(&self) -> Result<(), DataError> {
        if self.schema.is_empty() {
            return Err(DataError::EmptySchema);
        }
        for (i, meta) in self.schema.iter().enumerate() {
            if self.schema[..i].iter().any(|m| m.name == meta.name) {
                return Err(DataError::InvalidDataset(format!(
                    "duplicate column name {:?}",
                    meta.name
                )));
            }
            if let ColumnKind::Discrete { arity } = meta.kind {
                if arity < 2 {
                    return Err(DataError::InvalidDataset(format!(
                        "column {:?} has arity {arity}, need at least 2",
                        meta.name
                    )));
                }
            }
        }
        for r in 0..self.n_rows {
            for (c, meta) in self.schema.iter().enumerate() {
                match (meta.kind, self.cell(r, c)) {
                    (_, Cell::Missing) => {}
                    (ColumnKind::Discrete { arity }, Cell::Discrete(v)) => {
                        if v >= arity {
                            return Err(DataError::InvalidDataset(format!(
                                "row {r} column {:?}: value {v} exceeds arity {arity}",
                                meta.name
                            )));
                        }
                    }
                    (ColumnKind::Continuous, Cell::Continuous(x)) => {
                        if !x.is_finite() {
                            return Err(DataError::InvalidDataset(format!(
                                "row {r} column {:?}: non-finite value",
                                meta.name
                            )));
                        }
                    }
                    _ => {
                        return Err(DataError::InvalidDataset(format!(
                            "row {r} column {:?}: cell kind does not match column kind",
                            meta.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &[ColumnMeta] {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, r: usize) -> &[Cell] {
        let w = self.n_cols();
        &self.cells[r * w..(r + 1) * w]
    }

    #[inline]
    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.n_cols() + c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Cell]> {
        (0..self.n_rows).map(move |r| self.row(r))
    }

    /// View of the whole table.
    pub fn full_slice(&self) -> DataSlice<'_> {
        DataSlice {
            data: self,
            rows: (0..self.n_rows).collect(),
            vars: (0..self.n_cols()).map(VarId).collect(),
        }
    }
}

/// Cheap read-only view over a subset of rows and variables of a dataset.
#[derive(Debug, Clone)]
pub struct DataSlice<'a> {
    data: &'a Dataset,
    rows: Vec<usize>,
    vars: Vec<VarId>,
}

impl<'a> DataSlice<'a> {
    pub fn new(data: &'a Dataset, rows: Vec<usize>, vars: Vec<VarId>) -> Result<Self, DataError> {
        let mut seen_rows = std::collections::HashSet::new();
        for &r in &rows {
            if r >= data.n_rows() {
                return Err(DataError::InvalidSlice(format!("row {r} out of range")));
            }
            if !seen_rows.insert(r) {
                return Err(DataError::InvalidSlice(format!("duplicate row {r}")));
            }
        }
        let mut seen_vars = std::collections::HashSet::new();
        for &v in &vars {
            if v.0 >= data.n_cols() {
                return Err(DataError::InvalidSlice(format!("variable {} out of range", v.0)));
            }
            if !seen_vars.insert(v) {
                return Err(DataError::InvalidSlice(format!("duplicate variable {}", v.0)));
            }
        }
        Ok(DataSlice { data, rows, vars })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.rows
    }

    pub fn var_ids(&self) -> &[VarId] {
        &self.vars
    }

    /// Global variable id of the local column `v`.
    pub fn var(&self, v: usize) -> VarId {
        self.vars[v]
    }

    pub fn meta(&self, v: usize) -> &ColumnMeta {
        &self.data.schema()[self.vars[v].0]
    }

    /// Cell at local row `r`, local variable `v`.
    #[inline]
    pub fn cell(&self, r: usize, v: usize) -> Cell {
        self.data.cell(self.rows[r], self.vars[v].0)
    }

    /// Sub-slice keeping the given local row indices (variables unchanged).
    pub fn with_rows(&self, local_rows: &[usize]) -> DataSlice<'a> {
        DataSlice {
            data: self.data,
            rows: local_rows.iter().map(|&i| self.rows[i]).collect(),
            vars: self.vars.clone(),
        }
    }

    /// Sub-slice keeping the given local variable indices (rows unchanged).
    pub fn with_vars(&self, local_vars: &[usize]) -> DataSlice<'a> {
        DataSlice {
            data: self.data,
            rows: self.rows.clone(),
            vars: local_vars.iter().map(|&i| self.vars[i]).collect(),
        }
    }

    /// Median of the observed values of continuous variable `var` over the
    /// slice's rows. An even count averages the two middle order statistics;
    /// `Ok(None)` means no observed values.
    pub fn median_cutoff(&self, var: VarId) -> Result<Option<f64>, DataError> {
        if self.data.schema()[var.0].kind != ColumnKind::Continuous {
            return Err(DataError::NotContinuous(var.0));
        }
        let mut values: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|&r| match self.data.cell(r, var.0) {
                Cell::Continuous(x) => Some(x),
                _ => None,
            })
            .collect();
        if values.is_empty() {
            return Ok(None);
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        };
        Ok(Some(median))
    }
}

/// Deterministic train/validation row split. The validation side gets
/// `round(valid_fraction * n)` rows, clamped so both sides keep at least one.
pub fn split_rows(
    dataset: &Dataset,
    valid_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(DataError::InvalidFraction(valid_fraction));
    }
    let n = dataset.n_rows();
    if n < 2 {
        return Err(DataError::TooFewRows);
    }
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_valid = ((valid_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut valid: Vec<usize> = ids[..n_valid].to_vec();
    let mut train: Vec<usize> = ids[n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}
