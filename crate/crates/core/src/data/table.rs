use std::collections::BTreeMap;
use std::path::Path;

use super::DataError;

/// Rectangular block of sensor readings: one column per feature, one row per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub names: Vec<String>,
    n_rows: usize,
    /// Row-major values.
    values: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl SeriesTable {
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let p = names.len();
        if p == 0 {
            return Err(DataError::Table("table has no columns".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(DataError::Ragged {
                    row: r + 1,
                    expected: p,
                    found: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::Parse {
                    row: r + 1,
                    col: c + 1,
                    value: row[c].to_string(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            names,
            n_rows: rows.len(),
            values,
            metadata: BTreeMap::new(),
        })
    }

    pub(crate) fn from_flat(names: Vec<String>, n_rows: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_rows * names.len());
        Self {
            names,
            n_rows,
            values,
            metadata: BTreeMap::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[r * p..(r + 1) * p]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    /// Row-wise concatenation of tables with identical columns.
    pub fn concat(tables: &[&SeriesTable]) -> Result<Self, DataError> {
        let first = tables.first().ok_or_else(|| DataError::Table("nothing to concatenate".into()))?;
        let mut values = Vec::new();
        let mut n_rows = 0;
        for t in tables {
            if t.names != first.names {
                return Err(DataError::Table(format!(
                    "column mismatch: {:?} vs {:?}",
                    first.names, t.names
                )));
            }
            values.extend_from_slice(&t.values);
            n_rows += t.n_rows;
        }
        Ok(Self::from_flat(first.names.clone(), n_rows, values))
    }
}

/// Reads a headed CSV of numeric columns. Row and column numbers in errors are
/// 1-based and count data rows only (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesTable, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(DataError::Empty(path.display().to_string()));
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        if record.len() != names.len() {
            return Err(DataError::Ragged {
                row: r + 1,
                expected: names.len(),
                found: record.len(),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::Parse {
                        row: r + 1,
                        col: c + 1,
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::NoRows(path.display().to_string()));
    }
    let mut table = SeriesTable::from_rows(names, rows)?;
    table
        .metadata
        .insert("source".into(), path.display().to_string());
    Ok(table)
}
