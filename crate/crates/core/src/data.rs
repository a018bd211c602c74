//! Numeric column store and strict CSV input.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{column}` row {row}: non-numeric value `{value}`")]
    NonNumeric { column: String, row: usize, value: String },
    #[error("column `{column}` row {row}: missing value")]
    MissingValue { column: String, row: usize },
    #[error("column `{column}` row {row}: non-finite value")]
    NonFinite { column: String, row: usize },
    #[error("column `{column}` has {found} rows, expected {expected}")]
    Length {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("no header row")]
    NoHeader,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Named numeric columns of equal length.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_columns<S: Into<String>>(cols: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self, DataError> {
        let mut ds = Dataset::new();
        for (name, col) in cols {
            ds.insert(name, col)?;
        }
        Ok(ds)
    }

    pub fn insert(&mut self, name: impl Into<String>, col: Vec<f64>) -> Result<(), DataError> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(DataError::DuplicateColumn(name));
        }
        if !self.columns.is_empty() && col.len() != self.n_rows() {
            return Err(DataError::Length {
                column: name,
                expected: self.n_rows(),
                found: col.len(),
            });
        }
        self.names.push(name);
        self.columns.push(col);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn column(&self, name: &str) -> Result<&[f64], DataError> {
        self.get(name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Dataset, DataError> {
        let mut out = Dataset::new();
        for n in names {
            out.insert(n.clone(), self.column(n)?.to_vec())?;
        }
        Ok(out)
    }

    /// Check that each named column exists and holds only finite values.
    pub fn require_finite(&self, names: &[String]) -> Result<(), DataError> {
        for n in names {
            let col = self.column(n)?;
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    column: n.clone(),
                    row: row + 1,
                });
            }
        }
        Ok(())
    }

    /// Read RFC 4180 CSV with a header row. Only `required` columns are parsed;
    /// each must be present and every cell must be a finite number.
    pub fn read_csv<R: Read>(reader: R, required: &[String]) -> Result<Dataset, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.is_empty() {
            return Err(DataError::NoHeader);
        }
        let mut idx = Vec::with_capacity(required.len());
        for name in required {
            match headers.iter().position(|h| h == name) {
                Some(i) => idx.push(i),
                None => return Err(DataError::MissingColumn(name.clone())),
            }
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); required.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, &i) in idx.iter().enumerate() {
                let raw = rec.get(i).unwrap_or("").trim();
                if raw.is_empty() || raw == "NA" {
                    return Err(DataError::MissingValue {
                        column: required[j].clone(),
                        row: row + 1,
                    });
                }
                let v: f64 = raw.parse().map_err(|_| DataError::NonNumeric {
                    column: required[j].clone(),
                    row: row + 1,
                    value: raw.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        column: required[j].clone(),
                        row: row + 1,
                    });
                }
                cols[j].push(v);
            }
        }
        Dataset::from_columns(required.iter().cloned().zip(cols))
    }

    pub fn read_csv_path(path: &Path, required: &[String]) -> Result<Dataset, DataError> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), required)
    }

    /// Header names of a CSV file, for callers that want every column.
    pub fn csv_headers<R: Read>(reader: R) -> Result<Vec<String>, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
    }
}
