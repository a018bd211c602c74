//! Ordered named-column tables, the output format of every inspection routine.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("column `{name}` has {found} rows, table has {expected}")]
    Length {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{0}` is not numeric")]
    NotNumeric(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// NaN is written as `NA`.
    Num(Vec<f64>),
    Int(Vec<i64>),
    Str(Vec<String>),
    Bool(Vec<bool>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Int(v) => v.len(),
            Column::Str(v) => v.len(),
            Column::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Column::Num(v) => format_num(v[i]),
            Column::Int(v) => v[i].to_string(),
            Column::Str(v) => v[i].clone(),
            Column::Bool(v) => if v[i] { "TRUE" } else { "FALSE" }.to_string(),
        }
    }

    fn extend(&mut self, other: &Column) -> bool {
        match (self, other) {
            (Column::Num(a), Column::Num(b)) => a.extend_from_slice(b),
            (Column::Int(a), Column::Int(b)) => a.extend_from_slice(b),
            (Column::Str(a), Column::Str(b)) => a.extend_from_slice(b),
            (Column::Bool(a), Column::Bool(b)) => a.extend_from_slice(b),
            _ => return false,
        }
        true
    }
}

/// Shortest round-trip decimal representation; `NA` for NaN.
pub fn format_num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else if x == 0.0 {
        // normalise negative zero
        "0".to_string()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TidyTable {
    columns: Vec<(String, Column)>,
}

impl TidyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(|(_, c)| c.len()).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Add a column, replacing any existing column of the same name in place.
    pub fn push(&mut self, name: impl Into<String>, col: Column) -> Result<(), TableError> {
        let name = name.into();
        if !self.columns.is_empty() && col.len() != self.n_rows() {
            let replacing_only = self.columns.len() == 1 && self.columns[0].0 == name;
            if !replacing_only {
                return Err(TableError::Length {
                    name,
                    expected: self.n_rows(),
                    found: col.len(),
                });
            }
        }
        match self.columns.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = col,
            None => self.columns.push((name, col)),
        }
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, col: Column) -> Result<Self, TableError> {
        self.push(name, col)?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn num(&self, name: &str) -> Result<&[f64], TableError> {
        match self.column(name) {
            Some(Column::Num(v)) => Ok(v),
            Some(_) => Err(TableError::NotNumeric(name.into())),
            None => Err(TableError::MissingColumn(name.into())),
        }
    }

    pub fn strs(&self, name: &str) -> Result<&[String], TableError> {
        match self.column(name) {
            Some(Column::Str(v)) => Ok(v),
            Some(_) => Err(TableError::NotNumeric(name.into())),
            None => Err(TableError::MissingColumn(name.into())),
        }
    }

    pub fn ints(&self, name: &str) -> Result<&[i64], TableError> {
        match self.column(name) {
            Some(Column::Int(v)) => Ok(v),
            Some(_) => Err(TableError::NotNumeric(name.into())),
            None => Err(TableError::MissingColumn(name.into())),
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.columns.iter().map(|(n, c)| (n.as_str(), c))
    }

    /// Row-bind `other` onto `self`; both must share the same column schema.
    pub fn append(&mut self, other: &TidyTable) -> Result<(), TableError> {
        if self.columns.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        for ((name, col), (oname, ocol)) in self.columns.iter_mut().zip(other.columns.iter()) {
            if name != oname || !col.extend(ocol) {
                return Err(TableError::MissingColumn(oname.clone()));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        for i in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|(_, c)| c.cell(i)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Array of row objects with keys in column order; NaN becomes `null`.
    pub fn to_json_string(&self) -> String {
        let mut out = String::from("[");
        for i in 0..self.n_rows() {
            out.push_str(if i == 0 { "\n  {" } else { ",\n  {" });
            for (j, (name, col)) in self.columns.iter().enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                out.push_str(&serde_json::to_string(name).expect("string"));
                out.push_str(": ");
                let v = match col {
                    Column::Num(v) if v[i].is_nan() => "null".to_string(),
                    Column::Num(v) => serde_json::Value::from(v[i]).to_string(),
                    Column::Int(v) => v[i].to_string(),
                    Column::Str(v) => serde_json::to_string(&v[i]).expect("string"),
                    Column::Bool(v) => v[i].to_string(),
                };
                out.push_str(&v);
            }
            out.push('}');
        }
        out.push_str(if self.n_rows() == 0 { "]\n" } else { "\n]\n" });
        out
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}
