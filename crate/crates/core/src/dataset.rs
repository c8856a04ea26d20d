//! Column-labelled sample matrices and their CSV representation.
//!
//! Rows are i.i.d. observations, columns are variables. The CSV dialect is
//! fixed: comma separated, UTF-8, a mandatory header row with the variable
//! names, `.` as decimal point and no missing-value sentinel.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl Dataset {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Size(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        for (idx, name) in names.iter().enumerate() {
            if names[..idx].contains(name) {
                return Err(Error::Input(format!("duplicate column name '{name}'")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Input(format!(
                "non-finite value at row {row}, column '{}'",
                names[col]
            )));
        }
        Ok(Self { names, values })
    }

    /// Builds a dataset from column vectors of equal length.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Size("columns of unequal length".into()));
        }
        let values = DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]);
        Self::new(names, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.values.column(idx).iter().copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The sub-matrix formed by the given columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_samples(), cols.len(), |r, c| self.values[(r, cols[c])])
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.n_samples());
        Dataset {
            names: self.names.clone(),
            values: self.values.rows(0, n).into_owned(),
        }
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Self::parse_csv(&text, path)
    }

    /// Parses CSV text; `origin` is only used in diagnostics.
    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, column: String, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            column,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(1, String::new(), e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if names.is_empty() || names.iter().all(String::is_empty) {
            return Err(parse_err(1, String::new(), "missing header row".into()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (row_idx, record) in reader.records().enumerate() {
            // header is line 1
            let line = row_idx + 2;
            let record = record.map_err(|e| parse_err(line, String::new(), e.to_string()))?;
            if record.len() != names.len() {
                return Err(parse_err(
                    line,
                    String::new(),
                    format!("expected {} fields, found {}", names.len(), record.len()),
                ));
            }
            for (col, field) in record.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| {
                    parse_err(line, names[col].clone(), format!("non-numeric value '{field}'"))
                })?;
                if !value.is_finite() {
                    return Err(parse_err(
                        line,
                        names[col].clone(),
                        format!("non-finite value '{field}'"),
                    ));
                }
                columns[col].push(value);
            }
        }
        Self::from_columns(names, columns)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for row in self.values.row_iter() {
            let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        File::create(path)
            .and_then(|mut f| f.write_all(self.to_csv_string().as_bytes()))
            .map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })
    }
}
