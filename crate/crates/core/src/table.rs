//! CSV and JSON plumbing shared by the export functions.
//!
//! Floats are written with 17 significant digits so every value parses back
//! to the identical `f64`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV file with a header row. Cells are kept as strings so label columns
/// (such as a `truth` row marker) can coexist with numeric ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, label: impl Into<String>, values: &[f64]) {
        let mut row = Vec::with_capacity(values.len() + 1);
        row.push(label.into());
        row.extend(values.iter().map(|v| fmt_f64(*v)));
        self.rows.push(row);
    }

    pub fn push_numeric_row(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        wtr.write_record(&self.header).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            wtr.write_record(row).map_err(|e| csv_error(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = rdr
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
        }
        Ok(Self { header, rows })
    }

    /// Parses column `col` of every row as `f64`.
    pub fn column(&self, col: usize, path: &Path) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = row.get(col).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("row {} has no column {col}", i + 1),
                })?;
                parse_f64(cell, path)
            })
            .collect()
    }

    /// The numeric block formed by columns `first_col..` of every row.
    pub fn numeric_block(&self, first_col: usize, path: &Path) -> Result<DMatrix<f64>> {
        let ncols = self.header.len().saturating_sub(first_col);
        let mut m = DMatrix::zeros(self.rows.len(), ncols);
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("row {} has {} fields, header has {}", i + 1, row.len(), self.header.len()),
                });
            }
            for j in 0..ncols {
                m[(i, j)] = parse_f64(&row[first_col + j], path)?;
            }
        }
        Ok(m)
    }
}

pub fn parse_f64(cell: &str, path: &Path) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        message: format!("not a number: {cell:?}"),
    })
}

/// Writes a matrix with a caller-supplied header and no label column.
pub fn write_matrix(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut table = Table::new(header.iter().cloned());
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        table.push_numeric_row(&row);
    }
    table.write(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidParameter(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
