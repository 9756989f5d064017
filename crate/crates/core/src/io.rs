//! CSV reading and writing for data blocks and matrices.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a value
//! read back from an exported file is bit-identical to the original.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::block::DataBlock;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    /// First row holds column labels.
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            delimiter: b',',
        }
    }
}

/// Read a rectangular numeric CSV into a block (rows = observations).
/// Missing or non-numeric cells are rejected. Without a header, columns are
/// labelled `v1, v2, …`.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<DataBlock> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(options.delimiter)
        .from_reader(file);

    let parse_err = |row: usize, e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("{other:?}"),
        },
    };

    let mut labels: Option<Vec<String>> = None;
    let mut width = None;
    let mut values: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    let mut row = 0usize;
    for record in reader.records() {
        row += 1;
        let record = record.map_err(|e| parse_err(row, e))?;
        // 1-based file line, header included
        let row = record.position().map_or(row, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                path: path.to_path_buf(),
                row,
                expected,
                found: record.len(),
            });
        }
        if options.has_header && labels.is_none() {
            labels = Some(record.iter().map(|s| s.trim().to_string()).collect());
            continue;
        }
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::NonNumericCell {
                path: path.to_path_buf(),
                row,
                col: col + 1,
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        n_rows += 1;
    }
    let Some(k) = width else {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    };
    if n_rows == 0 {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let matrix = DMatrix::from_row_slice(n_rows, k, &values);
    let labels = labels.unwrap_or_else(|| (1..=k).map(|j| format!("v{j}")).collect());
    DataBlock::new(matrix, labels)
}

/// Shortest decimal text that parses back to exactly `v`.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Write a block with its labels as the header row.
pub fn write_csv(path: impl AsRef<Path>, block: &DataBlock) -> Result<()> {
    write_matrix_csv(path, block.labels(), block.values())
}

pub fn write_matrix_csv(path: impl AsRef<Path>, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    let rows: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|&v| format_f64(v)).collect()).collect();
    write_table(path, labels, &rows)
}

/// Write a header and string rows as CSV.
pub fn write_table<S: AsRef<str>>(path: impl AsRef<Path>, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record(header.iter().map(|h| h.as_ref())).map_err(ser)?;
        for r in rows {
            w.write_record(r).map_err(ser)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}
