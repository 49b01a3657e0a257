//! Labeled-matrix CSV files and checksums shared by the pipeline stages.
//!
//! Layout: optional `# ...` comment lines, then one row per label:
//! `label,v0,v1,...`. Floats use Rust's shortest round-trip formatting, so
//! a written matrix reads back bit-identically.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub comments: Vec<String>,
    pub labels: Vec<String>,
    pub data: DMatrix<f64>,
}

pub fn write_matrix(path: &Path, comments: &[String], labels: &[String], data: &DMatrix<f64>) -> Result<()> {
    assert_eq!(labels.len(), data.nrows(), "one label per row");
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for c in comments {
        writeln!(out, "# {c}").map_err(io)?;
    }
    for (label, row) in labels.iter().zip(data.row_iter()) {
        write!(out, "{label}").map_err(io)?;
        for x in row.iter() {
            write!(out, ",{x:e}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<LabeledMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut comments = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        labels.push(fields.next().unwrap_or_default().to_string());
        let row: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(path, format!("line {} has {} values, expected {w}", i + 1, row.len())))
            }
            _ => {}
        }
        values.extend(row);
    }
    let cols = width.unwrap_or(0);
    let data = DMatrix::from_row_slice(labels.len(), cols, &values);
    Ok(LabeledMatrix { comments, labels, data })
}

pub fn write_vector(path: &Path, comments: &[String], labels: &[String], values: &[f64]) -> Result<()> {
    write_matrix(path, comments, labels, &DMatrix::from_column_slice(values.len(), 1, values))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
