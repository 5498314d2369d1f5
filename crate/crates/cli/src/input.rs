//! Plain-text matrix and label files.
//!
//! One matrix row per line, comma-separated reals. Blank lines and lines
//! starting with `#` are skipped. Labels are either one value per line or a
//! single comma-separated line.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use volsamp::{DMatrix, DVector};

use crate::error::CliError;

/// Parsed file contents plus the SHA-256 of the raw bytes.
#[derive(Debug, Clone)]
pub struct MatrixFile {
    pub path: PathBuf,
    pub rows: Vec<Vec<f64>>,
    pub sha256: String,
}

impl MatrixFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes).map_err(|_| CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            column: 0,
            message: "file is not valid UTF-8".into(),
        })?;
        let rows = parse_rows(&text).map_err(|(line, column, message)| CliError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            rows,
            sha256,
        })
    }

    /// Interprets the rows as a d × n matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.rows.len();
        let n = self.rows.first().map_or(0, Vec::len);
        DMatrix::from_fn(d, n, |i, j| self.rows[i][j])
    }

    /// Interprets the contents as a label vector.
    pub fn labels(&self) -> Result<DVector<f64>, CliError> {
        if self.rows.len() == 1 {
            return Ok(DVector::from_vec(self.rows[0].clone()));
        }
        if self.rows.iter().all(|r| r.len() == 1) {
            return Ok(DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r[0])));
        }
        Err(CliError::Parse {
            path: self.path.clone(),
            line: 0,
            column: 0,
            message: "labels must be one value per line or a single comma-separated line".into(),
        })
    }
}

/// Returns rows, or `(line, column, message)` with 1-based positions.
pub fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, (usize, usize, String)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, field)| {
                let field = field.trim();
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    (lineno + 1, col + 1, format!("cannot parse {field:?} as a finite real"))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err((
                    lineno + 1,
                    row.len().min(first.len()) + 1,
                    format!("expected {} values, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err((0, 0, "file contains no data rows".into()));
    }
    Ok(rows)
}
