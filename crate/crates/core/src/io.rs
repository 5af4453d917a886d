//! Text loaders for sparse matrices.
//!
//! Two formats are supported behind a common [`MatrixLoader`] trait and
//! selected by file extension: the three-line `.smtx` pointer format used
//! by pruned-weight collections and Matrix Market coordinate files.

use crate::matrix::{MatrixError, SparseMatrix};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Read(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: MatrixError,
    },
    #[error("no loader registered for '{0}' (expected .smtx or .mtx)")]
    UnknownFormat(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        msg: msg.into(),
    }
}

/// A named loader for one on-disk matrix format.
pub trait MatrixLoader: Sync {
    fn name(&self) -> &'static str;
    /// Lower-case extensions this loader claims.
    fn extensions(&self) -> &'static [&'static str];
    fn load_str(&self, text: &str) -> Result<SparseMatrix, IoError>;
}

/// All registered loaders, in selection order.
pub fn loaders() -> &'static [&'static dyn MatrixLoader] {
    static LOADERS: [&dyn MatrixLoader; 2] = [&SmtxLoader, &MatrixMarketLoader];
    &LOADERS
}

/// Picks a loader by file extension.
pub fn loader_for(path: &Path) -> Result<&'static dyn MatrixLoader, IoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    loaders()
        .iter()
        .copied()
        .find(|l| l.extensions().contains(&ext.as_str()))
        .ok_or_else(|| IoError::UnknownFormat(path.display().to_string()))
}

/// Loads a matrix, dispatching on the file extension.
pub fn load_matrix(path: &Path) -> Result<SparseMatrix, IoError> {
    let loader = loader_for(path)?;
    let text = std::fs::read_to_string(path)?;
    loader.load_str(&text)
}

/// Loads the three-line pointer format regardless of extension.
pub fn load_smtx(path: &Path) -> Result<SparseMatrix, IoError> {
    let text = std::fs::read_to_string(path)?;
    SmtxLoader.load_str(&text)
}

/// Loads Matrix Market coordinate text regardless of extension.
pub fn load_matrix_market(path: &Path) -> Result<SparseMatrix, IoError> {
    let text = std::fs::read_to_string(path)?;
    MatrixMarketLoader.load_str(&text)
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
}

fn parse_counts(line: &str, line_no: usize, what: &str) -> Result<Vec<usize>, IoError> {
    tokens(line)
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| parse_err(line_no, format!("bad {what} token '{t}'")))
        })
        .collect()
}

/// Three-line format: header "M, K, nnz", then M+1 row pointers, then nnz
/// column indices. A fourth line of values is accepted; without it the
/// values are 1.0 placeholders and `synthetic_values` is set.
pub struct SmtxLoader;

impl MatrixLoader for SmtxLoader {
    fn name(&self) -> &'static str {
        "smtx"
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["smtx"]
    }

    fn load_str(&self, text: &str) -> Result<SparseMatrix, IoError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline_no, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file, expected 'M, K, nnz' header"))?;
        let dims = parse_counts(header, hline_no, "header")?;
        if dims.len() != 3 {
            return Err(parse_err(
                hline_no,
                format!("malformed header: expected 3 fields, found {}", dims.len()),
            ));
        }
        let (m, k, nnz) = (dims[0], dims[1], dims[2]);

        let (pline_no, pline) = lines
            .next()
            .ok_or_else(|| parse_err(hline_no + 1, "missing row pointer line"))?;
        let row_ptr = parse_counts(pline, pline_no, "row pointer")?;
        if row_ptr.len() != m + 1 {
            return Err(parse_err(
                pline_no,
                format!("expected {} row pointers, found {}", m + 1, row_ptr.len()),
            ));
        }
        if row_ptr[m] != nnz {
            return Err(parse_err(
                pline_no,
                format!("pointer/count mismatch: row_ptr[{}] = {} but header nnz = {}", m, row_ptr[m], nnz),
            ));
        }

        // with zero nonzeros the column-index line may be blank or absent
        let (cline_no, col_idx) = match lines.next() {
            Some((n, l)) => (n, parse_counts(l, n, "column index")?),
            None if nnz == 0 => (pline_no + 1, Vec::new()),
            None => return Err(parse_err(pline_no + 1, "missing column index line")),
        };
        if col_idx.len() != nnz {
            return Err(parse_err(
                cline_no,
                format!("expected {} column indices, found {}", nnz, col_idx.len()),
            ));
        }

        let (values, synthetic) = match lines.next() {
            Some((vline_no, vline)) => {
                let vals: Result<Vec<f32>, IoError> = tokens(vline)
                    .map(|t| {
                        t.parse::<f32>()
                            .map_err(|_| parse_err(vline_no, format!("bad value token '{t}'")))
                    })
                    .collect();
                let vals = vals?;
                if vals.len() != nnz {
                    return Err(parse_err(
                        vline_no,
                        format!("expected {} values, found {}", nnz, vals.len()),
                    ));
                }
                (vals, false)
            }
            None => (vec![1.0; nnz], true),
        };

        let mut mat = SparseMatrix {
            n_rows: m,
            n_cols: k,
            row_ptr,
            col_idx,
            values,
            synthetic_values: synthetic,
        };
        mat.validate().map_err(|source| IoError::Invalid {
            line: cline_no,
            source,
        })?;
        mat.synthetic_values = synthetic;
        Ok(mat)
    }
}

/// Matrix Market coordinate loader (real/integer/pattern, general).
pub struct MatrixMarketLoader;

impl MatrixLoader for MatrixMarketLoader {
    fn name(&self) -> &'static str {
        "matrix-market"
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["mtx", "mm"]
    }

    fn load_str(&self, text: &str) -> Result<SparseMatrix, IoError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

        let (bline, banner) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file, expected MatrixMarket banner"))?;
        let fields: Vec<String> = banner
            .split_whitespace()
            .map(|t| t.to_ascii_lowercase())
            .collect();
        if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
            return Err(parse_err(bline, "malformed MatrixMarket banner"));
        }
        if fields[2] != "coordinate" {
            return Err(parse_err(bline, format!("unsupported storage '{}'", fields[2])));
        }
        let pattern_only = match fields[3].as_str() {
            "real" | "integer" => false,
            "pattern" => true,
            other => return Err(parse_err(bline, format!("unsupported field type '{other}'"))),
        };
        if fields[4] != "general" {
            return Err(parse_err(
                bline,
                format!("unsupported symmetry '{}'", fields[4]),
            ));
        }

        let mut lines = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
        let (dline, dims_line) = lines
            .next()
            .ok_or_else(|| parse_err(bline + 1, "missing dimensions line"))?;
        let dims = parse_counts(dims_line, dline, "dimension")?;
        if dims.len() != 3 {
            return Err(parse_err(dline, "expected 'M K nnz'"));
        }
        let (m, k, nnz) = (dims[0], dims[1], dims[2]);

        let mut triplets: Vec<(usize, usize, f32)> = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let (eline, entry) = lines
                .next()
                .ok_or_else(|| parse_err(dline, format!("expected {nnz} entries, file ended early")))?;
            let toks: Vec<&str> = entry.split_whitespace().collect();
            let want = if pattern_only { 2 } else { 3 };
            if toks.len() < want {
                return Err(parse_err(eline, format!("entry needs {want} fields")));
            }
            let row: usize = toks[0]
                .parse()
                .map_err(|_| parse_err(eline, format!("bad row index '{}'", toks[0])))?;
            let col: usize = toks[1]
                .parse()
                .map_err(|_| parse_err(eline, format!("bad column index '{}'", toks[1])))?;
            if row == 0 || col == 0 {
                return Err(parse_err(eline, "indices are 1-based"));
            }
            if row > m || col > k {
                return Err(parse_err(eline, format!("index ({row}, {col}) out of range")));
            }
            let v = if pattern_only {
                1.0
            } else {
                toks[2]
                    .parse::<f32>()
                    .map_err(|_| parse_err(eline, format!("bad value '{}'", toks[2])))?
            };
            triplets.push((row - 1, col - 1, v));
        }
        if let Some((eline, _)) = lines.next() {
            return Err(parse_err(eline, "trailing entries beyond declared nnz"));
        }

        triplets.sort_by_key(|&(r, c, _)| (r, c));
        for w in triplets.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(parse_err(
                    dline,
                    format!("duplicate entry at ({}, {})", w[0].0 + 1, w[0].1 + 1),
                ));
            }
        }

        let mut row_ptr = vec![0usize; m + 1];
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for &(r, c, v) in &triplets {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..m {
            row_ptr[r + 1] += row_ptr[r];
        }

        let mut mat = SparseMatrix {
            n_rows: m,
            n_cols: k,
            row_ptr,
            col_idx,
            values,
            synthetic_values: pattern_only,
        };
        mat.validate().map_err(|source| IoError::Invalid {
            line: dline,
            source,
        })?;
        mat.synthetic_values = pattern_only;
        Ok(mat)
    }
}
