//! Sparse (CSR) and dense matrix types plus generators and conversions.
//!
//! The sparse operand is stored in compressed sparse row form: `row_ptr`
//! has one offset per row plus a terminal entry, `col_idx`/`values` hold
//! the nonzero columns and values in row order. Explicit zeros are kept:
//! a stored value of 0.0 still occupies a pattern slot.

use thiserror::Error;

/// Errors raised while constructing or validating matrices.
#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("row pointer array has length {got}, expected {expected}")]
    RowPtrLength { got: usize, expected: usize },
    #[error("row pointers must start at 0, found {0}")]
    RowPtrStart(usize),
    #[error("row pointers decrease at row {row}: {prev} > {next}")]
    RowPtrDecreasing { row: usize, prev: usize, next: usize },
    #[error("pointer/count mismatch: row_ptr[{rows}] = {terminal} but nnz = {nnz}")]
    PointerCountMismatch { rows: usize, terminal: usize, nnz: usize },
    #[error("column index {col} out of range (n_cols = {n_cols}) in row {row}")]
    ColumnOutOfRange { row: usize, col: usize, n_cols: usize },
    #[error("column indices not strictly increasing in row {row}: {prev} then {next}")]
    ColumnsNotIncreasing { row: usize, prev: usize, next: usize },
    #[error("non-finite value at nonzero {index}")]
    NonFiniteValue { index: usize },
    #[error("value array has length {got}, expected {expected}")]
    ValueLength { got: usize, expected: usize },
    #[error("dense data has length {got}, expected {rows}x{cols}")]
    DenseLength { got: usize, rows: usize, cols: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// CSR sparse matrix with 32-bit float values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Length `n_rows + 1`; `row_ptr[n_rows]` equals nnz.
    pub row_ptr: Vec<usize>,
    /// Column index per nonzero, strictly increasing within each row.
    pub col_idx: Vec<usize>,
    pub values: Vec<f32>,
    /// True when the source format carried no values and 1.0 placeholders
    /// were substituted (pattern-only files).
    pub synthetic_values: bool,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self, MatrixError> {
        let m = Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            synthetic_values: false,
        };
        m.validate()?;
        Ok(m)
    }

    /// An `n_rows` x `n_cols` matrix with no nonzeros.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            synthetic_values: false,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices of one row.
    pub fn row_cols(&self, row: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    /// Values of one row.
    pub fn row_values(&self, row: usize) -> &[f32] {
        &self.values[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    /// Checks all structural invariants, reporting the first violation.
    pub fn validate(&self) -> Result<(), MatrixError> {
        if self.row_ptr.len() != self.n_rows + 1 {
            return Err(MatrixError::RowPtrLength {
                got: self.row_ptr.len(),
                expected: self.n_rows + 1,
            });
        }
        if self.row_ptr[0] != 0 {
            return Err(MatrixError::RowPtrStart(self.row_ptr[0]));
        }
        for row in 0..self.n_rows {
            if self.row_ptr[row] > self.row_ptr[row + 1] {
                return Err(MatrixError::RowPtrDecreasing {
                    row,
                    prev: self.row_ptr[row],
                    next: self.row_ptr[row + 1],
                });
            }
        }
        if self.row_ptr[self.n_rows] != self.col_idx.len() {
            return Err(MatrixError::PointerCountMismatch {
                rows: self.n_rows,
                terminal: self.row_ptr[self.n_rows],
                nnz: self.col_idx.len(),
            });
        }
        if self.values.len() != self.col_idx.len() {
            return Err(MatrixError::ValueLength {
                got: self.values.len(),
                expected: self.col_idx.len(),
            });
        }
        for row in 0..self.n_rows {
            let cols = &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]];
            for (i, &c) in cols.iter().enumerate() {
                if c >= self.n_cols {
                    return Err(MatrixError::ColumnOutOfRange {
                        row,
                        col: c,
                        n_cols: self.n_cols,
                    });
                }
                if i > 0 && cols[i - 1] >= c {
                    return Err(MatrixError::ColumnsNotIncreasing {
                        row,
                        prev: cols[i - 1],
                        next: c,
                    });
                }
            }
        }
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(MatrixError::NonFiniteValue { index: i });
            }
        }
        Ok(())
    }
}

/// Row-major dense matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f32>) -> Result<Self, MatrixError> {
        if data.len() != n_rows * n_cols {
            return Err(MatrixError::DenseLength {
                got: data.len(),
                rows: n_rows,
                cols: n_cols,
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Self::zeros(n, n);
        for i in 0..n {
            d.data[i * n + i] = 1.0;
        }
        d
    }

    /// Seeded uniform values in [-1, 1]; reproducible across platforms.
    pub fn random(n_rows: usize, n_cols: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n_rows * n_cols)
            .map(|_| rng.gen_range(-1.0f32..=1.0))
            .collect();
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.n_cols + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f32 {
        &mut self.data[row * self.n_cols + col]
    }
}

/// Random sparse matrix with `round((1 - sparsity) * m * k)` nonzeros placed
/// uniformly without replacement. Deterministic per `(m, k, sparsity, seed)`.
/// Values are uniform in [-1, 1], resampled if exactly zero.
pub fn gen_random(m: usize, k: usize, sparsity: f64, seed: u64) -> SparseMatrix {
    use rand::{Rng, SeedableRng};
    assert!(m >= 1 && k >= 1, "matrix dimensions must be at least 1");
    assert!(
        (0.0..1.0).contains(&sparsity),
        "sparsity must lie in [0, 1)"
    );
    let total = m * k;
    let nnz = ((1.0 - sparsity) * total as f64).round() as usize;
    let nnz = nnz.min(total);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // Partial Fisher-Yates over flat positions: the first nnz entries of the
    // virtual shuffle are a uniform sample without replacement.
    let mut positions: Vec<usize> = (0..total).collect();
    for i in 0..nnz {
        let j = rng.gen_range(i..total);
        positions.swap(i, j);
    }
    let mut picked: Vec<usize> = positions[..nnz].to_vec();
    picked.sort_unstable();

    let mut row_ptr = vec![0usize; m + 1];
    let mut col_idx = Vec::with_capacity(nnz);
    for &p in &picked {
        row_ptr[p / k + 1] += 1;
        col_idx.push(p % k);
    }
    for r in 0..m {
        row_ptr[r + 1] += row_ptr[r];
    }
    let values = (0..nnz)
        .map(|_| loop {
            let v: f32 = rng.gen_range(-1.0..=1.0);
            if v != 0.0 {
                break v;
            }
        })
        .collect();

    SparseMatrix {
        n_rows: m,
        n_cols: k,
        row_ptr,
        col_idx,
        values,
        synthetic_values: false,
    }
}

/// Replaces placeholder values of a pattern-only matrix with seeded uniform
/// values in [-1, 1] (never exactly zero) and clears the synthetic flag.
/// Matrices that already carry real values are left untouched.
pub fn substitute_synthetic_values(a: &mut SparseMatrix, seed: u64) {
    use rand::{Rng, SeedableRng};
    if !a.synthetic_values {
        return;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for v in &mut a.values {
        *v = loop {
            let x: f32 = rng.gen_range(-1.0..=1.0);
            if x != 0.0 {
                break x;
            }
        };
    }
    a.synthetic_values = false;
}

/// Dense image of a sparse matrix; zeros everywhere else, values preserved
/// exactly.
pub fn to_dense(a: &SparseMatrix) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(a.n_rows, a.n_cols);
    for row in 0..a.n_rows {
        for (c, v) in a.row_cols(row).iter().zip(a.row_values(row)) {
            d.data[row * a.n_cols + c] = *v;
        }
    }
    d
}

/// CSR form of exactly the nonzero entries of a dense matrix.
pub fn csr_from_dense(d: &DenseMatrix) -> SparseMatrix {
    let mut row_ptr = Vec::with_capacity(d.n_rows + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for row in 0..d.n_rows {
        for col in 0..d.n_cols {
            let v = d.at(row, col);
            if v != 0.0 {
                col_idx.push(col);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    SparseMatrix {
        n_rows: d.n_rows,
        n_cols: d.n_cols,
        row_ptr,
        col_idx,
        values,
        synthetic_values: false,
    }
}
