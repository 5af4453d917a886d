//! Kernel generator for sparse x dense matrix multiplication (SPMM).
//!
//! The pipeline converts a sparse operand into an enumerated compressed
//! format, lowers the SPMM loop nest through unrolling, pattern
//! enumeration, thread-block and thread mapping, coarsening and a data
//! transform rewrite, emits GPU kernel source text, and validates every
//! schedule by executing its exact semantics on a deterministic CPU
//! simulator against a dense reference.

pub mod esc;
pub mod io;
pub mod ir;
pub mod matrix;
pub mod emit;
pub mod metrics;
pub mod passes;
pub mod sim;
pub mod tuner;

pub use esc::{EscMatrix, PatternId};
pub use ir::{KernelIR, Schedule};
pub use matrix::{DenseMatrix, SparseMatrix};
pub use sim::SimResult;
