//! Storage and reuse analytics: format size accounting against dense and
//! CSR baselines, sparsity sweeps, and the B-register reuse report.

use crate::esc::{transform, EscMatrix};
use crate::matrix::gen_random;
use crate::sim::SimResult;
use std::fmt::Write as _;

/// Bytes of a dense row-major float32 matrix.
pub fn dense_bytes(m: usize, k: usize) -> u64 {
    4 * (m as u64) * (k as u64)
}

/// Bytes of CSR storage: values + column indices (4 bytes each) plus the
/// row pointer array.
pub fn csr_bytes(m: usize, nnz: usize) -> u64 {
    4 * (nnz as u64) + 4 * (nnz as u64) + 4 * (m as u64 + 1)
}

/// Bytes of the enumerated compressed format, exactly the serialized
/// container length: values, padded columns, both pointer arrays, a
/// 12-byte group record per (panel, pattern) pair and the 32-byte header.
pub fn esc_bytes(t: &EscMatrix) -> u64 {
    crate::esc::serialized_len(t) as u64
}

/// One row of the storage sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub sparsity: f64,
    pub esc_over_dense: f64,
    pub csr_over_dense: f64,
}

/// Default sweep points: the comparison band plus the high-sparsity tail.
pub const DEFAULT_SWEEP_SPARSITIES: [f64; 8] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99];

/// Storage ratios over seeded random matrices, one row per sparsity.
pub fn size_sweep(
    m: usize,
    k: usize,
    sparsities: &[f64],
    uf_i: u32,
    uf_k: u32,
    seed: u64,
) -> Vec<SweepRow> {
    let dense = dense_bytes(m, k) as f64;
    sparsities
        .iter()
        .map(|&sparsity| {
            let a = gen_random(m, k, sparsity, seed);
            let t = transform(&a, uf_i, uf_k);
            SweepRow {
                sparsity,
                esc_over_dense: esc_bytes(&t) as f64 / dense,
                csr_over_dense: csr_bytes(m, a.nnz()) as f64 / dense,
            }
        })
        .collect()
}

/// CSV with the fixed header `sparsity,esc_over_dense,csr_over_dense`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("sparsity,esc_over_dense,csr_over_dense\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.4},{:.6},{:.6}",
            r.sparsity, r.esc_over_dense, r.csr_over_dense
        );
    }
    out
}

/// Measured and expected B reuse for one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReuseReport {
    /// FMAs per B load from the simulator counters.
    pub measured: f64,
    /// Column-weighted mean popcount over the group table.
    pub expected: f64,
    /// True when measured equals expected as exact rationals.
    pub exact: bool,
}

/// Compares the simulator's B-reuse factor against the value implied by the
/// group table: every executed column of a group serves one B load for
/// `popcount` FMAs, so the expected factor is the padded-column-weighted
/// mean popcount.
pub fn reuse_report(result: &SimResult, esc: &EscMatrix) -> ReuseReport {
    let mut weighted: u64 = 0;
    let mut total: u64 = 0;
    for g in &esc.groups {
        weighted += (g.pattern.popcount() as u64) * (g.padded_cols as u64);
        total += g.padded_cols as u64;
    }
    let expected = if total == 0 {
        1.0
    } else {
        weighted as f64 / total as f64
    };
    // cross-multiplied integer identity: fma * total == loads * weighted
    let exact = (result.fma_count as u128) * (total as u128)
        == (result.load_count_b as u128) * (weighted as u128);
    ReuseReport {
        measured: result.reuse_factor_b(),
        expected,
        exact,
    }
}
