//! The enumerated compressed format and its data transformer.
//!
//! A sparse matrix is partitioned into row panels of `UFi` rows. Within a
//! panel, every column with at least one nonzero gets a pattern: the
//! `UFi`-bit mask of which panel rows are nonzero at that column. Columns
//! sharing a pattern form a group. Groups are laid out per (panel, pattern
//! ordinal) pair so a thread block can be addressed as
//! `panel * num_patterns + ordinal`:
//!
//! * `cols`  — original column indices per group, zero-padded to a multiple
//!   of `UFk` by repeating the last real column,
//! * `rpp`   — per-group column ranges into `cols` (one entry per group plus
//!   a terminal),
//! * `annz`  — nonzero values, column-major within a group, pattern rows in
//!   ascending order per column; padding slots carry 0.0,
//! * `npp`   — per-group value cursors into `annz` (plus terminal).
//!
//! Pattern ordinals are global: the distinct patterns of the whole matrix,
//! sorted ascending. A (panel, pattern) pair absent from the matrix is an
//! empty group with zero-length ranges.

use crate::matrix::SparseMatrix;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EscError {
    #[error("corrupt compressed matrix: {0}")]
    Corrupt(String),
    #[error("container too short: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad container magic {0:?}, expected \"ESC1\"")]
    BadMagic([u8; 4]),
}

/// Bit mask over the rows of one panel; bit `r` set means row
/// `panel_base + r` is nonzero at the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatternId(pub u32);

impl PatternId {
    pub fn popcount(self) -> u32 {
        self.0.count_ones()
    }

    /// Row offsets within the panel, ascending.
    pub fn row_offsets(self) -> impl Iterator<Item = u32> {
        let bits = self.0;
        (0..32).filter(move |r| bits & (1 << r) != 0)
    }

    pub fn is_valid(self, uf_i: u32) -> bool {
        self.0 >= 1 && (uf_i >= 32 || self.0 < (1u32 << uf_i))
    }
}

/// One (panel, pattern ordinal) group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupInfo {
    pub panel: u32,
    pub pattern: PatternId,
    /// Column count after zero-padding to a multiple of `UFk`.
    pub padded_cols: u32,
    /// Column count before padding.
    pub real_cols: u32,
}

/// The enumerated compressed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EscMatrix {
    pub uf_i: u32,
    pub uf_k: u32,
    /// Origin shape (M, K).
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_row_panels: usize,
    /// Distinct patterns present anywhere in the matrix, ascending; the
    /// index of a pattern here is its ordinal.
    pub patterns: Vec<PatternId>,
    /// Dense group table, one entry per (panel, ordinal) in block order
    /// `panel * num_patterns + ordinal`.
    pub groups: Vec<GroupInfo>,
    /// Column ranges: group g spans `cols[rpp[g]..rpp[g+1]]`.
    pub rpp: Vec<u32>,
    /// Value cursors: group g spans `annz[npp[g]..npp[g+1]]`.
    pub npp: Vec<u32>,
    pub cols: Vec<u32>,
    pub annz: Vec<f32>,
}

impl EscMatrix {
    pub fn num_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Ordinal of a pattern in the global table, if present.
    pub fn ordinal_of(&self, pattern: PatternId) -> Option<usize> {
        self.patterns.binary_search(&pattern).ok()
    }

    /// Internal consistency check over every format invariant.
    pub fn validate(&self) -> Result<(), EscError> {
        let np = self.patterns.len();
        let expect_groups = self.n_row_panels * np;
        if self.groups.len() != expect_groups {
            return Err(EscError::Corrupt(format!(
                "group table has {} entries, expected {}",
                self.groups.len(),
                expect_groups
            )));
        }
        if self.rpp.len() != expect_groups + 1 || self.npp.len() != expect_groups + 1 {
            return Err(EscError::Corrupt("pointer array length mismatch".into()));
        }
        if self.rpp[0] != 0 || self.npp[0] != 0 {
            return Err(EscError::Corrupt("pointer arrays must start at 0".into()));
        }
        if !self.patterns.windows(2).all(|w| w[0] < w[1]) {
            return Err(EscError::Corrupt("pattern table not strictly ascending".into()));
        }
        for (g, info) in self.groups.iter().enumerate() {
            let panel = g / np.max(1);
            let ordinal = g % np.max(1);
            if info.panel as usize != panel || info.pattern != self.patterns[ordinal] {
                return Err(EscError::Corrupt(format!("group {g} out of block order")));
            }
            if !info.pattern.is_valid(self.uf_i) {
                return Err(EscError::Corrupt(format!(
                    "group {g} pattern {:#b} invalid for UFi={}",
                    info.pattern.0, self.uf_i
                )));
            }
            if info.padded_cols % self.uf_k != 0 {
                return Err(EscError::Corrupt(format!(
                    "group {g} padded column count {} not a multiple of UFk={}",
                    info.padded_cols, self.uf_k
                )));
            }
            if info.real_cols > info.padded_cols {
                return Err(EscError::Corrupt(format!(
                    "group {g} real columns exceed padded"
                )));
            }
            let rspan = self.rpp[g + 1] - self.rpp[g];
            if rspan != info.padded_cols {
                return Err(EscError::Corrupt(format!(
                    "group {g} rpp span {rspan} != padded columns {}",
                    info.padded_cols
                )));
            }
            let nspan = self.npp[g + 1] - self.npp[g];
            if nspan != info.pattern.popcount() * info.padded_cols {
                return Err(EscError::Corrupt(format!(
                    "group {g} npp span {nspan} != popcount*cols"
                )));
            }
            let cols = &self.cols[self.rpp[g] as usize..self.rpp[g + 1] as usize];
            let real = &cols[..info.real_cols as usize];
            if !real.windows(2).all(|w| w[0] < w[1]) {
                return Err(EscError::Corrupt(format!("group {g} columns not ascending")));
            }
            if real.iter().any(|&c| c as usize >= self.n_cols) {
                return Err(EscError::Corrupt(format!("group {g} column out of range")));
            }
            if info.real_cols > 0 {
                let last = real[real.len() - 1];
                if cols[info.real_cols as usize..].iter().any(|&c| c != last) {
                    return Err(EscError::Corrupt(format!(
                        "group {g} padding does not repeat the last column"
                    )));
                }
            } else if info.padded_cols != 0 {
                return Err(EscError::Corrupt(format!("group {g} pads an empty group")));
            }
            let pc = info.pattern.popcount() as usize;
            let vals = &self.annz[self.npp[g] as usize..self.npp[g + 1] as usize];
            if vals[info.real_cols as usize * pc..].iter().any(|&v| v != 0.0) {
                return Err(EscError::Corrupt(format!("group {g} padding value not 0.0")));
            }
        }
        if self.cols.len() != self.rpp[expect_groups] as usize {
            return Err(EscError::Corrupt("cols length != rpp terminal".into()));
        }
        if self.annz.len() != self.npp[expect_groups] as usize {
            return Err(EscError::Corrupt("annz length != npp terminal".into()));
        }
        Ok(())
    }
}

struct PanelGroup {
    cols: Vec<u32>,
    /// Values column-major, popcount entries per column, rows ascending.
    vals: Vec<f32>,
}

fn panel_patterns(a: &SparseMatrix, panel: usize, uf_i: u32) -> BTreeMap<PatternId, PanelGroup> {
    let ufi = uf_i as usize;
    let base = panel * ufi;
    // Per-column bitmask and per-(column, row) values, built by one walk
    // over the panel's CSR rows.
    let mut mask = vec![0u32; a.n_cols];
    let mut vals = vec![0f32; a.n_cols * ufi];
    let mut touched: Vec<u32> = Vec::new();
    for r in 0..ufi {
        let row = base + r;
        if row >= a.n_rows {
            break;
        }
        for (c, v) in a.row_cols(row).iter().zip(a.row_values(row)) {
            if mask[*c] == 0 {
                touched.push(*c as u32);
            }
            mask[*c] |= 1 << r;
            vals[*c * ufi + r] = *v;
        }
    }
    touched.sort_unstable();

    let mut map: BTreeMap<PatternId, PanelGroup> = BTreeMap::new();
    for &c in &touched {
        let pattern = PatternId(mask[c as usize]);
        let group = map.entry(pattern).or_insert_with(|| PanelGroup {
            cols: Vec::new(),
            vals: Vec::new(),
        });
        group.cols.push(c);
        for r in pattern.row_offsets() {
            group.vals.push(vals[c as usize * ufi + r as usize]);
        }
    }
    map
}

/// Pattern map of one panel: each column of `A` with any nonzero in rows
/// `[panel*UFi, panel*UFi + UFi)` appears under exactly one pattern, column
/// lists ascending. A ragged final panel treats missing rows as all-zero.
pub fn enumerate_patterns(
    a: &SparseMatrix,
    panel: usize,
    uf_i: u32,
) -> BTreeMap<PatternId, Vec<u32>> {
    assert!((1..=32).contains(&uf_i));
    panel_patterns(a, panel, uf_i)
        .into_iter()
        .map(|(p, g)| (p, g.cols))
        .collect()
}

/// Number of row panels for a matrix of `m` rows.
pub fn row_panels(m: usize, uf_i: u32) -> usize {
    m.div_ceil(uf_i as usize)
}

/// Builds the compressed format for a schedule's `(UFi, UFk)`.
pub fn transform(a: &SparseMatrix, uf_i: u32, uf_k: u32) -> EscMatrix {
    assert!((1..=32).contains(&uf_i), "pattern masks are 32-bit");
    assert!(uf_k >= 1);
    let n_row_panels = row_panels(a.n_rows, uf_i);

    let mut panel_maps: Vec<BTreeMap<PatternId, PanelGroup>> = Vec::with_capacity(n_row_panels);
    let mut pattern_set: BTreeSet<PatternId> = BTreeSet::new();
    for panel in 0..n_row_panels {
        let map = panel_patterns(a, panel, uf_i);
        pattern_set.extend(map.keys().copied());
        panel_maps.push(map);
    }
    let patterns: Vec<PatternId> = pattern_set.into_iter().collect();
    let np = patterns.len();

    let n_groups = n_row_panels * np;
    let mut groups = Vec::with_capacity(n_groups);
    let mut rpp = Vec::with_capacity(n_groups + 1);
    let mut npp = Vec::with_capacity(n_groups + 1);
    let mut cols: Vec<u32> = Vec::new();
    let mut annz: Vec<f32> = Vec::new();
    rpp.push(0u32);
    npp.push(0u32);

    for (panel, map) in panel_maps.iter().enumerate() {
        for &pattern in &patterns {
            let pc = pattern.popcount() as usize;
            let (real, padded) = match map.get(&pattern) {
                Some(group) => {
                    let real = group.cols.len();
                    let padded = real.div_ceil(uf_k as usize) * uf_k as usize;
                    cols.extend_from_slice(&group.cols);
                    annz.extend_from_slice(&group.vals);
                    let last = group.cols[real - 1];
                    for _ in real..padded {
                        cols.push(last);
                        annz.extend(std::iter::repeat_n(0.0f32, pc));
                    }
                    (real, padded)
                }
                None => (0, 0),
            };
            groups.push(GroupInfo {
                panel: panel as u32,
                pattern,
                padded_cols: padded as u32,
                real_cols: real as u32,
            });
            rpp.push(cols.len() as u32);
            npp.push(annz.len() as u32);
        }
    }

    EscMatrix {
        uf_i,
        uf_k,
        n_rows: a.n_rows,
        n_cols: a.n_cols,
        n_row_panels,
        patterns,
        groups,
        rpp,
        npp,
        cols,
        annz,
    }
}

/// Rebuilds the original CSR matrix; padding slots are dropped. Reports
/// overlapping slots or out-of-range columns as corruption.
pub fn reconstruct(t: &EscMatrix) -> Result<SparseMatrix, EscError> {
    let mut triplets: Vec<(u32, u32, f32)> = Vec::new();
    for (g, info) in t.groups.iter().enumerate() {
        let base = info.panel as usize * t.uf_i as usize;
        let cols = &t.cols[t.rpp[g] as usize..t.rpp[g + 1] as usize];
        let pc = info.pattern.popcount() as usize;
        let mut cursor = t.npp[g] as usize;
        for &col in cols.iter().take(info.real_cols as usize) {
            if col as usize >= t.n_cols {
                return Err(EscError::Corrupt(format!(
                    "group {g} column {col} out of range"
                )));
            }
            for (s, r) in info.pattern.row_offsets().enumerate() {
                let row = base + r as usize;
                if row >= t.n_rows {
                    return Err(EscError::Corrupt(format!(
                        "group {g} touches virtual row {row}"
                    )));
                }
                triplets.push((row as u32, col, t.annz[cursor + s]));
            }
            cursor += pc;
        }
    }
    triplets.sort_by_key(|&(r, c, _)| (r, c));
    for w in triplets.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            return Err(EscError::Corrupt(format!(
                "overlapping slot at ({}, {})",
                w[0].0, w[0].1
            )));
        }
    }

    let mut row_ptr = vec![0usize; t.n_rows + 1];
    let mut col_idx = Vec::with_capacity(triplets.len());
    let mut values = Vec::with_capacity(triplets.len());
    for &(r, c, v) in &triplets {
        row_ptr[r as usize + 1] += 1;
        col_idx.push(c as usize);
        values.push(v);
    }
    for r in 0..t.n_rows {
        row_ptr[r + 1] += row_ptr[r];
    }
    Ok(SparseMatrix {
        n_rows: t.n_rows,
        n_cols: t.n_cols,
        row_ptr,
        col_idx,
        values,
        synthetic_values: false,
    })
}

/// Thread-block count for a compressed matrix: every (panel, ordinal) pair
/// gets one block, absent pairs included as empty ranges.
pub fn grid_size(t: &EscMatrix) -> usize {
    t.num_patterns() * t.n_row_panels
}

// --- binary container -----------------------------------------------------
//
// Little-endian layout, 32-byte header:
//   "ESC1"  M  K  UFi  UFk  nGroups  numPatterns  pad0   (u32 fields)
// followed by the arrays in fixed order, no per-array framing (lengths are
// implied by the header and pointer terminals):
//   group table (panel, pattern, paddedCols as u32 each),
//   RPP (nGroups+1), NPP (nGroups+1), Cols (RPP terminal), ANNZ (NPP terminal).

pub const ESC_MAGIC: [u8; 4] = *b"ESC1";
pub const ESC_HEADER_BYTES: usize = 32;
pub const ESC_GROUP_RECORD_BYTES: usize = 12;

/// Exact size in bytes of the serialized container.
pub fn serialized_len(t: &EscMatrix) -> usize {
    ESC_HEADER_BYTES
        + ESC_GROUP_RECORD_BYTES * t.groups.len()
        + 4 * (t.rpp.len() + t.npp.len())
        + 4 * t.cols.len()
        + 4 * t.annz.len()
}

pub fn serialize(t: &EscMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(serialized_len(t));
    out.extend_from_slice(&ESC_MAGIC);
    for v in [
        t.n_rows as u32,
        t.n_cols as u32,
        t.uf_i,
        t.uf_k,
        t.groups.len() as u32,
        t.patterns.len() as u32,
        0u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(out.len(), ESC_HEADER_BYTES);
    for g in &t.groups {
        out.extend_from_slice(&g.panel.to_le_bytes());
        out.extend_from_slice(&g.pattern.0.to_le_bytes());
        out.extend_from_slice(&g.padded_cols.to_le_bytes());
    }
    for v in &t.rpp {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &t.npp {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &t.cols {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &t.annz {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EscError> {
        if self.pos + n > self.buf.len() {
            return Err(EscError::Truncated {
                need: self.pos + n,
                have: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, EscError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u32_vec(&mut self, n: usize) -> Result<Vec<u32>, EscError> {
        let b = self.take(4 * n)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>, EscError> {
        let b = self.take(4 * n)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<EscMatrix, EscError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != ESC_MAGIC {
        return Err(EscError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let uf_i = r.u32()?;
    let uf_k = r.u32()?;
    let n_groups = r.u32()? as usize;
    let num_patterns = r.u32()? as usize;
    let _pad = r.u32()?;

    let mut groups = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let panel = r.u32()?;
        let pattern = PatternId(r.u32()?);
        let padded_cols = r.u32()?;
        groups.push(GroupInfo {
            panel,
            pattern,
            padded_cols,
            real_cols: 0, // recomputed below
        });
    }
    let rpp = r.u32_vec(n_groups + 1)?;
    let npp = r.u32_vec(n_groups + 1)?;
    let n_cols_arr = *rpp.last().unwrap() as usize;
    let n_vals = *npp.last().unwrap() as usize;
    let cols = r.u32_vec(n_cols_arr)?;
    let annz = r.f32_vec(n_vals)?;
    if r.pos != bytes.len() {
        return Err(EscError::Corrupt(format!(
            "{} trailing bytes after arrays",
            bytes.len() - r.pos
        )));
    }

    // Padding repeats the last real column; real columns are strictly
    // increasing, so the real count is the padded count minus the excess of
    // the trailing equal run.
    for (g, info) in groups.iter_mut().enumerate() {
        let span = &cols[rpp[g] as usize..rpp[g + 1] as usize];
        info.real_cols = match span.last() {
            None => 0,
            Some(&last) => {
                let run = span.iter().rev().take_while(|&&c| c == last).count();
                (span.len() - run + 1) as u32
            }
        };
    }

    let n_row_panels = if num_patterns == 0 {
        row_panels(m, uf_i)
    } else {
        n_groups / num_patterns
    };
    let patterns: Vec<PatternId> = groups
        .iter()
        .take(num_patterns)
        .map(|g| g.pattern)
        .collect();

    let t = EscMatrix {
        uf_i,
        uf_k,
        n_rows: m,
        n_cols: k,
        n_row_panels,
        patterns,
        groups,
        rpp,
        npp,
        cols,
        annz,
    };
    t.validate()?;
    Ok(t)
}
