//! Deterministic CPU execution of a kernel IR with GPU semantics.
//!
//! Blocks run in ascending block index, lanes in ascending lane id, and
//! statements in program order, so accumulation order -- and therefore the
//! output bit pattern -- is reproducible. The simulator also counts FMAs,
//! element loads and atomic flushes; these are the tuner's cost inputs.
//!
//! The IR is first compiled to a compact plan (accumulator names resolved
//! to slots, arm bodies indexed by pattern) so the per-statement cost in
//! the lane-vectorized inner loop stays small.

use crate::esc::{grid_size, reconstruct, EscMatrix};
use crate::ir::{
    AOperand, BRow, FmaDst, Grid, Guard, KernelIR, Node, Range, Stage, Stmt,
};
use crate::matrix::{DenseMatrix, SparseMatrix};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("IR references unbound variable '{0}'")]
    Unbound(String),
    #[error("IR/format mismatch: {0}")]
    FormatMismatch(String),
    #[error("no dispatch arm for pattern {0:#b}")]
    MissingArm(u32),
    #[error("corrupt compressed matrix: {0}")]
    Esc(#[from] crate::esc::EscError),
}

/// Output matrix plus instruction and traffic counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub c: DenseMatrix,
    pub fma_count: u64,
    /// FMAs executed on zero-padding slots.
    pub padded_fma_count: u64,
    pub load_count_a: u64,
    pub load_count_b: u64,
    pub atomic_count: u64,
    pub max_accumulators_live: u32,
}

impl SimResult {
    /// FMAs per B element load; the register-reuse proxy.
    pub fn reuse_factor_b(&self) -> f64 {
        if self.load_count_b == 0 {
            1.0
        } else {
            self.fma_count as f64 / self.load_count_b as f64
        }
    }

    /// Machine-readable `key=value` block of the counters.
    pub fn report(&self) -> String {
        format!(
            "fma={}\npadded_fma={}\nload_a={}\nload_b={}\natomic={}\nreuse_b={:.6}\nmax_acc_live={}\n",
            self.fma_count,
            self.padded_fma_count,
            self.load_count_a,
            self.load_count_b,
            self.atomic_count,
            self.reuse_factor_b(),
            self.max_accumulators_live
        )
    }
}

/// Per-block execution counts, for trace-level assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockTrace {
    pub block: usize,
    pub fma: u64,
    pub atomic: u64,
}

// --- compiled plan ----------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum OpA {
    Dense { row_offset: u32, k_offset: u32 },
    Esc { offset: u32, kk: u32 },
}

#[derive(Debug, Clone, Copy)]
enum OpB {
    KOffset(u32),
    Br(u8),
}

#[derive(Debug, Clone, Copy)]
enum OpDst {
    DirectC { row_offset: u32 },
    Acc { slot: u32 },
}

#[derive(Debug, Clone, Copy)]
struct OpFma {
    guard: Option<Guard>,
    dst: OpDst,
    a: OpA,
    b: OpB,
    col_offset: u32,
    a_fresh: bool,
    b_fresh: bool,
}

#[derive(Debug, Clone)]
enum PNode {
    Loop {
        range: Range,
        step: u32,
        lanes: Option<u32>,
        axis: LaneAxis,
        body: Vec<PNode>,
    },
    Dispatch {
        arms: BTreeMap<u32, Arm>,
    },
    AccInit {
        slot: u32,
    },
    CursorInit,
    CursorAdvance {
        amount: u32,
    },
    ColOffset {
        index: u8,
    },
    Fma(OpFma),
    AtomicAdd {
        slot: u32,
        row_offset: u32,
        col_offset: u32,
    },
}

#[derive(Debug, Clone)]
struct Arm {
    body: Vec<PNode>,
    acc_slots: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LaneAxis {
    None,
    J,
    K,
}

struct Plan {
    grid: Grid,
    root: Vec<PNode>,
    needs_dense_a: bool,
    max_acc_slots: u32,
    max_col_offset_index: u8,
}

struct CompileCx {
    accs: BTreeMap<String, u32>,
    arm_pc: u32,
    needs_dense_a: bool,
    max_acc_slots: u32,
    max_br: u8,
    has_cursor_init: bool,
}

fn compile_nodes(nodes: &[Node], axis: LaneAxis, cx: &mut CompileCx) -> Result<Vec<PNode>, SimError> {
    let mut out = Vec::with_capacity(nodes.len());
    for n in nodes {
        match n {
            Node::Loop(l) => {
                let inner_axis = match (l.iter, l.lanes) {
                    ("j", Some(_)) => LaneAxis::J,
                    ("k", Some(_)) => LaneAxis::K,
                    _ => axis,
                };
                out.push(PNode::Loop {
                    range: l.range,
                    step: l.step,
                    lanes: l.lanes,
                    axis: inner_axis,
                    body: compile_nodes(&l.body, inner_axis, cx)?,
                });
            }
            Node::Dispatch(arms) => {
                let mut map = BTreeMap::new();
                for arm in arms {
                    let saved = std::mem::take(&mut cx.accs);
                    cx.arm_pc = arm.pattern.popcount();
                    let body = compile_nodes(&arm.body, axis, cx)?;
                    let acc_slots = cx.accs.len() as u32;
                    cx.max_acc_slots = cx.max_acc_slots.max(acc_slots);
                    cx.accs = saved;
                    map.insert(arm.pattern.0, Arm { body, acc_slots });
                }
                out.push(PNode::Dispatch { arms: map });
            }
            Node::Stmt(s) => out.push(compile_stmt(s, cx)?),
        }
    }
    Ok(out)
}

fn compile_stmt(s: &Stmt, cx: &mut CompileCx) -> Result<PNode, SimError> {
    Ok(match s {
        Stmt::AccInit { acc } => {
            let next = cx.accs.len() as u32;
            let slot = *cx.accs.entry(acc.clone()).or_insert(next);
            cx.max_acc_slots = cx.max_acc_slots.max(slot + 1);
            PNode::AccInit { slot }
        }
        Stmt::CursorInit => {
            cx.has_cursor_init = true;
            PNode::CursorInit
        }
        Stmt::CursorAdvance { amount } => PNode::CursorAdvance { amount: *amount },
        Stmt::ColOffset { index } => {
            cx.max_br = cx.max_br.max(*index);
            PNode::ColOffset { index: *index }
        }
        Stmt::AtomicAdd {
            acc,
            row_offset,
            col_offset,
        } => {
            let slot = *cx
                .accs
                .get(acc)
                .ok_or_else(|| SimError::Unbound(acc.clone()))?;
            PNode::AtomicAdd {
                slot,
                row_offset: *row_offset,
                col_offset: *col_offset,
            }
        }
        Stmt::Fma(f) => {
            let a = match f.a {
                AOperand::Dense {
                    row_offset,
                    k_offset,
                } => {
                    cx.needs_dense_a = true;
                    OpA::Dense {
                        row_offset,
                        k_offset,
                    }
                }
                AOperand::Esc { offset } => {
                    if !cx.has_cursor_init {
                        return Err(SimError::Unbound("t_nnz".into()));
                    }
                    let pc = cx.arm_pc.max(1);
                    OpA::Esc {
                        offset,
                        kk: offset / pc,
                    }
                }
            };
            if f.guard.is_some() {
                cx.needs_dense_a = true;
            }
            let b = match f.b_row {
                BRow::KOffset(o) => OpB::KOffset(o),
                BRow::Offset(x) => {
                    cx.max_br = cx.max_br.max(x);
                    OpB::Br(x)
                }
            };
            let dst = match &f.dst {
                FmaDst::DirectC { row_offset } => OpDst::DirectC {
                    row_offset: *row_offset,
                },
                FmaDst::Acc(name) => {
                    let slot = *cx
                        .accs
                        .get(name)
                        .ok_or_else(|| SimError::Unbound(name.clone()))?;
                    OpDst::Acc { slot }
                }
            };
            PNode::Fma(OpFma {
                guard: f.guard,
                dst,
                a,
                b,
                col_offset: f.col_offset,
                a_fresh: f.a_fresh,
                b_fresh: f.b_fresh,
            })
        }
    })
}

fn compile(ir: &KernelIR, esc: &EscMatrix) -> Result<Plan, SimError> {
    if ir.compaction && ir.stage < Stage::Coarsened {
        return Err(SimError::FormatMismatch(
            "compacted dispatch requires a coarsened kernel".into(),
        ));
    }
    if ir.stage == Stage::DataTransformed {
        if let Some(s) = &ir.schedule {
            if s.uf_i != esc.uf_i || s.uf_k != esc.uf_k {
                return Err(SimError::FormatMismatch(format!(
                    "kernel lowered for UFi={},UFk={} but format carries UFi={},UFk={}",
                    s.uf_i, s.uf_k, esc.uf_i, esc.uf_k
                )));
            }
        }
    }
    if let Grid::GroupBlocks {
        blocks,
        num_patterns,
        uf_i,
    } = ir.grid
    {
        if num_patterns != esc.num_patterns() || blocks != grid_size(esc) || uf_i != esc.uf_i {
            return Err(SimError::FormatMismatch(format!(
                "grid expects {blocks} blocks / {num_patterns} patterns, format has {} / {}",
                grid_size(esc),
                esc.num_patterns()
            )));
        }
    }
    let mut cx = CompileCx {
        accs: BTreeMap::new(),
        arm_pc: 0,
        needs_dense_a: false,
        max_acc_slots: 0,
        max_br: 0,
        has_cursor_init: false,
    };
    let root = compile_nodes(&ir.nest, LaneAxis::None, &mut cx)?;
    Ok(Plan {
        grid: ir.grid.clone(),
        root,
        needs_dense_a: cx.needs_dense_a,
        max_acc_slots: cx.max_acc_slots,
        max_col_offset_index: cx.max_br,
    })
}

// --- execution ---------------------------------------------------------------

struct Exec<'a> {
    esc: &'a EscMatrix,
    b: &'a [f32],
    c: Vec<f32>,
    m: usize,
    n: usize,
    kdim: usize,
    a_present: Vec<bool>,
    a_value: Vec<f32>,
    accs: Vec<f32>,
    br: Vec<usize>,
    lanes: usize,
    t_nnz: usize,
    i_base: usize,
    j: usize,
    k: usize,
    group: usize,
    pattern: u32,
    compacted: bool,
    row_map: Option<[u32; 32]>,
    fma: u64,
    padded_fma: u64,
    load_a: u64,
    load_b: u64,
    atomic: u64,
    max_acc_live: u32,
    block_fma: u64,
    block_atomic: u64,
}

impl<'a> Exec<'a> {
    /// Column index of the group's padded column list at a list position.
    #[inline]
    fn group_col(&self, pos: usize) -> usize {
        self.esc.cols[self.esc.rpp[self.group] as usize + pos] as usize
    }

    #[inline]
    fn present(&self, row: usize, col: usize) -> bool {
        row < self.m && self.a_present[row * self.kdim + col]
    }

    fn guard_holds(&self, g: &Guard, i_base: usize, col: usize) -> bool {
        for r in 0..32 {
            let bit = 1u32 << r;
            if g.require & bit != 0 && !self.present(i_base + r, col) {
                return false;
            }
            if g.forbid & bit != 0 && self.present(i_base + r, col) {
                return false;
            }
        }
        true
    }

    /// A-operand value and padding flag for the current k, given the loop
    /// range the k iterator came from.
    #[inline]
    fn a_value_at(&self, a: &OpA, range: Range) -> (f32, bool) {
        match (a, range) {
            (
                OpA::Dense {
                    row_offset,
                    k_offset,
                },
                Range::Reduction | Range::Cols | Range::Rows,
            ) => {
                let row = self.i_base + *row_offset as usize;
                let col = self.k + *k_offset as usize;
                (self.a_value[row * self.kdim + col], false)
            }
            (
                OpA::Dense {
                    row_offset,
                    k_offset,
                },
                Range::GroupCols { .. },
            ) => {
                let pos = self.k + *k_offset as usize;
                let real = self.esc.groups[self.group].real_cols as usize;
                if pos < real {
                    let col = self.group_col(pos);
                    let row = self.i_base + *row_offset as usize;
                    (self.a_value[row * self.kdim + col], false)
                } else {
                    (0.0, true)
                }
            }
            (OpA::Esc { offset, kk }, Range::EscSlots) => {
                let slot = self.k + *kk as usize;
                let real =
                    self.esc.rpp[self.group] as usize + self.esc.groups[self.group].real_cols as usize;
                (self.esc.annz[self.t_nnz + *offset as usize], slot >= real)
            }
            _ => unreachable!("operand/range combination rejected at compile time"),
        }
    }

    /// B row index for the current k.
    #[inline]
    fn b_row_at(&self, b: &OpB, range: Range) -> usize {
        match (b, range) {
            (OpB::KOffset(o), Range::Reduction | Range::Cols | Range::Rows) => {
                self.k + *o as usize
            }
            (OpB::KOffset(o), Range::GroupCols { .. }) => self.group_col(self.k + *o as usize),
            (OpB::Br(x), _) => self.br[*x as usize],
            _ => unreachable!(),
        }
    }
}

fn run_nodes(
    nodes: &[PNode],
    ex: &mut Exec<'_>,
    axis: LaneAxis,
    krange: Range,
) -> Result<(), SimError> {
    for node in nodes {
        match node {
            PNode::Loop {
                range,
                step,
                lanes,
                axis: loop_axis,
                body,
            } => {
                let step = *step as usize;
                let (lo, hi) = match range {
                    Range::Rows => (0usize, ex.m),
                    Range::Cols => (0usize, ex.n),
                    Range::Reduction => (0usize, ex.kdim),
                    Range::GroupCols { padded } => {
                        let g = &ex.esc.groups[ex.group];
                        let bound = if *padded {
                            g.padded_cols as usize
                        } else {
                            g.real_cols as usize
                        };
                        (0usize, bound)
                    }
                    Range::EscSlots => (
                        ex.esc.rpp[ex.group] as usize,
                        ex.esc.rpp[ex.group + 1] as usize,
                    ),
                };
                let inner_axis = if lanes.is_some() { *loop_axis } else { axis };
                let saved_lanes = ex.lanes;
                if let Some(l) = lanes {
                    ex.lanes = *l as usize;
                }
                let krange_inner = match range {
                    Range::Rows | Range::Cols => krange,
                    other => *other,
                };
                let mut v = lo;
                while v < hi {
                    match range {
                        Range::Rows => ex.i_base = v,
                        Range::Cols => ex.j = v,
                        _ => ex.k = v,
                    }
                    run_nodes(body, ex, inner_axis, krange_inner)?;
                    v += step;
                }
                ex.lanes = saved_lanes;
            }
            PNode::Dispatch { arms } => {
                // compacted dispatch executes the popcount-keyed template
                // body and maps its rank row offsets through the pattern's
                // set bits, mirroring the emitted row-offset table
                let (arm, row_map) = if ex.compacted {
                    let pc = ex.pattern.count_ones();
                    let template = (1u32 << pc) - 1;
                    let arm = arms
                        .get(&template)
                        .ok_or(SimError::MissingArm(template))?;
                    let mut map = [0u32; 32];
                    for (rank, r) in (0..32).filter(|r| ex.pattern & (1 << r) != 0).enumerate() {
                        map[rank] = r;
                    }
                    (arm, Some(map))
                } else {
                    let arm = arms
                        .get(&ex.pattern)
                        .ok_or(SimError::MissingArm(ex.pattern))?;
                    (arm, None)
                };
                ex.row_map = row_map;
                ex.max_acc_live = ex.max_acc_live.max(arm.acc_slots);
                run_nodes(&arm.body, ex, axis, krange)?;
                ex.row_map = None;
            }
            PNode::AccInit { slot } => {
                let l = ex.lanes;
                ex.accs[*slot as usize * l..(*slot as usize + 1) * l].fill(0.0);
            }
            PNode::CursorInit => ex.t_nnz = ex.esc.npp[ex.group] as usize,
            PNode::CursorAdvance { amount } => ex.t_nnz += *amount as usize,
            PNode::ColOffset { index } => {
                ex.br[*index as usize] = ex.group_col(ex.k + *index as usize - ex.esc.rpp[ex.group] as usize)
            }
            PNode::Fma(op) => exec_fma(op, ex, axis, krange),
            PNode::AtomicAdd {
                slot,
                row_offset,
                col_offset,
            } => exec_atomic(*slot, *row_offset, *col_offset, ex, axis),
        }
    }
    Ok(())
}

#[inline]
fn exec_fma(op: &OpFma, ex: &mut Exec<'_>, axis: LaneAxis, krange: Range) {
    match axis {
        LaneAxis::J => {
            let col0 = ex.j + op.col_offset as usize;
            if col0 >= ex.n {
                return;
            }
            let active = ex.lanes.min(ex.n - col0);
            let (a, padded) = ex.a_value_at(&op.a, krange);
            let brow = ex.b_row_at(&op.b, krange);
            let bslice = &ex.b[brow * ex.n + col0..brow * ex.n + col0 + active];
            match op.dst {
                OpDst::Acc { slot } => {
                    let l = ex.lanes;
                    let accs = &mut ex.accs[slot as usize * l..slot as usize * l + active];
                    for (acc, bv) in accs.iter_mut().zip(bslice) {
                        *acc += a * bv;
                    }
                }
                OpDst::DirectC { row_offset } => {
                    let row = ex.i_base + row_offset as usize;
                    let cs = &mut ex.c[row * ex.n + col0..row * ex.n + col0 + active];
                    for (cv, bv) in cs.iter_mut().zip(bslice) {
                        *cv += a * bv;
                    }
                }
            }
            let active = active as u64;
            ex.fma += active;
            ex.block_fma += active;
            if padded {
                ex.padded_fma += active;
            }
            if op.a_fresh {
                ex.load_a += active;
            }
            if op.b_fresh {
                ex.load_b += active;
            }
        }
        LaneAxis::None => {
            let col = ex.j + op.col_offset as usize;
            if col >= ex.n {
                return;
            }
            if let Some(g) = &op.guard {
                let gcol = match (&op.a, krange) {
                    (OpA::Dense { k_offset, .. }, Range::Reduction) => ex.k + *k_offset as usize,
                    (OpA::Dense { k_offset, .. }, Range::GroupCols { .. }) => {
                        ex.group_col(ex.k + *k_offset as usize)
                    }
                    _ => ex.k,
                };
                if gcol >= ex.kdim || !ex.guard_holds(g, ex.i_base, gcol) {
                    return;
                }
            }
            let (a, padded) = ex.a_value_at(&op.a, krange);
            let brow = ex.b_row_at(&op.b, krange);
            let bv = ex.b[brow * ex.n + col];
            match op.dst {
                OpDst::Acc { slot } => ex.accs[slot as usize * ex.lanes.max(1)] += a * bv,
                OpDst::DirectC { row_offset } => {
                    let row = ex.i_base + row_offset as usize;
                    ex.c[row * ex.n + col] += a * bv;
                }
            }
            ex.fma += 1;
            ex.block_fma += 1;
            if padded {
                ex.padded_fma += 1;
            }
            if op.a_fresh {
                ex.load_a += 1;
            }
            if op.b_fresh {
                ex.load_b += 1;
            }
        }
        LaneAxis::K => {
            // k is lane-mapped (flat baseline style): evaluate per lane in
            // ascending lane order; writes to the same C element serialize.
            let col = ex.j + op.col_offset as usize;
            if col >= ex.n {
                return;
            }
            let k0 = ex.k;
            for lane in 0..ex.lanes {
                let kl = k0 + lane;
                let (a, brow, padded) = match (&op.a, krange) {
                    (
                        OpA::Dense {
                            row_offset,
                            k_offset,
                        },
                        Range::Reduction,
                    ) => {
                        let kc = kl + *k_offset as usize;
                        if kc >= ex.kdim {
                            continue;
                        }
                        if let Some(g) = &op.guard {
                            if !ex.guard_holds(g, ex.i_base, kc) {
                                continue;
                            }
                        }
                        let row = ex.i_base + *row_offset as usize;
                        (ex.a_value[row * ex.kdim + kc], kc, false)
                    }
                    _ => continue,
                };
                let bv = ex.b[brow * ex.n + col];
                match op.dst {
                    OpDst::Acc { slot } => ex.accs[slot as usize * ex.lanes + lane] += a * bv,
                    OpDst::DirectC { row_offset } => {
                        let row = ex.i_base + row_offset as usize;
                        ex.c[row * ex.n + col] += a * bv;
                    }
                }
                ex.fma += 1;
                ex.block_fma += 1;
                if padded {
                    ex.padded_fma += 1;
                }
                if op.a_fresh {
                    ex.load_a += 1;
                }
                if op.b_fresh {
                    ex.load_b += 1;
                }
            }
        }
    }
}

#[inline]
fn exec_atomic(slot: u32, row_offset: u32, col_offset: u32, ex: &mut Exec<'_>, axis: LaneAxis) {
    let row_offset = match ex.row_map {
        Some(map) => map[row_offset as usize],
        None => row_offset,
    };
    let row = ex.i_base + row_offset as usize;
    // virtual rows of a ragged final panel receive no flush; their
    // accumulators are always 0.0 since no pattern contains a virtual row
    if row >= ex.m {
        return;
    }
    match axis {
        LaneAxis::J => {
            let col0 = ex.j + col_offset as usize;
            if col0 >= ex.n {
                return;
            }
            let active = ex.lanes.min(ex.n - col0);
            let l = ex.lanes;
            for lane in 0..active {
                ex.c[row * ex.n + col0 + lane] += ex.accs[slot as usize * l + lane];
            }
            ex.atomic += active as u64;
            ex.block_atomic += active as u64;
        }
        _ => {
            let col = ex.j + col_offset as usize;
            if col >= ex.n {
                return;
            }
            ex.c[row * ex.n + col] += ex.accs[slot as usize * ex.lanes.max(1)];
            ex.atomic += 1;
            ex.block_atomic += 1;
        }
    }
}

fn run(
    ir: &KernelIR,
    esc: &EscMatrix,
    b: &DenseMatrix,
    mut trace: Option<&mut Vec<BlockTrace>>,
) -> Result<SimResult, SimError> {
    if b.n_rows != esc.n_cols {
        return Err(SimError::ShapeMismatch(format!(
            "B has {} rows but A has {} columns",
            b.n_rows, esc.n_cols
        )));
    }
    if b.n_cols == 0 {
        return Err(SimError::ShapeMismatch("B has zero columns".into()));
    }
    let plan = compile(ir, esc)?;

    let (a_present, a_value) = if plan.needs_dense_a {
        let a = reconstruct(esc)?;
        let mut present = vec![false; esc.n_rows * esc.n_cols];
        let mut value = vec![0.0f32; esc.n_rows * esc.n_cols];
        for row in 0..a.n_rows {
            for (c, v) in a.row_cols(row).iter().zip(a.row_values(row)) {
                present[row * a.n_cols + c] = true;
                value[row * a.n_cols + c] = *v;
            }
        }
        (present, value)
    } else {
        (Vec::new(), Vec::new())
    };

    let mut ex = Exec {
        esc,
        b: &b.data,
        c: vec![0.0; esc.n_rows * b.n_cols],
        m: esc.n_rows,
        n: b.n_cols,
        kdim: esc.n_cols,
        a_present,
        a_value,
        accs: vec![0.0; plan.max_acc_slots.max(1) as usize * 1024],
        br: vec![0; plan.max_col_offset_index as usize + 1],
        lanes: 1,
        t_nnz: 0,
        i_base: 0,
        j: 0,
        k: 0,
        group: 0,
        pattern: 0,
        compacted: ir.compaction,
        row_map: None,
        fma: 0,
        padded_fma: 0,
        load_a: 0,
        load_b: 0,
        atomic: 0,
        max_acc_live: 0,
        block_fma: 0,
        block_atomic: 0,
    };

    match plan.grid {
        Grid::Sequential => {
            run_nodes(&plan.root, &mut ex, LaneAxis::None, Range::Reduction)?;
        }
        Grid::PanelBlocks { uf_i } => {
            let blocks = crate::esc::row_panels(ex.m, uf_i);
            for blk in 0..blocks {
                ex.i_base = blk * uf_i as usize;
                ex.block_fma = 0;
                ex.block_atomic = 0;
                run_nodes(&plan.root, &mut ex, LaneAxis::None, Range::Reduction)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(BlockTrace {
                        block: blk,
                        fma: ex.block_fma,
                        atomic: ex.block_atomic,
                    });
                }
            }
        }
        Grid::GroupBlocks {
            blocks,
            num_patterns,
            uf_i,
        } => {
            for blk in 0..blocks {
                let panel = blk / num_patterns;
                let ordinal = blk % num_patterns;
                ex.group = blk;
                ex.pattern = esc.patterns[ordinal].0;
                ex.i_base = panel * uf_i as usize;
                ex.block_fma = 0;
                ex.block_atomic = 0;
                run_nodes(&plan.root, &mut ex, LaneAxis::None, Range::Reduction)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(BlockTrace {
                        block: blk,
                        fma: ex.block_fma,
                        atomic: ex.block_atomic,
                    });
                }
            }
        }
    }

    Ok(SimResult {
        c: DenseMatrix {
            n_rows: esc.n_rows,
            n_cols: b.n_cols,
            data: ex.c,
        },
        fma_count: ex.fma,
        padded_fma_count: ex.padded_fma,
        load_count_a: ex.load_a,
        load_count_b: ex.load_b,
        atomic_count: ex.atomic,
        max_accumulators_live: ex.max_acc_live,
    })
}

/// Executes the kernel over `B`, producing `C` and the counters.
pub fn simulate(ir: &KernelIR, esc: &EscMatrix, b: &DenseMatrix) -> Result<SimResult, SimError> {
    run(ir, esc, b, None)
}

/// Like [`simulate`] but also returns per-block counts.
pub fn simulate_traced(
    ir: &KernelIR,
    esc: &EscMatrix,
    b: &DenseMatrix,
) -> Result<(SimResult, Vec<BlockTrace>), SimError> {
    let mut trace = Vec::new();
    let result = run(ir, esc, b, Some(&mut trace))?;
    Ok((result, trace))
}

/// Reference SPMM: the plain triple loop in fixed i, k, j order.
pub fn oracle_spmm(a: &SparseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, SimError> {
    if b.n_rows != a.n_cols {
        return Err(SimError::ShapeMismatch(format!(
            "B has {} rows but A has {} columns",
            b.n_rows, a.n_cols
        )));
    }
    let n = b.n_cols;
    let mut c = DenseMatrix::zeros(a.n_rows, n);
    for i in 0..a.n_rows {
        for (col, v) in a.row_cols(i).iter().zip(a.row_values(i)) {
            let brow = &b.data[col * n..col * n + n];
            let crow = &mut c.data[i * n..i * n + n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += v * bv;
            }
        }
    }
    Ok(c)
}

/// One offending element of a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub row: usize,
    pub col: usize,
    pub got: f32,
    pub want: f32,
    pub rel_err: f64,
}

/// Elementwise max-relative-error report; the denominator is
/// `max(|reference|, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub max_rel_err: f64,
    pub rel_tol: f64,
    pub pass: bool,
    /// Worst offenders beyond tolerance, largest first (up to 8).
    pub offenders: Vec<Mismatch>,
}

pub fn compare(c: &DenseMatrix, reference: &DenseMatrix, rel_tol: f64) -> Result<CompareReport, SimError> {
    if c.n_rows != reference.n_rows || c.n_cols != reference.n_cols {
        return Err(SimError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            c.n_rows, c.n_cols, reference.n_rows, reference.n_cols
        )));
    }
    let mut max_rel_err = 0.0f64;
    let mut offenders: Vec<Mismatch> = Vec::new();
    for row in 0..c.n_rows {
        for col in 0..c.n_cols {
            let got = c.at(row, col);
            let want = reference.at(row, col);
            let denom = (want.abs() as f64).max(1.0);
            let rel_err = ((got as f64) - (want as f64)).abs() / denom;
            if rel_err > max_rel_err {
                max_rel_err = rel_err;
            }
            if rel_err > rel_tol {
                offenders.push(Mismatch {
                    row,
                    col,
                    got,
                    want,
                    rel_err,
                });
            }
        }
    }
    offenders.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
    offenders.truncate(8);
    Ok(CompareReport {
        max_rel_err,
        rel_tol,
        pass: max_rel_err <= rel_tol,
        offenders,
    })
}

/// Default relative tolerance for 32-bit accumulation at desk scale.
pub const DEFAULT_REL_TOL: f64 = 1e-4;
