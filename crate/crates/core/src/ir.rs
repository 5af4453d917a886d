//! Loop-nest IR for the SPMM kernel and the two primitive directives,
//! `unroll` and `map`, that the lowering passes are built from.
//!
//! The IR is a small tree: loops over the fixed iterators `i`, `j`, `k`,
//! statements, and (after thread-block mapping) a per-pattern dispatch.
//! Access targets are the SPMM operands plus the compressed-format arrays.
//! IR values are immutable; every directive returns a new tree.

use crate::esc::PatternId;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IrError {
    #[error("unknown iterator '{0}'")]
    UnknownIterator(String),
    #[error("iterator '{0}' is already bound")]
    AlreadyBound(String),
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("{pass} expects a {expected} kernel, found {found}")]
    StageMismatch {
        pass: &'static str,
        expected: &'static str,
        found: &'static str,
    },
    #[error("schedule/format mismatch: {0}")]
    ScheduleMismatch(String),
    #[error("cannot unroll '{0}': loop body already carries accumulators")]
    UnrollAfterCoarsen(String),
}

/// The 4-tuple driving all lowering: row-panel unroll factor, coarsening
/// unroll factor along k, B column groups per thread, and threads per block.
///
/// Written `UFi-UFk-WarpTile-ThreadBlockSize` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Schedule {
    pub uf_i: u32,
    pub uf_k: u32,
    pub warp_tile: u32,
    pub thread_block_size: u32,
}

/// Hard cap on the row unroll factor: enumeration materializes
/// `2^UFi - 1` pattern bodies, so larger factors blow up generated code.
pub const MAX_UF_I: u32 = 8;
pub const MAX_THREAD_BLOCK: u32 = 1024;

impl Schedule {
    pub fn new(
        uf_i: u32,
        uf_k: u32,
        warp_tile: u32,
        thread_block_size: u32,
    ) -> Result<Self, IrError> {
        if uf_i < 1 || uf_k < 1 || warp_tile < 1 || thread_block_size < 1 {
            return Err(IrError::BadSchedule(
                "all schedule parameters must be at least 1".into(),
            ));
        }
        if uf_i > MAX_UF_I {
            return Err(IrError::BadSchedule(format!(
                "UFi = {uf_i} exceeds the supported maximum {MAX_UF_I}"
            )));
        }
        if thread_block_size % 32 != 0 {
            return Err(IrError::BadSchedule(format!(
                "thread block size {thread_block_size} is not a multiple of 32"
            )));
        }
        if thread_block_size > MAX_THREAD_BLOCK {
            return Err(IrError::BadSchedule(format!(
                "thread block size {thread_block_size} exceeds {MAX_THREAD_BLOCK}"
            )));
        }
        Ok(Self {
            uf_i,
            uf_k,
            warp_tile,
            thread_block_size,
        })
    }

    /// Parses the `UFi-UFk-WarpTile-TBS` notation, e.g. `4-7-1-32`.
    pub fn parse(s: &str) -> Result<Self, IrError> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 4 {
            return Err(IrError::BadSchedule(format!(
                "'{s}' is not of the form UFi-UFk-WarpTile-TBS"
            )));
        }
        let mut v = [0u32; 4];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| IrError::BadSchedule(format!("bad number '{part}' in '{s}'")))?;
        }
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Columns of B covered per outer j step.
    pub fn j_step(&self) -> u32 {
        self.warp_tile * self.thread_block_size
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}-{}",
            self.uf_i, self.uf_k, self.warp_tile, self.thread_block_size
        )
    }
}

/// Pipeline position of an IR; passes check it as their precondition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Scalar,
    UnrolledRows,
    Enumerated,
    BlockMapped,
    ThreadMapped,
    Coarsened,
    DataTransformed,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Scalar => "scalar",
            Stage::UnrolledRows => "row-unrolled",
            Stage::Enumerated => "enumerated",
            Stage::BlockMapped => "block-mapped",
            Stage::ThreadMapped => "thread-mapped",
            Stage::Coarsened => "coarsened",
            Stage::DataTransformed => "data-transformed",
        }
    }
}

/// How the kernel grid is bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Grid {
    /// Plain loop nest, no blocks.
    Sequential,
    /// `i = blockIdx.x * UFi`; one block per row panel.
    PanelBlocks { uf_i: u32 },
    /// One block per (panel, pattern ordinal) pair:
    /// `panel = blockIdx.x / num_patterns`, `ordinal = blockIdx.x % num_patterns`.
    GroupBlocks {
        blocks: usize,
        num_patterns: usize,
        uf_i: u32,
    },
}

/// Loop domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Range {
    /// `0..M`
    Rows,
    /// `0..N`
    Cols,
    /// `0..K`
    Reduction,
    /// Positions in the current block's group column list (block-mapped,
    /// before the data transform). `padded` pads the list with repeats of
    /// the last column carrying value 0.0, making the trip count a multiple
    /// of the step.
    GroupCols { padded: bool },
    /// Slot indices `RPP[g]..RPP[g+1]` of the compressed format.
    EscSlots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub iter: &'static str,
    pub range: Range,
    pub step: u32,
    /// Lane binding: `iter + tid` with `tid` in `0..lanes`.
    pub lanes: Option<u32>,
    pub body: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Loop(Loop),
    Stmt(Stmt),
    /// Per-pattern bodies; a block runs exactly the arm whose pattern equals
    /// its decoded pattern ordinal's mask.
    Dispatch(Vec<DispatchArm>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchArm {
    pub pattern: PatternId,
    pub body: Vec<Node>,
}

/// Conjunction guard over the panel rows at the current column of A:
/// every `require` row must be nonzero, every `forbid` row zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Guard {
    pub require: u32,
    pub forbid: u32,
}

/// A operand of an FMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AOperand {
    /// `A[i + row_offset][k + k_offset]` (value 0.0 on padded positions).
    Dense { row_offset: u32, k_offset: u32 },
    /// `ANNZ[t_nnz + offset]`
    Esc { offset: u32 },
}

/// Row index of the B operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BRow {
    /// `B[k + k_offset][..]`
    KOffset(u32),
    /// `B[brX][..]` where `brX = Cols[k + x]` was declared in scope.
    Offset(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FmaDst {
    /// `C[i + row_offset][col] +=` directly (before coarsening).
    DirectC { row_offset: u32 },
    /// Accumulate into a named register.
    Acc(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmaStmt {
    pub guard: Option<Guard>,
    pub dst: FmaDst,
    pub a: AOperand,
    pub b_row: BRow,
    /// Column offset added to the (lane-adjusted) j iterator.
    pub col_offset: u32,
    /// False when the operand is register-resident from an earlier
    /// statement of the same body execution.
    pub a_fresh: bool,
    pub b_fresh: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// `float <acc> = 0.0f;`
    AccInit { acc: String },
    /// `int t_nnz = NPP[g];`
    CursorInit,
    /// `t_nnz += amount;`
    CursorAdvance { amount: u32 },
    /// `int br<x> = Cols[k + x];`
    ColOffset { index: u8 },
    Fma(FmaStmt),
    /// `atomicAdd(&C[i + row_offset][col], <acc>);`
    AtomicAdd {
        acc: String,
        row_offset: u32,
        col_offset: u32,
    },
}

/// The lowered (or partially lowered) kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelIR {
    pub stage: Stage,
    pub grid: Grid,
    pub nest: Vec<Node>,
    pub schedule: Option<Schedule>,
    /// Emit row offsets as `i+0` once the row loop has been unrolled.
    pub explicit_row_offsets: bool,
    /// Emit reduction offsets as `k+0` once the k loop has been unrolled.
    pub explicit_k_offsets: bool,
    /// Keyed-by-popcount emission requested (set by the emitter).
    pub compaction: bool,
}

/// The dense three-loop SPMM nest with a guarded multiply-add:
/// `for i, for k, for j: if(A[i][k]) C[i][j] += A[i][k] * B[k][j]`.
pub fn build_spmm_ir() -> KernelIR {
    let fma = Stmt::Fma(FmaStmt {
        guard: Some(Guard {
            require: 0b1,
            forbid: 0,
        }),
        dst: FmaDst::DirectC { row_offset: 0 },
        a: AOperand::Dense {
            row_offset: 0,
            k_offset: 0,
        },
        b_row: BRow::KOffset(0),
        col_offset: 0,
        a_fresh: true,
        b_fresh: true,
    });
    let j_loop = Loop {
        iter: "j",
        range: Range::Cols,
        step: 1,
        lanes: None,
        body: vec![Node::Stmt(fma)],
    };
    let k_loop = Loop {
        iter: "k",
        range: Range::Reduction,
        step: 1,
        lanes: None,
        body: vec![Node::Loop(j_loop)],
    };
    let i_loop = Loop {
        iter: "i",
        range: Range::Rows,
        step: 1,
        lanes: None,
        body: vec![Node::Loop(k_loop)],
    };
    KernelIR {
        stage: Stage::Scalar,
        grid: Grid::Sequential,
        nest: vec![Node::Loop(i_loop)],
        schedule: None,
        explicit_row_offsets: false,
        explicit_k_offsets: false,
        compaction: false,
    }
}

fn shift_stmt(stmt: &Stmt, iter: &str, shift: u32) -> Result<Stmt, IrError> {
    let mut s = stmt.clone();
    match (&mut s, iter) {
        (Stmt::Fma(f), "i") => {
            if let FmaDst::DirectC { row_offset } = &mut f.dst {
                *row_offset += shift;
            } else {
                return Err(IrError::UnrollAfterCoarsen("i".into()));
            }
            if let AOperand::Dense { row_offset, .. } = &mut f.a {
                *row_offset += shift;
            }
            if let Some(g) = &mut f.guard {
                g.require <<= shift;
                g.forbid <<= shift;
            }
        }
        (Stmt::Fma(f), "k") => {
            if let AOperand::Dense { k_offset, .. } = &mut f.a {
                *k_offset += shift;
            } else {
                return Err(IrError::UnrollAfterCoarsen("k".into()));
            }
            if let BRow::KOffset(o) = &mut f.b_row {
                *o += shift;
            }
        }
        (Stmt::Fma(f), "j") => {
            f.col_offset += shift;
        }
        (Stmt::AtomicAdd { .. }, _) | (Stmt::AccInit { .. }, _) => {
            return Err(IrError::UnrollAfterCoarsen(iter.to_string()));
        }
        (Stmt::CursorInit, _) | (Stmt::CursorAdvance { .. }, _) | (Stmt::ColOffset { .. }, _) => {
            return Err(IrError::UnrollAfterCoarsen(iter.to_string()));
        }
        _ => {}
    }
    Ok(s)
}

/// Unroll-and-jam of one statement list: inner loops are kept single (their
/// own lists jammed recursively) while each maximal run of consecutive
/// statements is replicated per offset, whole run first, then the next
/// offset.
fn jam_nodes(nodes: &[Node], iter: &str, uf: u32, step: u32) -> Result<Vec<Node>, IrError> {
    let mut out = Vec::new();
    let mut run: Vec<&Stmt> = Vec::new();
    let flush = |run: &mut Vec<&Stmt>, out: &mut Vec<Node>| -> Result<(), IrError> {
        if run.is_empty() {
            return Ok(());
        }
        for o in 0..uf {
            for s in run.iter() {
                out.push(Node::Stmt(shift_stmt(s, iter, o * step)?));
            }
        }
        run.clear();
        Ok(())
    };
    for n in nodes {
        match n {
            Node::Stmt(s) => run.push(s),
            Node::Loop(l) => {
                flush(&mut run, &mut out)?;
                out.push(Node::Loop(Loop {
                    body: jam_nodes(&l.body, iter, uf, step)?,
                    ..l.clone()
                }));
            }
            Node::Dispatch(arms) => {
                flush(&mut run, &mut out)?;
                out.push(Node::Dispatch(
                    arms.iter()
                        .map(|a| {
                            Ok(DispatchArm {
                                pattern: a.pattern,
                                body: jam_nodes(&a.body, iter, uf, step)?,
                            })
                        })
                        .collect::<Result<_, IrError>>()?,
                ));
            }
        }
    }
    flush(&mut run, &mut out)?;
    Ok(out)
}

fn unroll_nodes(nodes: &[Node], iter: &str, uf: u32, found: &mut bool) -> Result<Vec<Node>, IrError> {
    nodes
        .iter()
        .map(|n| match n {
            Node::Loop(l) if l.iter == iter => {
                *found = true;
                Ok(Node::Loop(Loop {
                    iter: l.iter,
                    range: l.range,
                    step: l.step * uf,
                    lanes: l.lanes,
                    body: jam_nodes(&l.body, iter, uf, l.step)?,
                }))
            }
            Node::Loop(l) => Ok(Node::Loop(Loop {
                body: unroll_nodes(&l.body, iter, uf, found)?,
                ..l.clone()
            })),
            Node::Stmt(s) => Ok(Node::Stmt(s.clone())),
            Node::Dispatch(arms) => Ok(Node::Dispatch(
                arms.iter()
                    .map(|a| {
                        Ok(DispatchArm {
                            pattern: a.pattern,
                            body: unroll_nodes(&a.body, iter, uf, found)?,
                        })
                    })
                    .collect::<Result<_, IrError>>()?,
            )),
        })
        .collect()
}

/// Unrolls the named loop: its step is multiplied by `uf` and statements
/// touching the iterator are jammed: replicated once per offset
/// `0, step, .., (uf-1)*step` with the offset substituted, inner loops kept
/// single, original order preserved within each replica.
pub fn unroll(ir: &KernelIR, iter: &str, uf: u32) -> Result<KernelIR, IrError> {
    assert!(uf >= 1);
    if uf == 1 {
        let mut out = ir.clone();
        mark_explicit(&mut out, iter);
        return Ok(out);
    }
    let mut found = false;
    let nest = unroll_nodes(&ir.nest, iter, uf, &mut found)?;
    if !found {
        return Err(IrError::UnknownIterator(iter.to_string()));
    }
    let mut out = KernelIR { nest, ..ir.clone() };
    mark_explicit(&mut out, iter);
    Ok(out)
}

fn mark_explicit(ir: &mut KernelIR, iter: &str) {
    match iter {
        "i" => ir.explicit_row_offsets = true,
        "k" => ir.explicit_k_offsets = true,
        _ => {}
    }
}

/// Binding kinds for [`map_iter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapBinding {
    /// Delete the loop and read the iterator off the block index.
    Block,
    /// Step the loop by `stride` and add the lane id to the iterator.
    Lane { stride: u32 },
}

/// Applies the mapping directive: block binding removes the (top-level) loop
/// and derives the iterator from the block index; lane binding sets the loop
/// step to the stride and adds `tid` to the iterator in all accesses.
pub fn map_iter(ir: &KernelIR, iter: &str, binding: MapBinding) -> Result<KernelIR, IrError> {
    match binding {
        MapBinding::Block => {
            if ir.grid != Grid::Sequential {
                return Err(IrError::AlreadyBound(iter.to_string()));
            }
            let Some(Node::Loop(top)) = ir.nest.first() else {
                return Err(IrError::UnknownIterator(iter.to_string()));
            };
            if top.iter != iter {
                return Err(IrError::UnknownIterator(iter.to_string()));
            }
            let mut out = ir.clone();
            out.grid = Grid::PanelBlocks { uf_i: top.step };
            out.nest = top.body.clone();
            Ok(out)
        }
        MapBinding::Lane { stride } => {
            let mut found = false;
            let mut bound = false;
            let nest = lane_bind(&ir.nest, iter, stride, &mut found, &mut bound);
            if bound {
                return Err(IrError::AlreadyBound(iter.to_string()));
            }
            if !found {
                return Err(IrError::UnknownIterator(iter.to_string()));
            }
            Ok(KernelIR { nest, ..ir.clone() })
        }
    }
}

fn lane_bind(nodes: &[Node], iter: &str, stride: u32, found: &mut bool, bound: &mut bool) -> Vec<Node> {
    nodes
        .iter()
        .map(|n| match n {
            Node::Loop(l) if l.iter == iter => {
                *found = true;
                if l.lanes.is_some() {
                    *bound = true;
                }
                Node::Loop(Loop {
                    step: stride,
                    lanes: Some(stride),
                    ..l.clone()
                })
            }
            Node::Loop(l) => Node::Loop(Loop {
                body: lane_bind(&l.body, iter, stride, found, bound),
                ..l.clone()
            }),
            Node::Dispatch(arms) => Node::Dispatch(
                arms.iter()
                    .map(|a| DispatchArm {
                        pattern: a.pattern,
                        body: lane_bind(&a.body, iter, stride, found, bound),
                    })
                    .collect(),
            ),
            other => other.clone(),
        })
        .collect()
}

// --- access-function view ---------------------------------------------------

/// Array touched by an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    A,
    B,
    C,
    Annz,
    ColsArr,
    Rpp,
    Npp,
}

/// Flattened view of one access: integer coefficients per iterator plus a
/// constant, and at most one named indirect offset variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessFunction {
    pub target: Target,
    pub affine: BTreeMap<&'static str, i64>,
    pub constant: i64,
    pub indirect: Option<String>,
}

fn push_affine(
    out: &mut Vec<AccessFunction>,
    target: Target,
    terms: &[(&'static str, i64)],
    constant: i64,
    indirect: Option<String>,
) {
    let mut affine = BTreeMap::new();
    for &(name, coeff) in terms {
        if coeff != 0 {
            affine.insert(name, coeff);
        }
    }
    out.push(AccessFunction {
        target,
        affine,
        constant,
        indirect,
    });
}

fn collect_accesses(nodes: &[Node], lane_iters: &[(&'static str, bool)], out: &mut Vec<AccessFunction>) {
    let lane_on = |name: &str| {
        lane_iters
            .iter()
            .any(|(iter, lanes)| *iter == name && *lanes)
    };
    for n in nodes {
        match n {
            Node::Loop(l) => {
                let mut inner = lane_iters.to_vec();
                inner.push((l.iter, l.lanes.is_some()));
                collect_accesses(&l.body, &inner, out);
            }
            Node::Dispatch(arms) => {
                for a in arms {
                    collect_accesses(&a.body, lane_iters, out);
                }
            }
            Node::Stmt(Stmt::Fma(f)) => {
                let jt = if lane_on("j") { 1 } else { 0 };
                match f.a {
                    AOperand::Dense {
                        row_offset,
                        k_offset,
                    } => push_affine(
                        out,
                        Target::A,
                        &[("i", 1), ("k", 1)],
                        row_offset as i64 + k_offset as i64,
                        None,
                    ),
                    AOperand::Esc { offset } => push_affine(
                        out,
                        Target::Annz,
                        &[],
                        offset as i64,
                        Some("t_nnz".into()),
                    ),
                }
                match f.b_row {
                    BRow::KOffset(o) => push_affine(
                        out,
                        Target::B,
                        &[("k", 1), ("j", 1), ("tid", jt)],
                        o as i64 + f.col_offset as i64,
                        None,
                    ),
                    BRow::Offset(x) => push_affine(
                        out,
                        Target::B,
                        &[("j", 1), ("tid", jt)],
                        f.col_offset as i64,
                        Some(format!("br{x}")),
                    ),
                }
                if let FmaDst::DirectC { row_offset } = &f.dst {
                    push_affine(
                        out,
                        Target::C,
                        &[("i", 1), ("j", 1), ("tid", jt)],
                        *row_offset as i64 + f.col_offset as i64,
                        None,
                    );
                }
            }
            Node::Stmt(Stmt::AtomicAdd {
                row_offset,
                col_offset,
                ..
            }) => {
                let jt = if lane_on("j") { 1 } else { 0 };
                push_affine(
                    out,
                    Target::C,
                    &[("i", 1), ("j", 1), ("tid", jt)],
                    *row_offset as i64 + *col_offset as i64,
                    None,
                );
            }
            Node::Stmt(Stmt::ColOffset { index }) => {
                push_affine(out, Target::ColsArr, &[("k", 1)], *index as i64, None);
            }
            Node::Stmt(_) => {}
        }
    }
}

/// Every memory access of the kernel as a flattened access function.
pub fn access_functions(ir: &KernelIR) -> Vec<AccessFunction> {
    let mut out = Vec::new();
    collect_accesses(&ir.nest, &[], &mut out);
    out
}

// --- pretty printer ---------------------------------------------------------

struct Printer {
    out: String,
    depth: usize,
    explicit_rows: bool,
    explicit_k: bool,
    lane_j: bool,
}

impl Printer {
    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn row_expr(&self, off: u32) -> String {
        if self.explicit_rows {
            format!("i+{off}")
        } else if off == 0 {
            "i".into()
        } else {
            format!("i+{off}")
        }
    }

    fn k_expr(&self, off: u32) -> String {
        if self.explicit_k {
            format!("k+{off}")
        } else if off == 0 {
            "k".into()
        } else {
            format!("k+{off}")
        }
    }

    fn col_expr(&self, off: u32) -> String {
        let base = if self.lane_j { "j+tid" } else { "j" };
        if off == 0 {
            base.to_string()
        } else {
            format!("{base}+{off}")
        }
    }

    fn guard_expr(&self, g: &Guard) -> String {
        let mut parts = Vec::new();
        for r in 0..32 {
            if g.require & (1 << r) != 0 {
                parts.push(format!("A[{}][{}]", self.row_expr(r), self.k_expr(0)));
            }
        }
        for r in 0..32 {
            if g.forbid & (1 << r) != 0 {
                parts.push(format!("!A[{}][{}]", self.row_expr(r), self.k_expr(0)));
            }
        }
        parts.join(" && ")
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::AccInit { acc } => self.line(&format!("float {acc} = 0.0f;")),
            Stmt::CursorInit => self.line("int t_nnz = NPP[g];"),
            Stmt::CursorAdvance { amount } => self.line(&format!("t_nnz += {amount};")),
            Stmt::ColOffset { index } => {
                self.line(&format!("int br{index} = Cols[{}];", self.k_expr(*index as u32)))
            }
            Stmt::AtomicAdd {
                acc,
                row_offset,
                col_offset,
            } => self.line(&format!(
                "atomicAdd(&C[{}][{}], {acc});",
                self.row_expr(*row_offset),
                self.col_expr(*col_offset)
            )),
            Stmt::Fma(f) => {
                let a = match f.a {
                    AOperand::Dense {
                        row_offset,
                        k_offset,
                    } => format!("A[{}][{}]", self.row_expr(row_offset), self.k_expr(k_offset)),
                    AOperand::Esc { offset } => format!("ANNZ[t_nnz+{offset}]"),
                };
                let b = match f.b_row {
                    BRow::KOffset(o) => format!("B[{}][{}]", self.k_expr(o), self.col_expr(f.col_offset)),
                    BRow::Offset(x) => format!("B[br{x}][{}]", self.col_expr(f.col_offset)),
                };
                let dst = match &f.dst {
                    FmaDst::DirectC { row_offset } => format!(
                        "C[{}][{}]",
                        self.row_expr(*row_offset),
                        self.col_expr(f.col_offset)
                    ),
                    FmaDst::Acc(name) => name.clone(),
                };
                let body = format!("{dst} += {a} * {b};");
                match &f.guard {
                    Some(g) => self.line(&format!("if({}) {body}", self.guard_expr(g))),
                    None => self.line(&body),
                }
            }
        }
    }

    fn nodes(&mut self, nodes: &[Node]) {
        for n in nodes {
            match n {
                Node::Stmt(s) => self.stmt(s),
                Node::Dispatch(arms) => {
                    self.line("switch (pattern) {");
                    for arm in arms {
                        self.line(&format!(
                            "case {:#06b}: {{ // pc={}",
                            arm.pattern.0,
                            arm.pattern.popcount()
                        ));
                        self.depth += 1;
                        self.nodes(&arm.body);
                        self.depth -= 1;
                        self.line("} break;");
                    }
                    self.line("}");
                }
                Node::Loop(l) => {
                    let was_lane_j = self.lane_j;
                    if l.iter == "j" && l.lanes.is_some() {
                        self.lane_j = true;
                    }
                    let header = match l.range {
                        Range::Rows => format!("for (int i = 0; i < M; i += {})", l.step),
                        Range::Cols => format!("for (int j = 0; j < N; j += {})", l.step),
                        Range::Reduction => format!("for (int k = 0; k < K; k += {})", l.step),
                        Range::GroupCols { padded: false } => {
                            format!("for (k in group_cols(g); step {})", l.step)
                        }
                        Range::GroupCols { padded: true } => {
                            format!("for (k in group_cols_padded(g); step {})", l.step)
                        }
                        Range::EscSlots => {
                            format!("for (int k = RPP[g]; k < RPP[g+1]; k += {})", l.step)
                        }
                    };
                    let lanes = match l.lanes {
                        Some(n) => format!(" lanes({n})"),
                        None => String::new(),
                    };
                    self.line(&format!("{header}{lanes} {{"));
                    self.depth += 1;
                    self.nodes(&l.body);
                    self.depth -= 1;
                    self.line("}");
                    self.lane_j = was_lane_j;
                }
            }
        }
    }
}

/// Canonical textual dump of the IR, stable across runs.
pub fn pretty(ir: &KernelIR) -> String {
    let mut p = Printer {
        out: String::new(),
        depth: 0,
        explicit_rows: ir.explicit_row_offsets,
        explicit_k: ir.explicit_k_offsets,
        lane_j: false,
    };
    p.line(&format!("// spmm kernel [{}]", ir.stage.name()));
    if let Some(s) = &ir.schedule {
        p.line(&format!("// schedule {s}"));
    }
    match &ir.grid {
        Grid::Sequential => {}
        Grid::PanelBlocks { uf_i } => {
            p.line(&format!("int i = blockIdx.x * {uf_i};"));
        }
        Grid::GroupBlocks {
            blocks,
            num_patterns,
            uf_i,
        } => {
            p.line(&format!("// grid: {blocks} blocks"));
            p.line("int g = blockIdx.x;");
            p.line(&format!("int row_panel = blockIdx.x / {num_patterns};"));
            p.line(&format!("int pattern = patterns[blockIdx.x % {num_patterns}];"));
            p.line(&format!("int i = row_panel * {uf_i};"));
        }
    }
    p.line("int tid = threadIdx.x;");
    let nest = ir.nest.clone();
    p.nodes(&nest);
    p.out
}

// --- structural queries used by passes, tests and the emitter ---------------

/// Calls `f` on every statement in the tree.
pub fn visit_stmts<'a>(nodes: &'a [Node], f: &mut impl FnMut(&'a Stmt)) {
    for n in nodes {
        match n {
            Node::Stmt(s) => f(s),
            Node::Loop(l) => visit_stmts(&l.body, f),
            Node::Dispatch(arms) => {
                for a in arms {
                    visit_stmts(&a.body, f);
                }
            }
        }
    }
}

/// Number of FMA statements anywhere in the tree.
pub fn count_fmas(ir: &KernelIR) -> usize {
    let mut n = 0;
    visit_stmts(&ir.nest, &mut |s| {
        if matches!(s, Stmt::Fma(_)) {
            n += 1;
        }
    });
    n
}

/// Number of guarded statements inside dispatch arms; the no-divergence
/// property requires this to be zero after thread-block mapping.
pub fn guarded_stmts_in_blocks(ir: &KernelIR) -> usize {
    let mut n = 0;
    fn walk(nodes: &[Node], inside: bool, n: &mut usize) {
        for node in nodes {
            match node {
                Node::Stmt(Stmt::Fma(f)) => {
                    if inside && f.guard.is_some() {
                        *n += 1;
                    }
                }
                Node::Stmt(_) => {}
                Node::Loop(l) => walk(&l.body, inside, n),
                Node::Dispatch(arms) => {
                    for a in arms {
                        walk(&a.body, true, n);
                    }
                }
            }
        }
    }
    walk(&ir.nest, false, &mut n);
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_has_three_loops_and_one_guarded_fma() {
        let ir = build_spmm_ir();
        let mut loops = Vec::new();
        fn walk(nodes: &[Node], loops: &mut Vec<&'static str>) {
            for n in nodes {
                if let Node::Loop(l) = n {
                    loops.push(l.iter);
                    walk(&l.body, loops);
                }
            }
        }
        walk(&ir.nest, &mut loops);
        assert_eq!(loops, vec!["i", "k", "j"]);
        assert_eq!(count_fmas(&ir), 1);
        let mut guards = 0;
        visit_stmts(&ir.nest, &mut |s| {
            if let Stmt::Fma(f) = s {
                if f.guard.is_some() {
                    guards += 1;
                }
            }
        });
        assert_eq!(guards, 1);
    }

    #[test]
    fn build_pretty_prints_guarded_fma() {
        let text = pretty(&build_spmm_ir());
        assert!(text.contains("if(A[i][k]) C[i][j] += A[i][k] * B[k][j];"), "{text}");
        assert!(text.contains("for (int i = 0; i < M; i += 1)"));
        assert!(text.contains("for (int j = 0; j < N; j += 1)"));
        assert!(text.contains("for (int k = 0; k < K; k += 1)"));
    }

    #[test]
    fn unroll_by_one_is_identity_on_statements() {
        let ir = build_spmm_ir();
        let out = unroll(&ir, "i", 1).unwrap();
        assert_eq!(ir.nest, out.nest);
    }

    #[test]
    fn unroll_rows_by_four_matches_unrolled_listing() {
        let ir = unroll(&build_spmm_ir(), "i", 4).unwrap();
        assert_eq!(count_fmas(&ir), 4);
        let text = pretty(&ir);
        for r in 0..4 {
            assert!(
                text.contains(&format!("if(A[i+{r}][k]) C[i+{r}][j] += A[i+{r}][k] * B[k][j];")),
                "{text}"
            );
        }
        // step multiplied
        if let Node::Loop(l) = &ir.nest[0] {
            assert_eq!(l.step, 4);
        } else {
            panic!("expected i loop");
        }
    }

    #[test]
    fn unroll_unknown_iterator_errors() {
        assert!(matches!(
            unroll(&build_spmm_ir(), "z", 2),
            Err(IrError::UnknownIterator(_))
        ));
    }

    #[test]
    fn unroll_guard_masks_shift() {
        let ir = unroll(&build_spmm_ir(), "i", 3).unwrap();
        let mut masks = Vec::new();
        visit_stmts(&ir.nest, &mut |s| {
            if let Stmt::Fma(f) = s {
                masks.push(f.guard.unwrap().require);
            }
        });
        assert_eq!(masks, vec![0b001, 0b010, 0b100]);
    }

    #[test]
    fn map_block_reproduces_panel_binding() {
        let ir = unroll(&build_spmm_ir(), "i", 4).unwrap();
        let mapped = map_iter(&ir, "i", MapBinding::Block).unwrap();
        assert_eq!(mapped.grid, Grid::PanelBlocks { uf_i: 4 });
        let text = pretty(&mapped);
        assert!(text.contains("int i = blockIdx.x * 4;"), "{text}");
        // the i loop is gone
        assert!(!text.contains("for (int i"));
    }

    #[test]
    fn map_lane_sets_step_and_substitutes_tid() {
        let ir = build_spmm_ir();
        let mapped = map_iter(&ir, "j", MapBinding::Lane { stride: 32 }).unwrap();
        let text = pretty(&mapped);
        assert!(text.contains("for (int j = 0; j < N; j += 32) lanes(32)"), "{text}");
        assert!(text.contains("B[k][j+tid]"), "{text}");
    }

    #[test]
    fn double_binding_errors() {
        let ir = map_iter(&build_spmm_ir(), "j", MapBinding::Lane { stride: 32 }).unwrap();
        assert!(matches!(
            map_iter(&ir, "j", MapBinding::Lane { stride: 32 }),
            Err(IrError::AlreadyBound(_))
        ));
        let b = map_iter(&unroll(&build_spmm_ir(), "i", 2).unwrap(), "i", MapBinding::Block).unwrap();
        assert!(matches!(
            map_iter(&b, "i", MapBinding::Block),
            Err(IrError::AlreadyBound(_))
        ));
    }

    #[test]
    fn schedule_parse_and_display() {
        let s = Schedule::parse("4-7-1-32").unwrap();
        assert_eq!(
            s,
            Schedule {
                uf_i: 4,
                uf_k: 7,
                warp_tile: 1,
                thread_block_size: 32
            }
        );
        assert_eq!(s.to_string(), "4-7-1-32");
        assert!(Schedule::parse("0-1-1-32").is_err());
        assert!(Schedule::parse("4-1-1-33").is_err());
        assert!(Schedule::parse("4-1-1").is_err());
        assert!(Schedule::parse("9-1-1-32").is_err());
    }

    #[test]
    fn access_functions_scalar_nest() {
        let ir = build_spmm_ir();
        let accs = access_functions(&ir);
        // one FMA touching A, B and C
        assert_eq!(accs.len(), 3);
        assert!(accs.iter().all(|a| a.indirect.is_none()));
        let a = accs.iter().find(|a| a.target == Target::A).unwrap();
        assert_eq!(a.affine.get("i"), Some(&1));
        assert_eq!(a.affine.get("k"), Some(&1));
    }
}
