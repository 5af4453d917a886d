//! The lowering pipeline: unroll rows, enumerate patterns, map thread
//! blocks, map threads, coarsen, and rewrite for the compressed format.
//!
//! Each step is a [`LoweringPass`] object with a name and a stage
//! precondition; [`pipeline`] builds the fixed sequence for a schedule.
//! The pass order is not user-reorderable: every pass consumes exactly the
//! stage the previous one produces.

use crate::esc::{grid_size, EscMatrix, PatternId};
use crate::ir::{
    self, AOperand, BRow, DispatchArm, FmaDst, FmaStmt, Grid, Guard, IrError, KernelIR, Loop,
    MapBinding, Node, Range, Schedule, Stage, Stmt,
};
use crate::matrix::SparseMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LowerError {
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// Everything a pass may consult: the schedule and the compressed matrix.
pub struct PassContext<'a> {
    pub schedule: Schedule,
    pub esc: &'a EscMatrix,
}

/// One lowering step; passes are pure and return a new IR.
pub trait LoweringPass: Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError>;
}

fn expect_stage(pass: &'static str, ir: &KernelIR, expected: Stage) -> Result<(), IrError> {
    if ir.stage != expected {
        return Err(IrError::StageMismatch {
            pass,
            expected: expected.name(),
            found: ir.stage.name(),
        });
    }
    Ok(())
}

/// All patterns a panel of `uf_i` rows can take, ascending; the all-zero
/// pattern is excluded.
fn all_patterns(uf_i: u32) -> impl Iterator<Item = PatternId> {
    (1u32..(1u32 << uf_i)).map(PatternId)
}

/// The plain FMAs of one enumerated body: one per set row, ascending, all
/// sharing the first statement's B load.
fn body_fmas(pattern: PatternId, guard: Option<Guard>) -> Vec<Node> {
    pattern
        .row_offsets()
        .enumerate()
        .map(|(idx, r)| {
            Node::Stmt(Stmt::Fma(FmaStmt {
                guard,
                dst: FmaDst::DirectC { row_offset: r },
                a: AOperand::Dense {
                    row_offset: r,
                    k_offset: 0,
                },
                b_row: BRow::KOffset(0),
                col_offset: 0,
                a_fresh: true,
                b_fresh: idx == 0,
            }))
        })
        .collect()
}

// --- pass 1: unroll the row loop ---------------------------------------------

pub struct UnrollRows;

impl LoweringPass for UnrollRows {
    fn name(&self) -> &'static str {
        "unroll-rows"
    }

    fn apply(&self, ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
        expect_stage(self.name(), ir, Stage::Scalar)?;
        let mut out = ir::unroll(ir, "i", cx.schedule.uf_i)?;
        out.stage = Stage::UnrolledRows;
        out.schedule = Some(cx.schedule);
        Ok(out)
    }
}

// --- pass 2: enumerate the guarded bodies -------------------------------------

pub struct Enumerate;

impl LoweringPass for Enumerate {
    fn name(&self) -> &'static str {
        "enumerate"
    }

    fn apply(&self, ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
        expect_stage(self.name(), ir, Stage::UnrolledRows)?;
        let uf_i = cx.schedule.uf_i;
        match ir.nest.first() {
            Some(Node::Loop(l)) if l.iter == "i" && l.step == uf_i => {}
            _ => {
                return Err(IrError::ScheduleMismatch(format!(
                    "row loop is not unrolled by UFi={uf_i}"
                )))
            }
        }
        let full = (1u32 << uf_i) - 1;

        // one enumerated block per possible pattern, each a complete
        // conjunction over all UFi rows, so blocks are mutually exclusive
        let mut body = Vec::new();
        for pattern in all_patterns(uf_i) {
            let guard = Guard {
                require: pattern.0,
                forbid: !pattern.0 & full,
            };
            body.extend(body_fmas(pattern, Some(guard)));
        }

        let mut out = replace_innermost_j_body(ir, body)?;
        out.stage = Stage::Enumerated;
        Ok(out)
    }
}

fn replace_innermost_j_body(ir: &KernelIR, body: Vec<Node>) -> Result<KernelIR, IrError> {
    fn walk(nodes: &[Node], body: &mut Option<Vec<Node>>) -> Vec<Node> {
        nodes
            .iter()
            .map(|n| match n {
                Node::Loop(l) if l.iter == "j" => Node::Loop(Loop {
                    body: body.take().expect("single j loop"),
                    ..l.clone()
                }),
                Node::Loop(l) => Node::Loop(Loop {
                    body: walk(&l.body, body),
                    ..l.clone()
                }),
                other => other.clone(),
            })
            .collect()
    }
    let mut slot = Some(body);
    let nest = walk(&ir.nest, &mut slot);
    if slot.is_some() {
        return Err(IrError::UnknownIterator("j".into()));
    }
    Ok(KernelIR { nest, ..ir.clone() })
}

// --- pass 3: thread-block mapping ---------------------------------------------

pub struct BlockMap;

impl LoweringPass for BlockMap {
    fn name(&self) -> &'static str {
        "block-map"
    }

    fn apply(&self, ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
        expect_stage(self.name(), ir, Stage::Enumerated)?;
        let uf_i = cx.schedule.uf_i;

        // every possible pattern gets an arm; the block's decoded pattern
        // selects exactly one, so no data-dependent guard survives
        let arms: Vec<DispatchArm> = all_patterns(uf_i)
            .map(|pattern| {
                let k_loop = Loop {
                    iter: "k",
                    range: Range::GroupCols { padded: false },
                    step: 1,
                    lanes: None,
                    body: body_fmas(pattern, None),
                };
                // j becomes the outer loop so accumulators can live across k
                let j_loop = Loop {
                    iter: "j",
                    range: Range::Cols,
                    step: 1,
                    lanes: None,
                    body: vec![Node::Loop(k_loop)],
                };
                DispatchArm {
                    pattern,
                    body: vec![Node::Loop(j_loop)],
                }
            })
            .collect();

        Ok(KernelIR {
            stage: Stage::BlockMapped,
            grid: Grid::GroupBlocks {
                blocks: grid_size(cx.esc),
                num_patterns: cx.esc.num_patterns(),
                uf_i,
            },
            nest: vec![Node::Dispatch(arms)],
            schedule: ir.schedule,
            explicit_row_offsets: ir.explicit_row_offsets,
            explicit_k_offsets: ir.explicit_k_offsets,
            compaction: ir.compaction,
        })
    }
}

// --- pass 4: thread mapping ----------------------------------------------------

pub struct ThreadMap;

impl LoweringPass for ThreadMap {
    fn name(&self) -> &'static str {
        "thread-map"
    }

    fn apply(&self, ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
        expect_stage(self.name(), ir, Stage::BlockMapped)?;
        let mut out = ir::map_iter(
            ir,
            "j",
            MapBinding::Lane {
                stride: cx.schedule.thread_block_size,
            },
        )?;
        out.stage = Stage::ThreadMapped;
        Ok(out)
    }
}

// --- pass 5: thread coarsening --------------------------------------------------

pub struct Coarsen;

impl LoweringPass for Coarsen {
    fn name(&self) -> &'static str {
        "coarsen"
    }

    fn apply(&self, ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
        expect_stage(self.name(), ir, Stage::ThreadMapped)?;
        let sched = cx.schedule;

        // pad the column domain so the UFk step is exact, then coarsen by
        // unrolling: the warp tile along j, the reduction along k
        let padded = set_group_cols_padded(ir);
        let unrolled_j = ir::unroll(&padded, "j", sched.warp_tile)?;
        let unrolled = ir::unroll(&unrolled_j, "k", sched.uf_k)?;

        let mut out = accumulatorize(&unrolled, sched)?;
        out.stage = Stage::Coarsened;
        Ok(out)
    }
}

fn set_group_cols_padded(ir: &KernelIR) -> KernelIR {
    fn walk(nodes: &[Node]) -> Vec<Node> {
        nodes
            .iter()
            .map(|n| match n {
                Node::Loop(l) => {
                    let range = if l.range == (Range::GroupCols { padded: false }) {
                        Range::GroupCols { padded: true }
                    } else {
                        l.range
                    };
                    Node::Loop(Loop {
                        range,
                        body: walk(&l.body),
                        ..l.clone()
                    })
                }
                Node::Dispatch(arms) => Node::Dispatch(
                    arms.iter()
                        .map(|a| DispatchArm {
                            pattern: a.pattern,
                            body: walk(&a.body),
                        })
                        .collect(),
                ),
                other => other.clone(),
            })
            .collect()
    }
    KernelIR {
        nest: walk(&ir.nest),
        ..ir.clone()
    }
}

fn acc_name(row_offset: u32, tile: u32) -> String {
    format!("c{row_offset}_{tile}")
}

/// Replaces direct C updates with named per-(row, tile) accumulators,
/// initialized before the k loop and flushed after it with atomic adds.
fn accumulatorize(ir: &KernelIR, sched: Schedule) -> Result<KernelIR, IrError> {
    let tbs = sched.thread_block_size;

    fn rewrite_j_body(nodes: &[Node], tbs: u32) -> Result<Vec<Node>, IrError> {
        // nodes is the j-loop body: a single k loop whose FMAs get
        // accumulator targets; declarations and flushes wrap the k loop.
        let mut accs: Vec<(u32, u32)> = Vec::new(); // (row_offset, tile) in first-use order
        let mut out_k: Option<Node> = None;
        for n in nodes {
            match n {
                Node::Loop(k_loop) if k_loop.iter == "k" => {
                    let mut body = Vec::with_capacity(k_loop.body.len());
                    let mut seen_b: Vec<(u32, u32)> = Vec::new();
                    let mut seen_a: Vec<(u32, u32)> = Vec::new();
                    for stmt in &k_loop.body {
                        let Node::Stmt(Stmt::Fma(f)) = stmt else {
                            return Err(IrError::UnrollAfterCoarsen("k".into()));
                        };
                        let FmaDst::DirectC { row_offset } = f.dst else {
                            return Err(IrError::UnrollAfterCoarsen("k".into()));
                        };
                        let AOperand::Dense { k_offset, .. } = f.a else {
                            return Err(IrError::UnrollAfterCoarsen("k".into()));
                        };
                        let tile = f.col_offset / tbs;
                        if !accs.contains(&(row_offset, tile)) {
                            accs.push((row_offset, tile));
                        }
                        let b_key = (k_offset, tile);
                        let b_fresh = !seen_b.contains(&b_key);
                        if b_fresh {
                            seen_b.push(b_key);
                        }
                        let a_key = (row_offset, k_offset);
                        let a_fresh = !seen_a.contains(&a_key);
                        if a_fresh {
                            seen_a.push(a_key);
                        }
                        body.push(Node::Stmt(Stmt::Fma(FmaStmt {
                            guard: None,
                            dst: FmaDst::Acc(acc_name(row_offset, tile)),
                            a: f.a,
                            b_row: f.b_row,
                            col_offset: f.col_offset,
                            a_fresh,
                            b_fresh,
                        })));
                    }
                    out_k = Some(Node::Loop(Loop {
                        body,
                        ..k_loop.clone()
                    }));
                }
                _ => return Err(IrError::UnrollAfterCoarsen("k".into())),
            }
        }
        let k_node = out_k.ok_or_else(|| IrError::UnknownIterator("k".into()))?;

        // declarations in row-major (row, tile) order, flushes likewise
        accs.sort();
        let mut result = Vec::new();
        for &(r, w) in &accs {
            result.push(Node::Stmt(Stmt::AccInit {
                acc: acc_name(r, w),
            }));
        }
        result.push(k_node);
        for &(r, w) in &accs {
            result.push(Node::Stmt(Stmt::AtomicAdd {
                acc: acc_name(r, w),
                row_offset: r,
                col_offset: w * tbs,
            }));
        }
        Ok(result)
    }

    fn walk(nodes: &[Node], tbs: u32) -> Result<Vec<Node>, IrError> {
        nodes
            .iter()
            .map(|n| match n {
                Node::Loop(l) if l.iter == "j" => Ok(Node::Loop(Loop {
                    body: rewrite_j_body(&l.body, tbs)?,
                    ..l.clone()
                })),
                Node::Loop(l) => Ok(Node::Loop(Loop {
                    body: walk(&l.body, tbs)?,
                    ..l.clone()
                })),
                Node::Dispatch(arms) => Ok(Node::Dispatch(
                    arms.iter()
                        .map(|a| {
                            Ok(DispatchArm {
                                pattern: a.pattern,
                                body: walk(&a.body, tbs)?,
                            })
                        })
                        .collect::<Result<_, IrError>>()?,
                )),
                other => Ok(other.clone()),
            })
            .collect()
    }

    Ok(KernelIR {
        nest: walk(&ir.nest, tbs)?,
        ..ir.clone()
    })
}

// --- pass 6: data transformation --------------------------------------------------

pub struct DataTransform;

impl LoweringPass for DataTransform {
    fn name(&self) -> &'static str {
        "data-transform"
    }

    fn apply(&self, ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
        expect_stage(self.name(), ir, Stage::Coarsened)?;
        let sched = cx.schedule;
        if cx.esc.uf_i != sched.uf_i || cx.esc.uf_k != sched.uf_k {
            return Err(IrError::ScheduleMismatch(format!(
                "kernel schedule {} but compressed matrix carries UFi={}, UFk={}",
                sched, cx.esc.uf_i, cx.esc.uf_k
            )));
        }
        if sched.uf_k > u8::MAX as u32 + 1 {
            return Err(IrError::ScheduleMismatch(format!(
                "UFk = {} exceeds the column-offset variable budget",
                sched.uf_k
            )));
        }

        let nest = rewrite_dispatch(&ir.nest, sched)?;
        Ok(KernelIR {
            nest,
            stage: Stage::DataTransformed,
            ..ir.clone()
        })
    }
}

fn rewrite_dispatch(nodes: &[Node], sched: Schedule) -> Result<Vec<Node>, IrError> {
    nodes
        .iter()
        .map(|n| match n {
            Node::Dispatch(arms) => Ok(Node::Dispatch(
                arms.iter()
                    .map(|arm| {
                        Ok(DispatchArm {
                            pattern: arm.pattern,
                            body: rewrite_arm(&arm.body, arm.pattern, sched)?,
                        })
                    })
                    .collect::<Result<_, IrError>>()?,
            )),
            other => Ok(other.clone()),
        })
        .collect()
}

fn rewrite_arm(nodes: &[Node], pattern: PatternId, sched: Schedule) -> Result<Vec<Node>, IrError> {
    let pc = pattern.popcount();
    // rank of a row offset among the pattern's set bits
    let rank = |row: u32| -> u32 { (pattern.0 & ((1u32 << row) - 1)).count_ones() };

    nodes
        .iter()
        .map(|n| match n {
            Node::Loop(l) if l.iter == "j" => {
                let mut body = Vec::with_capacity(l.body.len() + 1);
                for inner in &l.body {
                    match inner {
                        Node::Loop(k_loop) if k_loop.iter == "k" => {
                            // the value cursor walks ANNZ in step with k
                            body.push(Node::Stmt(Stmt::CursorInit));
                            let mut k_body: Vec<Node> = (0..sched.uf_k)
                                .map(|kk| Node::Stmt(Stmt::ColOffset { index: kk as u8 }))
                                .collect();
                            for stmt in &k_loop.body {
                                let Node::Stmt(Stmt::Fma(f)) = stmt else {
                                    return Err(IrError::ScheduleMismatch(
                                        "coarsened body holds a non-FMA statement".into(),
                                    ));
                                };
                                let AOperand::Dense {
                                    row_offset,
                                    k_offset,
                                } = f.a
                                else {
                                    return Err(IrError::ScheduleMismatch(
                                        "body already rewritten".into(),
                                    ));
                                };
                                k_body.push(Node::Stmt(Stmt::Fma(FmaStmt {
                                    guard: None,
                                    dst: f.dst.clone(),
                                    a: AOperand::Esc {
                                        offset: k_offset * pc + rank(row_offset),
                                    },
                                    b_row: BRow::Offset(k_offset as u8),
                                    col_offset: f.col_offset,
                                    a_fresh: f.a_fresh,
                                    b_fresh: f.b_fresh,
                                })));
                            }
                            k_body.push(Node::Stmt(Stmt::CursorAdvance {
                                amount: pc * sched.uf_k,
                            }));
                            body.push(Node::Loop(Loop {
                                iter: "k",
                                range: Range::EscSlots,
                                step: sched.uf_k,
                                lanes: None,
                                body: k_body,
                            }));
                        }
                        other => body.push(other.clone()),
                    }
                }
                Ok(Node::Loop(Loop {
                    body,
                    ..l.clone()
                }))
            }
            other => Ok(other.clone()),
        })
        .collect()
}

// --- pipeline ---------------------------------------------------------------------

/// The fixed pass sequence, one object per step.
pub fn pipeline() -> Vec<Box<dyn LoweringPass>> {
    vec![
        Box::new(UnrollRows),
        Box::new(Enumerate),
        Box::new(BlockMap),
        Box::new(ThreadMap),
        Box::new(Coarsen),
        Box::new(DataTransform),
    ]
}

/// Lowers an already-transformed matrix; `esc` must carry the schedule's
/// `(UFi, UFk)`.
pub fn lower_ir(esc: &EscMatrix, schedule: Schedule) -> Result<KernelIR, LowerError> {
    let cx = PassContext { schedule, esc };
    let mut ir = ir::build_spmm_ir();
    for pass in pipeline() {
        ir = pass.apply(&ir, &cx)?;
    }
    Ok(ir)
}

/// Runs the whole pipeline: data transform plus all lowering passes.
pub fn lower(a: &SparseMatrix, schedule: Schedule) -> Result<(EscMatrix, KernelIR), LowerError> {
    let esc = crate::esc::transform(a, schedule.uf_i, schedule.uf_k);
    let ir = lower_ir(&esc, schedule)?;
    Ok((esc, ir))
}

/// Every intermediate IR of the pipeline, labeled by pass name. The first
/// entry is the scalar nest before any pass.
pub fn lower_stages(
    a: &SparseMatrix,
    schedule: Schedule,
) -> Result<(EscMatrix, Vec<(&'static str, KernelIR)>), LowerError> {
    let esc = crate::esc::transform(a, schedule.uf_i, schedule.uf_k);
    let cx = PassContext {
        schedule,
        esc: &esc,
    };
    let mut ir = ir::build_spmm_ir();
    let mut stages = vec![("input", ir.clone())];
    for pass in pipeline() {
        ir = pass.apply(&ir, &cx)?;
        stages.push((pass.name(), ir.clone()));
    }
    Ok((esc, stages))
}

// spec-facing operation aliases

pub fn pass_enumerate(ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
    Enumerate.apply(ir, cx)
}

pub fn pass_block_map(ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
    BlockMap.apply(ir, cx)
}

pub fn pass_thread_map(ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
    ThreadMap.apply(ir, cx)
}

pub fn pass_coarsen(ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
    Coarsen.apply(ir, cx)
}

pub fn pass_data_transform(ir: &KernelIR, cx: &PassContext<'_>) -> Result<KernelIR, IrError> {
    DataTransform.apply(ir, cx)
}
