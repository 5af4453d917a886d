//! Schedule search: a pruned candidate space from an architecture model
//! and a simulator-driven cost.
//!
//! The occupancy estimate is a register-pressure model, not a hardware
//! measurement: registers per thread grow linearly with the coarsening
//! volume `UFi * WarpTile * UFk`, and concurrently resident warps per SM
//! follow from the register file and the thread ceiling. Unroll factors
//! whose estimated occupancy falls below the configured floors are pruned
//! from the search space. The cost itself is a load/atomic/grid proxy with
//! documented weights; plugging measured kernel times in its place is a
//! one-function change.

use crate::esc::{grid_size, EscMatrix};
use crate::ir::Schedule;
use crate::matrix::{DenseMatrix, SparseMatrix};
use crate::passes::{lower_ir, LowerError};
use crate::sim::{simulate, SimError};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("search space is empty")]
    EmptySpace,
    #[error("bad architecture config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Architecture parameters used for occupancy-based pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchModel {
    pub name: String,
    pub registers_per_sm: u32,
    pub max_threads_per_sm: u32,
    /// Fixed at 32.
    pub warp_size: u32,
    pub sm_count: u32,
    /// Minimum estimated resident warps per SM along the UFi axis.
    pub occupancy_floor_uf_i: f64,
    /// Minimum estimated resident warps per SM along the UFk axis.
    pub occupancy_floor_uf_k: f64,
    /// Registers/thread model: `slope * UFi * WarpTile * UFk + base`.
    pub reg_cost_slope: f64,
    pub reg_cost_base: f64,
}

impl ArchModel {
    /// The data-center preset: 108 SMs, 64K registers per SM, 2048 resident
    /// threads, occupancy floors 16 (UFi) and 12 (UFk).
    pub fn a100() -> Self {
        Self {
            name: "A100".into(),
            registers_per_sm: 65536,
            max_threads_per_sm: 2048,
            warp_size: 32,
            sm_count: 108,
            occupancy_floor_uf_i: 16.0,
            occupancy_floor_uf_k: 12.0,
            reg_cost_slope: 1.0,
            reg_cost_base: 16.0,
        }
    }

    /// Parses a `key=value` config ('#' starts a comment). Unknown keys are
    /// rejected; missing keys keep the A100 defaults.
    pub fn from_config_str(text: &str) -> Result<Self, TuneError> {
        let mut arch = Self::a100();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TuneError::BadConfig(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let parse_u32 = || {
                value
                    .parse::<u32>()
                    .map_err(|_| TuneError::BadConfig(format!("bad integer '{value}' for {key}")))
            };
            let parse_f64 = || {
                value
                    .parse::<f64>()
                    .map_err(|_| TuneError::BadConfig(format!("bad number '{value}' for {key}")))
            };
            match key {
                "name" => arch.name = value.to_string(),
                "registers_per_sm" => arch.registers_per_sm = parse_u32()?,
                "max_threads_per_sm" => arch.max_threads_per_sm = parse_u32()?,
                "sm_count" => arch.sm_count = parse_u32()?,
                "occupancy_floor_uf_i" => arch.occupancy_floor_uf_i = parse_f64()?,
                "occupancy_floor_uf_k" => arch.occupancy_floor_uf_k = parse_f64()?,
                "reg_cost_slope" => arch.reg_cost_slope = parse_f64()?,
                "reg_cost_base" => arch.reg_cost_base = parse_f64()?,
                "warp_size" => {
                    if value != "32" {
                        return Err(TuneError::BadConfig("warp_size is fixed at 32".into()));
                    }
                }
                other => {
                    return Err(TuneError::BadConfig(format!("unknown key '{other}'")));
                }
            }
        }
        Ok(arch)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TuneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TuneError::BadConfig(format!("{}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }
}

/// Estimated concurrently resident warps per SM for a schedule.
pub fn estimate_occupancy(sched: Schedule, arch: &ArchModel) -> f64 {
    let regs_per_thread = arch.reg_cost_slope
        * (sched.uf_i as f64)
        * (sched.warp_tile as f64)
        * (sched.uf_k as f64)
        + arch.reg_cost_base;
    let warp_ceiling = (arch.max_threads_per_sm / 32) as f64;
    let tbs = sched.thread_block_size as f64;
    let blocks_per_sm = ((arch.registers_per_sm as f64) / (regs_per_thread * tbs)).floor();
    let warps = blocks_per_sm * tbs / 32.0;
    warp_ceiling.min(warps)
}

const UF_I_CANDIDATES: std::ops::RangeInclusive<u32> = 1..=8;
const UF_K_CANDIDATES: std::ops::RangeInclusive<u32> = 1..=8;
const WARP_TILE_CANDIDATES: [u32; 4] = [1, 2, 4, 8];
const TBS_CANDIDATES: [u32; 4] = [32, 64, 128, 256];

/// The pruned candidate grid for `n` columns of B: unroll factors meeting
/// the occupancy floors, warp tiles covering at most `n` columns (one tile
/// minimum), and thread block sizes that are multiples of 32 up to
/// `max(n, 32)`. Deterministic lexicographic order.
pub fn search_space(n: usize, arch: &ArchModel) -> Vec<Schedule> {
    let probe = |uf_i, uf_k| Schedule::new(uf_i, uf_k, 1, 32).expect("probe schedule");
    let uf_i_range: Vec<u32> = UF_I_CANDIDATES
        .filter(|&u| estimate_occupancy(probe(u, 1), arch) >= arch.occupancy_floor_uf_i)
        .collect();
    let uf_k_range: Vec<u32> = UF_K_CANDIDATES
        .filter(|&u| estimate_occupancy(probe(1, u), arch) >= arch.occupancy_floor_uf_k)
        .collect();

    let mut out = Vec::new();
    for &uf_i in &uf_i_range {
        for &uf_k in &uf_k_range {
            for wt in WARP_TILE_CANDIDATES {
                if wt != 1 && (wt * 32) as usize > n {
                    continue;
                }
                for tbs in TBS_CANDIDATES {
                    if tbs as usize > n.max(32) {
                        continue;
                    }
                    out.push(Schedule::new(uf_i, uf_k, wt, tbs).expect("candidate schedule"));
                }
            }
        }
    }
    out
}

/// Cost weights; proxies for time until measured runtimes are available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub loads: f64,
    pub atomics: f64,
    pub grid_shortfall: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            loads: 1.0,
            atomics: 4.0,
            grid_shortfall: 64.0,
        }
    }
}

/// Cost breakdown of one evaluated schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub schedule: Schedule,
    pub cost: f64,
    pub fma: u64,
    pub loads: u64,
    pub atomics: u64,
    pub grid_size: usize,
    pub est_occupancy: f64,
}

/// Seed of the dense operand used for cost evaluation runs.
pub const TUNE_B_SEED: u64 = 0xE5C;

fn evaluate(
    esc: &EscMatrix,
    sched: Schedule,
    b: &DenseMatrix,
    arch: &ArchModel,
    weights: CostWeights,
) -> Result<CostReport, TuneError> {
    let ir = lower_ir(esc, sched)?;
    let sim = simulate(&ir, esc, b)?;
    let grid = grid_size(esc);
    let loads = sim.load_count_a + sim.load_count_b;
    let shortfall = (2 * arch.sm_count as usize).saturating_sub(grid);
    let cost = weights.loads * loads as f64
        + weights.atomics * sim.atomic_count as f64
        + weights.grid_shortfall * shortfall as f64;
    Ok(CostReport {
        schedule: sched,
        cost,
        fma: sim.fma_count,
        loads,
        atomics: sim.atomic_count,
        grid_size: grid,
        est_occupancy: estimate_occupancy(sched, arch),
    })
}

/// Evaluates every candidate of the pruned space on `a` and a seeded random
/// B, returning all reports in candidate order.
pub fn tune_all(
    a: &SparseMatrix,
    n: usize,
    arch: &ArchModel,
    weights: CostWeights,
) -> Result<Vec<CostReport>, TuneError> {
    let space = search_space(n, arch);
    if space.is_empty() {
        return Err(TuneError::EmptySpace);
    }
    let b = DenseMatrix::random(a.n_cols, n, TUNE_B_SEED);
    let mut escs: BTreeMap<(u32, u32), EscMatrix> = BTreeMap::new();
    let mut reports = Vec::with_capacity(space.len());
    for sched in space {
        let esc = escs
            .entry((sched.uf_i, sched.uf_k))
            .or_insert_with(|| crate::esc::transform(a, sched.uf_i, sched.uf_k));
        reports.push(evaluate(esc, sched, &b, arch, weights)?);
    }
    Ok(reports)
}

/// Picks the cheapest schedule; ties break toward the lexicographically
/// first candidate.
pub fn tune(a: &SparseMatrix, n: usize, arch: &ArchModel) -> Result<CostReport, TuneError> {
    let reports = tune_all(a, n, arch, CostWeights::default())?;
    Ok(reports
        .into_iter()
        .reduce(|best, r| if r.cost < best.cost { r } else { best })
        .expect("nonempty"))
}

/// Evaluates one specific schedule with the default weights (used to score
/// the shipped defaults against the tuned winner).
pub fn evaluate_schedule(
    a: &SparseMatrix,
    sched: Schedule,
    n: usize,
    arch: &ArchModel,
) -> Result<CostReport, TuneError> {
    let esc = crate::esc::transform(a, sched.uf_i, sched.uf_k);
    let b = DenseMatrix::random(a.n_cols, n, TUNE_B_SEED);
    evaluate(&esc, sched, &b, arch, CostWeights::default())
}

/// The shipped per-bCol default schedules.
pub fn default_schedule(n: usize) -> Schedule {
    let (uf_i, uf_k, wt, tbs) = if n <= 32 {
        (4, 7, 1, 32)
    } else if n <= 64 {
        (3, 7, 2, 32)
    } else {
        (3, 8, 2, 64)
    };
    Schedule::new(uf_i, uf_k, wt, tbs).expect("default schedule")
}
