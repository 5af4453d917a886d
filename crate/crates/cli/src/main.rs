//! `escgen`: transform sparse matrices into the enumerated compressed
//! format, generate SPMM kernel sources, validate schedules on the CPU
//! simulator, tune schedules and run storage sweeps.

use clap::{Args, Parser, Subcommand};
use esc_core::esc::{grid_size, serialize, transform};
use esc_core::io::load_matrix;
use esc_core::ir::Schedule;
use esc_core::matrix::{substitute_synthetic_values, DenseMatrix, SparseMatrix};
use esc_core::metrics::{size_sweep, sweep_csv, DEFAULT_SWEEP_SPARSITIES};
use esc_core::passes::lower;
use esc_core::sim::{compare, oracle_spmm, simulate, DEFAULT_REL_TOL};
use esc_core::tuner::{default_schedule, evaluate_schedule, tune_all, ArchModel, CostWeights};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "escgen",
    version,
    about = "SPMM kernel generator: pattern enumeration + sparse coarsening"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a sparse matrix into the compressed container.
    Transform(TransformArgs),
    /// Emit kernel, host and transformer sources plus a manifest.
    Generate(GenerateArgs),
    /// Execute a schedule on the CPU simulator and check it against the
    /// dense reference.
    Simulate(SimulateArgs),
    /// Search the pruned schedule space for the cheapest candidate.
    Tune(TuneArgs),
    /// Storage-size analytics over a sparsity sweep.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct TransformArgs {
    /// Input matrix (.smtx or .mtx).
    #[arg(long)]
    input: PathBuf,
    /// Row-panel unroll factor.
    #[arg(long)]
    ufi: u32,
    /// Reduction unroll factor.
    #[arg(long)]
    ufk: u32,
    /// Output container path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Input matrix (.smtx or .mtx).
    #[arg(long)]
    input: PathBuf,
    /// Schedule as UFi-UFk-WarpTile-ThreadBlockSize, e.g. 4-7-1-32.
    #[arg(long)]
    schedule: String,
    /// Emit one body per pattern instead of one per nonzero count.
    #[arg(long)]
    no_compaction: bool,
    /// Directory for the emitted files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Manifest name (defaults to the kernel base name).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Input matrix (.smtx or .mtx).
    #[arg(long)]
    input: PathBuf,
    /// Schedule as UFi-UFk-WarpTile-ThreadBlockSize.
    #[arg(long)]
    schedule: String,
    /// Columns of the dense operand B.
    #[arg(long)]
    bcols: usize,
    /// Seed for B and for value substitution in pattern-only inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum relative error against the dense reference.
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    tol: f64,
}

#[derive(Args)]
struct TuneArgs {
    /// Input matrix (.smtx or .mtx).
    #[arg(long)]
    input: PathBuf,
    /// Columns of the dense operand B.
    #[arg(long)]
    bcols: usize,
    /// Architecture: "A100" or a key=value config file. The
    /// ESC_ARCH_CONFIG environment variable overrides this flag.
    #[arg(long, default_value = "A100")]
    arch: String,
    /// Seed for value substitution in pattern-only inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run the storage-size sweep (the only analysis mode).
    #[arg(long)]
    sweep: bool,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    ufi: u32,
    #[arg(long)]
    ufk: u32,
    /// Comma-separated sparsities; defaults to the standard sweep points.
    #[arg(long)]
    sparsities: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Exit code 1: bad input or a failed check. Exit code 2: an internal
/// invariant was violated.
enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    fn user(e: impl std::fmt::Display) -> Self {
        CliError::User(e.to_string())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }
}

fn load_input(path: &Path, seed: u64) -> Result<SparseMatrix, CliError> {
    let mut a = load_matrix(path).map_err(CliError::user)?;
    if a.synthetic_values {
        eprintln!("note: pattern-only input; substituting seeded values (seed {seed})");
        substitute_synthetic_values(&mut a, seed);
    }
    Ok(a)
}

fn parse_schedule(s: &str) -> Result<Schedule, CliError> {
    Schedule::parse(s).map_err(CliError::user)
}

fn cmd_transform(args: TransformArgs) -> Result<(), CliError> {
    let a = load_input(&args.input, 0)?;
    if args.ufi < 1 || args.ufi > esc_core::ir::MAX_UF_I || args.ufk < 1 {
        return Err(CliError::User(format!(
            "--ufi must be in 1..={} and --ufk at least 1",
            esc_core::ir::MAX_UF_I
        )));
    }
    let t = transform(&a, args.ufi, args.ufk);
    t.validate().map_err(CliError::internal)?;
    let bytes = serialize(&t);
    std::fs::write(&args.out, &bytes).map_err(CliError::user)?;

    let real_slots: u64 = t
        .groups
        .iter()
        .map(|g| (g.pattern.popcount() * g.real_cols) as u64)
        .sum();
    let padding_fraction = if t.annz.is_empty() {
        0.0
    } else {
        1.0 - real_slots as f64 / t.annz.len() as f64
    };
    println!("input={}", args.input.display());
    println!("shape={}x{}", t.n_rows, t.n_cols);
    println!("nnz={real_slots}");
    println!("ufi={} ufk={}", t.uf_i, t.uf_k);
    println!("row_panels={}", t.n_row_panels);
    println!("num_patterns={}", t.num_patterns());
    println!("groups={}", t.num_groups());
    println!("grid={}", grid_size(&t));
    println!("padding_fraction={padding_fraction:.4}");
    println!("bytes={}", bytes.len());
    println!("out={}", args.out.display());
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let a = load_input(&args.input, 0)?;
    let sched = parse_schedule(&args.schedule)?;
    let (esc, ir) = lower(&a, sched).map_err(CliError::internal)?;
    let artifact =
        esc_core::emit::emit(&ir, &esc, !args.no_compaction).map_err(CliError::internal)?;

    std::fs::create_dir_all(&args.out_dir).map_err(CliError::user)?;
    let name = args.name.unwrap_or_else(|| {
        format!(
            "spmm_u{}_k{}_w{}_t{}",
            sched.uf_i, sched.uf_k, sched.warp_tile, sched.thread_block_size
        )
    });
    let files = [
        ("kernel.cu", &artifact.kernel_source),
        ("host.cpp", &artifact.host_source),
        ("data_transformer.cpp", &artifact.transformer_source),
    ];
    for (file, contents) in files {
        std::fs::write(args.out_dir.join(file), contents).map_err(CliError::user)?;
    }
    std::fs::write(args.out_dir.join("manifest.txt"), artifact.manifest(&name))
        .map_err(CliError::user)?;

    println!("schedule={sched}");
    println!(
        "compaction={}",
        if artifact.compaction { "on" } else { "off" }
    );
    println!("body_count={}", artifact.body_count);
    println!("grid={}", grid_size(&esc));
    println!("out_dir={}", args.out_dir.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let a = load_input(&args.input, args.seed)?;
    let sched = parse_schedule(&args.schedule)?;
    if args.bcols < 1 {
        return Err(CliError::User("--bcols must be at least 1".into()));
    }
    let (esc, ir) = lower(&a, sched).map_err(CliError::internal)?;
    let b = DenseMatrix::random(a.n_cols, args.bcols, args.seed.wrapping_add(1));
    let sim = simulate(&ir, &esc, &b).map_err(CliError::internal)?;
    let reference = oracle_spmm(&a, &b).map_err(CliError::internal)?;
    let report = compare(&sim.c, &reference, args.tol).map_err(CliError::internal)?;

    println!(
        "simulated schedule {sched} on {}x{} (nnz {}) with bcols {}",
        a.n_rows,
        a.n_cols,
        a.nnz(),
        args.bcols
    );
    println!("schedule={sched}");
    println!("grid={}", grid_size(&esc));
    print!("{}", sim.report());
    println!("max_rel_err={:.3e}", report.max_rel_err);
    println!("tolerance={:.3e}", report.rel_tol);
    for off in &report.offenders {
        println!(
            "offender row={} col={} got={} want={} rel_err={:.3e}",
            off.row, off.col, off.got, off.want, off.rel_err
        );
    }
    println!("result={}", if report.pass { "PASS" } else { "FAIL" });
    if report.pass {
        Ok(())
    } else {
        Err(CliError::User(format!(
            "simulation exceeded tolerance: {:.3e} > {:.3e}",
            report.max_rel_err, report.rel_tol
        )))
    }
}

fn arch_from_flag(flag: &str) -> Result<ArchModel, CliError> {
    let chosen = std::env::var("ESC_ARCH_CONFIG").unwrap_or_else(|_| flag.to_string());
    if chosen.eq_ignore_ascii_case("a100") {
        Ok(ArchModel::a100())
    } else {
        ArchModel::load(Path::new(&chosen)).map_err(CliError::user)
    }
}

fn cmd_tune(args: TuneArgs) -> Result<(), CliError> {
    let a = load_input(&args.input, args.seed)?;
    let arch = arch_from_flag(&args.arch)?;
    if args.bcols < 1 {
        return Err(CliError::User("--bcols must be at least 1".into()));
    }
    let mut reports =
        tune_all(&a, args.bcols, &arch, CostWeights::default()).map_err(CliError::user)?;
    reports.sort_by(|x, y| {
        x.cost
            .total_cmp(&y.cost)
            .then_with(|| x.schedule.cmp(&y.schedule))
    });

    println!(
        "tuned {} candidates on {}x{} (nnz {}) for bcols {} [arch {}]",
        reports.len(),
        a.n_rows,
        a.n_cols,
        a.nnz(),
        args.bcols,
        arch.name
    );
    println!("schedule cost fma loads atomics grid occupancy");
    for r in &reports {
        println!(
            "{} {:.1} {} {} {} {} {:.1}",
            r.schedule, r.cost, r.fma, r.loads, r.atomics, r.grid_size, r.est_occupancy
        );
    }
    let winner = &reports[0];
    let default = default_schedule(args.bcols);
    let default_report =
        evaluate_schedule(&a, default, args.bcols, &arch).map_err(CliError::user)?;
    println!("default={default}");
    println!("default_cost={:.1}", default_report.cost);
    println!("winner={}", winner.schedule);
    println!("winner_cost={:.1}", winner.cost);
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    if !args.sweep {
        return Err(CliError::User(
            "analyze currently supports --sweep only".into(),
        ));
    }
    if args.m < 1 || args.k < 1 {
        return Err(CliError::User("--m and --k must be at least 1".into()));
    }
    if args.ufi < 1 || args.ufi > esc_core::ir::MAX_UF_I || args.ufk < 1 {
        return Err(CliError::User(format!(
            "--ufi must be in 1..={} and --ufk at least 1",
            esc_core::ir::MAX_UF_I
        )));
    }
    let sparsities: Vec<f64> = match &args.sparsities {
        None => DEFAULT_SWEEP_SPARSITIES.to_vec(),
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|s| (0.0..1.0).contains(s))
                    .ok_or_else(|| CliError::User(format!("bad sparsity '{t}'")))
            })
            .collect::<Result<_, _>>()?,
    };
    let rows = size_sweep(args.m, args.k, &sparsities, args.ufi, args.ufk, args.seed);
    let csv = sweep_csv(&rows);
    std::fs::write(&args.out, &csv).map_err(CliError::user)?;
    print!("{csv}");
    println!("out={}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transform(args) => cmd_transform(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
