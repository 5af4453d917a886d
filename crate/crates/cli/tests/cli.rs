//! End-to-end tests of the `escgen` binary: every subcommand, its exit
//! codes and the determinism contract.

use esc_core::matrix::{gen_random, SparseMatrix};
use std::path::Path;
use std::process::{Command, Output};

fn escgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_escgen"))
        .args(args)
        .output()
        .expect("spawn escgen")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("missing '{key}=' in:\n{text}"))
}

/// Writes a matrix in the three-line pointer format, values included on a
/// fourth line so they survive the round trip.
fn write_smtx(path: &Path, a: &SparseMatrix) {
    let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
    let text = format!(
        "{}, {}, {}\n{}\n{}\n{}\n",
        a.n_rows,
        a.n_cols,
        a.nnz(),
        join(&mut a.row_ptr.iter().map(|p| p.to_string())),
        join(&mut a.col_idx.iter().map(|c| c.to_string())),
        join(&mut a.values.iter().map(|v| format!("{v:.7}")))
    );
    std::fs::write(path, text).unwrap();
}

fn worked_4x4_path(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("worked.smtx");
    std::fs::write(&p, "4, 4, 7\n0 3 6 6 7\n0 1 3 0 1 3 2\n").unwrap();
    p
}

#[test]
fn transform_identity_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("eye.smtx");
    std::fs::write(&input, "2, 2, 2\n0 1 2\n0 1\n").unwrap();
    let out = dir.path().join("eye.esc");
    let res = escgen(&[
        "transform",
        "--input",
        input.to_str().unwrap(),
        "--ufi",
        "2",
        "--ufk",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = stdout(&res);
    // the diagonal has one single-row pattern per panel row
    assert_eq!(field(&text, "num_patterns"), "2");
    assert_eq!(field(&text, "groups"), "2");
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"ESC1");
    let t = esc_core::esc::deserialize(&bytes).unwrap();
    assert_eq!(t.num_patterns(), 2);
}

#[test]
fn transform_worked_example_two_groups() {
    let dir = tempfile::tempdir().unwrap();
    let input = worked_4x4_path(dir.path());
    let out = dir.path().join("w.esc");
    let res = escgen(&[
        "transform",
        "--input",
        input.to_str().unwrap(),
        "--ufi",
        "4",
        "--ufk",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let text = stdout(&res);
    assert_eq!(field(&text, "groups"), "2");
    assert_eq!(field(&text, "num_patterns"), "2");
    assert_eq!(field(&text, "padding_fraction"), "0.0000");
}

#[test]
fn transform_pattern_bound_at_ufi4() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("r.smtx");
    write_smtx(&input, &gen_random(32, 48, 0.5, 11));
    let out = dir.path().join("r.esc");
    let res = escgen(&[
        "transform",
        "--input",
        input.to_str().unwrap(),
        "--ufi",
        "4",
        "--ufk",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let np: usize = field(&stdout(&res), "num_patterns").parse().unwrap();
    assert!(np <= 15);
}

#[test]
fn transform_rejects_bad_input_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.smtx");
    std::fs::write(&input, "2, 2, 2\n0 1 9\n0 1\n").unwrap();
    let res = escgen(&[
        "transform",
        "--input",
        input.to_str().unwrap(),
        "--ufi",
        "2",
        "--ufk",
        "1",
        "--out",
        dir.path().join("x.esc").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("pointer/count mismatch"));
}

#[test]
fn generate_writes_files_and_is_hash_stable() {
    let dir = tempfile::tempdir().unwrap();
    let input = worked_4x4_path(dir.path());
    let run = |out_dir: &Path| {
        let res = escgen(&[
            "generate",
            "--input",
            input.to_str().unwrap(),
            "--schedule",
            "4-7-1-32",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        stdout(&res)
    };
    let d1 = dir.path().join("g1");
    let d2 = dir.path().join("g2");
    let t1 = run(&d1);
    run(&d2);
    assert_eq!(field(&t1, "schedule"), "4-7-1-32");
    assert_eq!(field(&t1, "body_count"), "4");
    for f in ["kernel.cu", "host.cpp", "data_transformer.cpp", "manifest.txt"] {
        let b1 = std::fs::read(d1.join(f)).unwrap();
        let b2 = std::fs::read(d2.join(f)).unwrap();
        assert_eq!(b1, b2, "{f} differs between runs");
    }
    let manifest = std::fs::read_to_string(d1.join("manifest.txt")).unwrap();
    assert!(manifest.contains("schedule=4-7-1-32"));
    assert!(manifest.contains("kernel_sha256="));
}

#[test]
fn generate_no_compaction_grows_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let input = worked_4x4_path(dir.path());
    let out_dir = dir.path().join("g");
    let res = escgen(&[
        "generate",
        "--input",
        input.to_str().unwrap(),
        "--schedule",
        "4-2-1-32",
        "--no-compaction",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert_eq!(field(&stdout(&res), "body_count"), "15");
}

#[test]
fn generate_rejects_invalid_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let input = worked_4x4_path(dir.path());
    let res = escgen(&[
        "generate",
        "--input",
        input.to_str().unwrap(),
        "--schedule",
        "0-1-1-32",
        "--out-dir",
        dir.path().join("g").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn simulate_random_matrix_passes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("a.smtx");
    write_smtx(&input, &gen_random(128, 128, 0.7, 42));
    let res = escgen(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--schedule",
        "4-2-1-32",
        "--bcols",
        "64",
        "--seed",
        "3",
    ]);
    assert_eq!(res.status.code(), Some(0));
    let text = stdout(&res);
    assert_eq!(field(&text, "result"), "PASS");
    // deterministic given the seed
    let again = escgen(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--schedule",
        "4-2-1-32",
        "--bcols",
        "64",
        "--seed",
        "3",
    ]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn simulate_fails_at_zero_tolerance_on_reassociation() {
    // row 0 spans three columns whose patterns differ, so the block order
    // regroups its additions; exact equality cannot survive rounding
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("re.smtx");
    std::fs::write(&input, "2, 3, 4\n0 3 4\n0 1 2 0\n1 1 1 1\n").unwrap();
    let res = escgen(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--schedule",
        "2-1-1-32",
        "--bcols",
        "32",
        "--seed",
        "0",
        "--tol",
        "0",
    ]);
    assert_eq!(res.status.code(), Some(1));
    let text = stdout(&res);
    assert_eq!(field(&text, "result"), "FAIL");
    assert!(text.contains("offender"));
}

#[test]
fn simulate_zero_matrix_trivially_passes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.smtx");
    std::fs::write(&input, "4, 4, 0\n0 0 0 0 0\n").unwrap();
    let res = escgen(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--schedule",
        "4-2-1-32",
        "--bcols",
        "32",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = stdout(&res);
    assert_eq!(field(&text, "fma"), "0");
    assert_eq!(field(&text, "result"), "PASS");
}

#[test]
fn tune_respects_constraints_and_beats_default() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.smtx");
    write_smtx(&input, &gen_random(48, 48, 0.7, 5));
    let res = escgen(&[
        "tune",
        "--input",
        input.to_str().unwrap(),
        "--bcols",
        "32",
    ]);
    assert!(res.status.success());
    let text = stdout(&res);
    assert!(text.contains("[arch A100]"));
    // N=32 admits no warp tile beyond 1 and no block beyond 32 threads
    for line in text.lines().skip(2) {
        let Some(schedule) = line.split(' ').next() else {
            continue;
        };
        if let Ok(s) = esc_core::ir::Schedule::parse(schedule) {
            assert_eq!(s.warp_tile, 1, "{line}");
            assert_eq!(s.thread_block_size, 32, "{line}");
        }
    }
    let winner: f64 = field(&text, "winner_cost").parse().unwrap();
    let default: f64 = field(&text, "default_cost").parse().unwrap();
    assert!(winner <= default);
}

#[test]
fn tune_arch_config_via_env() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.smtx");
    write_smtx(&input, &gen_random(16, 16, 0.5, 1));
    let cfg = dir.path().join("toy.arch");
    std::fs::write(&cfg, "name = toy\nsm_count = 4\n").unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_escgen"))
        .args([
            "tune",
            "--input",
            input.to_str().unwrap(),
            "--bcols",
            "32",
        ])
        .env("ESC_ARCH_CONFIG", cfg.to_str().unwrap())
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(stdout(&res).contains("[arch toy]"));
}

#[test]
fn analyze_sweep_band_and_reversal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let res = escgen(&[
        "analyze",
        "--sweep",
        "--m",
        "512",
        "--k",
        "512",
        "--ufi",
        "4",
        "--ufk",
        "2",
        "--sparsities",
        "0.7,0.99",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("sparsity,esc_over_dense,csr_over_dense")
    );
    let parse_row = |l: &str| -> (f64, f64, f64) {
        let v: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
        (v[0], v[1], v[2])
    };
    let (s1, esc1, csr1) = parse_row(lines.next().unwrap());
    let (s2, esc2, csr2) = parse_row(lines.next().unwrap());
    assert_eq!(s1, 0.7);
    assert!(esc1 < csr1, "esc {esc1} !< csr {csr1} at 0.7");
    assert_eq!(s2, 0.99);
    assert!(esc2 > csr2, "esc {esc2} !> csr {csr2} at 0.99");
}

#[test]
fn analyze_requires_sweep_flag() {
    let dir = tempfile::tempdir().unwrap();
    let res = escgen(&[
        "analyze",
        "--m",
        "8",
        "--k",
        "8",
        "--ufi",
        "2",
        "--ufk",
        "1",
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
}
