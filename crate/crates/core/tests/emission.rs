//! Golden-file pins of the exact emission and a host-compiler differential
//! for the generated data transformer.
//!
//! Regenerate goldens after an intentional emission change with
//! `ESC_REGEN_GOLDEN=1 cargo test -p esc-core --test emission`.

use esc_core::emit::{emit, emit_transformer};
use esc_core::esc::transform;
use esc_core::ir::{pretty, Schedule};
use esc_core::matrix::{gen_random, SparseMatrix};
use esc_core::passes::lower;
use std::path::PathBuf;
use std::process::Command;

fn worked_4x4() -> SparseMatrix {
    SparseMatrix::new(
        4,
        4,
        vec![0, 3, 6, 6, 7],
        vec![0, 1, 3, 0, 1, 3, 2],
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
    )
    .unwrap()
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn check_golden(name: &str, text: &str) {
    let path = golden_path(name);
    if std::env::var("ESC_REGEN_GOLDEN").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, text).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing golden {name}; run with ESC_REGEN_GOLDEN=1"));
    assert_eq!(text, expected, "emission drifted from {name}");
}

#[test]
fn golden_kernel_compacted() {
    let (esc, ir) = lower(&worked_4x4(), Schedule::parse("4-2-2-32").unwrap()).unwrap();
    let art = emit(&ir, &esc, true).unwrap();
    check_golden("kernel_4-2-2-32_compacted.cu", &art.kernel_source);
    check_golden("host_4-2-2-32_compacted.cpp", &art.host_source);
}

#[test]
fn golden_kernel_uncompacted() {
    let (esc, ir) = lower(&worked_4x4(), Schedule::parse("4-2-2-32").unwrap()).unwrap();
    let art = emit(&ir, &esc, false).unwrap();
    check_golden("kernel_4-2-2-32_uncompacted.cu", &art.kernel_source);
}

#[test]
fn golden_kernel_minimal() {
    let (esc, ir) = lower(&worked_4x4(), Schedule::parse("1-1-1-32").unwrap()).unwrap();
    let art = emit(&ir, &esc, true).unwrap();
    check_golden("kernel_1-1-1-32.cu", &art.kernel_source);
}

#[test]
fn golden_transformer() {
    let text = emit_transformer(Schedule::parse("4-2-2-32").unwrap());
    check_golden("data_transformer_4-2.cpp", &text);
}

#[test]
fn golden_ir_pretty() {
    let (_, ir) = lower(&worked_4x4(), Schedule::parse("4-2-2-32").unwrap()).unwrap();
    check_golden("ir_4-2-2-32.txt", &pretty(&ir));
}

// --- transformer differential --------------------------------------------

fn find_cxx() -> Option<&'static str> {
    for cxx in ["c++", "g++", "clang++"] {
        if Command::new(cxx)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
        {
            return Some(cxx);
        }
    }
    None
}

fn parse_ints(line: &str, key: &str) -> Vec<u32> {
    let rest = line
        .strip_prefix(key)
        .unwrap_or_else(|| panic!("expected '{key}' line, got '{line}'"));
    rest.split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect()
}

/// Compiles the emitted C++ transformer and checks its arrays are byte
/// equal to the native transform. Skipped when no host compiler exists.
#[test]
fn emitted_transformer_matches_native() {
    let Some(cxx) = find_cxx() else {
        eprintln!("skipping: no host C++ compiler found");
        return;
    };
    let sched = Schedule::parse("4-2-1-32").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("dt.cpp");
    let bin = dir.path().join("dt");
    std::fs::write(&src, emit_transformer(sched)).unwrap();
    let build = Command::new(cxx)
        .args(["-std=c++17", "-DESC_TRANSFORMER_MAIN", "-o"])
        .arg(&bin)
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        build.status.success(),
        "transformer failed to compile:\n{}",
        String::from_utf8_lossy(&build.stderr)
    );

    for a in [worked_4x4(), gen_random(23, 17, 0.6, 5)] {
        let native = transform(&a, sched.uf_i, sched.uf_k);

        let mut input = format!("{} {} {}\n", a.n_rows, a.n_cols, a.nnz());
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
        input.push_str(&join(&mut a.row_ptr.iter().map(|p| p.to_string())));
        input.push('\n');
        input.push_str(&join(&mut a.col_idx.iter().map(|c| c.to_string())));
        input.push('\n');
        input.push_str(&join(&mut a.values.iter().map(|v| format!("{:08x}", v.to_bits()))));
        input.push('\n');
        let in_path = dir.path().join("in.txt");
        std::fs::write(&in_path, input).unwrap();

        let run = Command::new(&bin).arg(&in_path).output().unwrap();
        assert!(run.status.success());
        let out = String::from_utf8(run.stdout).unwrap();
        let mut lines = out.lines();

        let np: usize = lines
            .next()
            .unwrap()
            .strip_prefix("num_patterns ")
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(np, native.num_patterns());
        let panel = parse_ints(lines.next().unwrap(), "group_panel");
        let pattern = parse_ints(lines.next().unwrap(), "group_pattern");
        let padded = parse_ints(lines.next().unwrap(), "group_padded_cols");
        assert_eq!(panel, native.groups.iter().map(|g| g.panel).collect::<Vec<_>>());
        assert_eq!(
            pattern,
            native.groups.iter().map(|g| g.pattern.0).collect::<Vec<_>>()
        );
        assert_eq!(
            padded,
            native.groups.iter().map(|g| g.padded_cols).collect::<Vec<_>>()
        );
        assert_eq!(parse_ints(lines.next().unwrap(), "rpp"), native.rpp);
        assert_eq!(parse_ints(lines.next().unwrap(), "npp"), native.npp);
        assert_eq!(parse_ints(lines.next().unwrap(), "cols"), native.cols);
        let annz_hex: Vec<String> = lines
            .next()
            .unwrap()
            .strip_prefix("annz")
            .unwrap()
            .split_whitespace()
            .map(|t| t.to_string())
            .collect();
        let native_hex: Vec<String> = native
            .annz
            .iter()
            .map(|v| format!("{:08x}", v.to_bits()))
            .collect();
        assert_eq!(annz_hex, native_hex, "values must agree bitwise");
    }
}
