//! GPU source emission from a lowered kernel IR.
//!
//! Three files come out of [`emit`]: the kernel source in a plain CUDA C++
//! dialect (no architecture intrinsics, 32-bit float `atomicAdd` for every
//! flush), a host launcher, and a standalone C++ data transformer that
//! builds the compressed arrays so a weight matrix can be converted once
//! and reused across calls.
//!
//! Dispatch modes:
//!
//! * uncompacted -- one kernel holding a `switch` over every possible
//!   pattern of a `UFi`-row panel, `2^UFi - 1` bodies with hard-coded row
//!   offsets;
//! * compacted -- one kernel per nonzero count (popcount class), `UFi`
//!   bodies total; row offsets arrive through a per-ordinal table and the
//!   host launches each class over a contiguous block range.
//!
//! Emission is byte-deterministic for identical inputs.

use crate::esc::{grid_size, EscMatrix, PatternId};
use crate::ir::{FmaDst, Grid, IrError, KernelIR, Node, Range, Schedule, Stage, Stmt};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("emission requires a fully lowered kernel, found stage '{0}'")]
    NotLowered(&'static str),
    #[error("kernel/format mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// Emitted source files plus their dispatch shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedArtifact {
    pub kernel_source: String,
    pub host_source: String,
    pub transformer_source: String,
    /// Distinct kernel bodies: `UFi` with compaction, `2^UFi - 1` without.
    pub body_count: usize,
    pub compaction: bool,
    pub schedule: Schedule,
}

/// Non-blank line counts per emitted file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineCounts {
    pub kernel: usize,
    pub host: usize,
    pub transformer: usize,
}

fn non_blank_lines(s: &str) -> usize {
    s.lines().filter(|l| !l.trim().is_empty()).count()
}

impl EmittedArtifact {
    pub fn line_counts(&self) -> LineCounts {
        LineCounts {
            kernel: non_blank_lines(&self.kernel_source),
            host: non_blank_lines(&self.host_source),
            transformer: non_blank_lines(&self.transformer_source),
        }
    }

    /// Line-oriented `key=value` manifest with content hashes.
    pub fn manifest(&self, name: &str) -> String {
        let counts = self.line_counts();
        let mut out = String::new();
        let _ = writeln!(out, "name={name}");
        let _ = writeln!(out, "schedule={}", self.schedule);
        let _ = writeln!(
            out,
            "compaction={}",
            if self.compaction { "on" } else { "off" }
        );
        let _ = writeln!(out, "body_count={}", self.body_count);
        let _ = writeln!(out, "kernel_lines={}", counts.kernel);
        let _ = writeln!(out, "host_lines={}", counts.host);
        let _ = writeln!(out, "transformer_lines={}", counts.transformer);
        let _ = writeln!(out, "kernel_sha256={}", hex_digest(&self.kernel_source));
        let _ = writeln!(out, "host_sha256={}", hex_digest(&self.host_source));
        let _ = writeln!(
            out,
            "transformer_sha256={}",
            hex_digest(&self.transformer_source)
        );
        out
    }
}

fn hex_digest(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn kernel_base_name(s: Schedule) -> String {
    format!(
        "spmm_u{}_k{}_w{}_t{}",
        s.uf_i, s.uf_k, s.warp_tile, s.thread_block_size
    )
}

fn col_suffix(off: u32) -> String {
    if off == 0 {
        String::new()
    } else {
        format!(" + {off}")
    }
}

struct Writer {
    out: String,
    depth: usize,
}

impl Writer {
    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }
}

/// Emits one arm body (the j loop with accumulators, the slot loop and the
/// flushes). `row_expr` renders the C row offset of a flush.
fn emit_body(w: &mut Writer, nodes: &[Node], row_expr: &dyn Fn(u32) -> String) {
    for node in nodes {
        match node {
            Node::Loop(l) if l.iter == "j" => {
                w.line(&format!("for (int j = tid; j < n; j += {}) {{", l.step));
                w.depth += 1;
                emit_body(w, &l.body, row_expr);
                w.depth -= 1;
                w.line("}");
            }
            Node::Loop(l) if l.range == Range::EscSlots => {
                w.line(&format!(
                    "for (int k = rpp[g]; k < rpp[g + 1]; k += {}) {{",
                    l.step
                ));
                w.depth += 1;
                emit_body(w, &l.body, row_expr);
                w.depth -= 1;
                w.line("}");
            }
            Node::Loop(l) => {
                emit_body(w, &l.body, row_expr);
            }
            Node::Dispatch(_) => unreachable!("dispatch handled by the kernel emitters"),
            Node::Stmt(s) => match s {
                Stmt::AccInit { acc } => w.line(&format!("float {acc} = 0.0f;")),
                Stmt::CursorInit => w.line("int t_nnz = npp[g];"),
                Stmt::CursorAdvance { amount } => w.line(&format!("t_nnz += {amount};")),
                Stmt::ColOffset { index } => {
                    let idx = *index as u32;
                    w.line(&format!("int br{index} = cols[k{}];", col_suffix(idx)))
                }
                Stmt::Fma(f) => {
                    let acc = match &f.dst {
                        FmaDst::Acc(name) => name.clone(),
                        FmaDst::DirectC { .. } => {
                            unreachable!("lowered kernels accumulate in registers")
                        }
                    };
                    let offset = match f.a {
                        crate::ir::AOperand::Esc { offset } => offset,
                        crate::ir::AOperand::Dense { .. } => {
                            unreachable!("lowered kernels read the compressed array")
                        }
                    };
                    let br = match f.b_row {
                        crate::ir::BRow::Offset(x) => x,
                        crate::ir::BRow::KOffset(_) => {
                            unreachable!("lowered kernels address B through Cols")
                        }
                    };
                    w.line(&format!(
                        "{acc} += annz[t_nnz + {offset}] * b[br{br} * n + j{}];",
                        col_suffix(f.col_offset)
                    ));
                }
                Stmt::AtomicAdd {
                    acc,
                    row_offset,
                    col_offset,
                } => {
                    w.line(&format!(
                        "atomicAdd(&c[({}) * n + j{}], {acc});",
                        row_expr(*row_offset),
                        col_suffix(*col_offset)
                    ));
                }
            },
        }
    }
}

fn dispatch_arms(ir: &KernelIR) -> Result<&[crate::ir::DispatchArm], EmitError> {
    match ir.nest.first() {
        Some(Node::Dispatch(arms)) => Ok(arms),
        _ => Err(EmitError::Mismatch(
            "lowered kernel has no pattern dispatch".into(),
        )),
    }
}

fn emit_kernel_uncompacted(ir: &KernelIR, sched: Schedule) -> Result<(String, usize), EmitError> {
    let arms = dispatch_arms(ir)?;
    let name = kernel_base_name(sched);
    let mut w = Writer {
        out: String::new(),
        depth: 0,
    };
    w.line(&format!(
        "// spmm kernel, schedule {sched}, one body per panel pattern"
    ));
    w.line(&format!("extern \"C\" __global__ void {name}("));
    w.line("    const float* __restrict__ annz, const int* __restrict__ cols,");
    w.line("    const int* __restrict__ rpp, const int* __restrict__ npp,");
    w.line("    const int* __restrict__ pattern_table, int num_patterns,");
    w.line("    const float* __restrict__ b, float* __restrict__ c, int n) {");
    w.depth += 1;
    w.line("int g = blockIdx.x;");
    w.line("int row_panel = g / num_patterns;");
    w.line("int pattern = pattern_table[g % num_patterns];");
    w.line(&format!("int i = row_panel * {};", sched.uf_i));
    w.line("int tid = threadIdx.x;");
    w.line("switch (pattern) {");
    for arm in arms {
        w.line(&format!("case {}: {{", arm.pattern.0));
        w.depth += 1;
        emit_body(&mut w, &arm.body, &|r| format!("i + {r}"));
        w.depth -= 1;
        w.line("} break;");
    }
    w.line("}");
    w.depth -= 1;
    w.line("}");
    Ok((w.out, arms.len()))
}

fn emit_kernel_compacted(ir: &KernelIR, sched: Schedule) -> Result<(String, usize), EmitError> {
    let arms = dispatch_arms(ir)?;
    let base = kernel_base_name(sched);
    let uf_i = sched.uf_i;
    let mut w = Writer {
        out: String::new(),
        depth: 0,
    };
    w.line(&format!(
        "// spmm kernels, schedule {sched}, one body per nonzero count"
    ));
    w.line("// row offsets arrive via a per-ordinal table; the host launches each");
    w.line("// popcount class over a contiguous range of its group ids");
    for pc in 1..=uf_i {
        // the template arm: the pattern with the low pc bits set, whose row
        // offsets coincide with slot ranks
        let template = PatternId((1u32 << pc) - 1);
        let arm = arms
            .iter()
            .find(|a| a.pattern == template)
            .ok_or_else(|| EmitError::Mismatch(format!("missing arm {:#b}", template.0)))?;
        w.line(&format!("extern \"C\" __global__ void {base}_pc{pc}("));
        w.line("    const float* __restrict__ annz, const int* __restrict__ cols,");
        w.line("    const int* __restrict__ rpp, const int* __restrict__ npp,");
        w.line("    const int* __restrict__ class_groups, const int* __restrict__ row_offsets,");
        w.line("    int num_patterns, const float* __restrict__ b, float* __restrict__ c, int n) {");
        w.depth += 1;
        w.line("int g = class_groups[blockIdx.x];");
        w.line("int row_panel = g / num_patterns;");
        w.line(&format!(
            "const int* ro = row_offsets + (g % num_patterns) * {uf_i};"
        ));
        w.line(&format!("int i = row_panel * {uf_i};"));
        w.line("int tid = threadIdx.x;");
        emit_body(&mut w, &arm.body, &|r| format!("i + ro[{r}]"));
        w.depth -= 1;
        w.line("}");
    }
    Ok((w.out, uf_i as usize))
}

/// The degenerate single-pattern kernel; with `UFi = 1` the only pattern is
/// `0b1`, so both dispatch modes emit this identical text.
fn emit_kernel_single(ir: &KernelIR, sched: Schedule) -> Result<(String, usize), EmitError> {
    let arms = dispatch_arms(ir)?;
    let arm = &arms[0];
    let name = kernel_base_name(sched);
    let mut w = Writer {
        out: String::new(),
        depth: 0,
    };
    w.line(&format!(
        "// spmm kernel, schedule {sched}, single panel pattern"
    ));
    w.line(&format!("extern \"C\" __global__ void {name}("));
    w.line("    const float* __restrict__ annz, const int* __restrict__ cols,");
    w.line("    const int* __restrict__ rpp, const int* __restrict__ npp,");
    w.line("    int num_patterns, const float* __restrict__ b, float* __restrict__ c, int n) {");
    w.depth += 1;
    w.line("int g = blockIdx.x;");
    w.line("int row_panel = g / num_patterns;");
    w.line("int i = row_panel;");
    w.line("int tid = threadIdx.x;");
    emit_body(&mut w, &arm.body, &|r| format!("i + {r}"));
    w.depth -= 1;
    w.line("}");
    Ok((w.out, 1))
}

fn emit_host(sched: Schedule, esc: &EscMatrix, compaction: bool) -> String {
    let base = kernel_base_name(sched);
    let uf_i = sched.uf_i;
    let tbs = sched.thread_block_size;
    let j_step = sched.j_step();
    let mut w = Writer {
        out: String::new(),
        depth: 0,
    };
    w.line("// host launcher: converts A once via dataTransformer, then reuses the");
    w.line("// compressed matrix across multiplications");
    w.line(&format!(
        "// current matrix: {} x {}, {} patterns, grid {}",
        esc.n_rows,
        esc.n_cols,
        esc.num_patterns(),
        grid_size(esc)
    ));
    w.line("#include <cassert>");
    w.line("#include <cstdio>");
    w.line("#include <vector>");
    w.line("#include <cuda_runtime.h>");
    w.line("#include \"data_transformer.h\"");
    w.line("");
    w.line("static float* to_device(const float* src, size_t count) {");
    w.line("  float* d = nullptr;");
    w.line("  cudaMalloc(&d, count * sizeof(float));");
    w.line("  cudaMemcpy(d, src, count * sizeof(float), cudaMemcpyHostToDevice);");
    w.line("  return d;");
    w.line("}");
    w.line("");
    w.line("static int* to_device_i(const int* src, size_t count) {");
    w.line("  int* d = nullptr;");
    w.line("  cudaMalloc(&d, count * sizeof(int));");
    w.line("  cudaMemcpy(d, src, count * sizeof(int), cudaMemcpyHostToDevice);");
    w.line("  return d;");
    w.line("}");
    w.line("");
    w.line("// C = A * B with A pre-transformed; B is k x n row-major, C is m x n.");
    w.line("void spmm(const EscHost& ta, const float* b, float* c_out, int n) {");
    w.depth += 1;
    w.line(&format!("const int uf_i = {uf_i};"));
    if sched.warp_tile > 1 {
        w.line(&format!(
            "assert(n % {j_step} == 0 && \"warp-tiled kernels need n divisible by the j step\");"
        ));
    }
    w.line("int panels = (ta.m + uf_i - 1) / uf_i;");
    w.line("int blocks = ta.num_patterns * panels;");
    w.line("if (blocks == 0) { return; }");
    w.line("// C gets slack rows up to the panel multiple so flushes of a ragged");
    w.line("// final panel stay in bounds; only m rows are copied back");
    w.line("int padded_rows = panels * uf_i;");
    w.line("float* d_annz = to_device(ta.annz.data(), ta.annz.size());");
    w.line("int* d_cols = to_device_i(ta.cols.data(), ta.cols.size());");
    w.line("int* d_rpp = to_device_i(ta.rpp.data(), ta.rpp.size());");
    w.line("int* d_npp = to_device_i(ta.npp.data(), ta.npp.size());");
    w.line("float* d_b = to_device(b, (size_t)ta.k * n);");
    w.line("float* d_c = nullptr;");
    w.line("cudaMalloc(&d_c, (size_t)padded_rows * n * sizeof(float));");
    w.line("cudaMemset(d_c, 0, (size_t)padded_rows * n * sizeof(float));");
    if compaction && uf_i > 1 {
        w.line("// contiguous block ranges per popcount class");
        w.line("std::vector<int> class_groups;");
        w.line(&format!("std::vector<int> class_first({} + 1, 0);", uf_i));
        w.line(&format!("for (int pc = 1; pc <= {uf_i}; ++pc) {{"));
        w.line("  class_first[pc - 1] = (int)class_groups.size();");
        w.line("  for (int g = 0; g < blocks; ++g) {");
        w.line("    int bits = ta.group_pattern[g % ta.num_patterns];");
        w.line("    if (__builtin_popcount(bits) == pc) class_groups.push_back(g);");
        w.line("  }");
        w.line("}");
        w.line(&format!("class_first[{uf_i}] = (int)class_groups.size();"));
        w.line("// per-ordinal row offsets, one fixed-width record per pattern");
        w.line(&format!(
            "std::vector<int> row_offsets(ta.num_patterns * {uf_i}, 0);"
        ));
        w.line("for (int o = 0; o < ta.num_patterns; ++o) {");
        w.line("  int bits = ta.group_pattern[o];");
        w.line("  int slot = 0;");
        w.line(&format!("  for (int r = 0; r < {uf_i}; ++r) {{"));
        w.line(&format!(
            "    if (bits & (1 << r)) row_offsets[o * {uf_i} + slot++] = r;"
        ));
        w.line("  }");
        w.line("}");
        w.line("int* d_class_groups = to_device_i(class_groups.data(), class_groups.size());");
        w.line("int* d_row_offsets = to_device_i(row_offsets.data(), row_offsets.size());");
        for pc in 1..=uf_i {
            w.line(&format!(
                "if (int count = class_first[{pc}] - class_first[{}]; count > 0) {{",
                pc - 1
            ));
            w.line(&format!(
                "  {base}_pc{pc}<<<count, {tbs}>>>(d_annz, d_cols, d_rpp, d_npp,"
            ));
            w.line(&format!(
                "      d_class_groups + class_first[{}], d_row_offsets, ta.num_patterns, d_b, d_c, n);",
                pc - 1
            ));
            w.line("}");
        }
        w.line("cudaFree(d_class_groups);");
        w.line("cudaFree(d_row_offsets);");
    } else if uf_i > 1 {
        w.line("int* d_pattern_table = to_device_i(ta.group_pattern.data(), ta.num_patterns);");
        w.line(&format!(
            "{base}<<<blocks, {tbs}>>>(d_annz, d_cols, d_rpp, d_npp, d_pattern_table,"
        ));
        w.line("    ta.num_patterns, d_b, d_c, n);");
        w.line("cudaFree(d_pattern_table);");
    } else {
        w.line(&format!(
            "{base}<<<blocks, {tbs}>>>(d_annz, d_cols, d_rpp, d_npp, ta.num_patterns, d_b, d_c, n);"
        ));
    }
    w.line("cudaMemcpy(c_out, d_c, (size_t)ta.m * n * sizeof(float), cudaMemcpyDeviceToHost);");
    w.line("cudaFree(d_annz);");
    w.line("cudaFree(d_cols);");
    w.line("cudaFree(d_rpp);");
    w.line("cudaFree(d_npp);");
    w.line("cudaFree(d_b);");
    w.line("cudaFree(d_c);");
    w.depth -= 1;
    w.line("}");
    w.out
}

/// Standalone C++ source implementing the data transform for a fixed
/// `(UFi, UFk)`: identical grouping, ordering and padding rules as the
/// native transform, so the compressed arrays agree byte for byte.
pub fn emit_transformer(sched: Schedule) -> String {
    let uf_i = sched.uf_i;
    let uf_k = sched.uf_k;
    format!(
        r#"// data transformer for schedule {sched} (UFi={uf_i}, UFk={uf_k})
// Converts a CSR matrix into the enumerated compressed format: row panels
// of {uf_i} rows, per-column patterns, groups laid out per
// (panel, pattern ordinal) with columns zero-padded to a multiple of {uf_k}.
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <set>
#include <vector>

struct EscHost {{
  int m = 0;
  int k = 0;
  int uf_i = {uf_i};
  int uf_k = {uf_k};
  int num_patterns = 0;
  std::vector<int> group_panel;
  std::vector<int> group_pattern;
  std::vector<int> group_padded_cols;
  std::vector<int> rpp;
  std::vector<int> npp;
  std::vector<int> cols;
  std::vector<float> annz;
}};

EscHost dataTransformer(int m, int k, const int* row_ptr, const int* col_idx,
                        const float* values) {{
  const int UFI = {uf_i};
  const int UFK = {uf_k};
  EscHost out;
  out.m = m;
  out.k = k;
  int panels = (m + UFI - 1) / UFI;

  // per panel: pattern -> (columns ascending, values column-major with
  // pattern rows ascending per column)
  std::vector<std::map<uint32_t, std::pair<std::vector<int>, std::vector<float>>>> maps(panels);
  std::set<uint32_t> pattern_set;
  std::vector<uint32_t> mask(k, 0);
  std::vector<float> vals((size_t)k * UFI, 0.0f);
  for (int panel = 0; panel < panels; ++panel) {{
    std::vector<int> touched;
    for (int c = 0; c < k; ++c) mask[c] = 0;
    for (int r = 0; r < UFI; ++r) {{
      int row = panel * UFI + r;
      if (row >= m) break;
      for (int idx = row_ptr[row]; idx < row_ptr[row + 1]; ++idx) {{
        int c = col_idx[idx];
        if (mask[c] == 0) touched.push_back(c);
        mask[c] |= 1u << r;
        vals[(size_t)c * UFI + r] = values[idx];
      }}
    }}
    std::sort(touched.begin(), touched.end());
    auto& map = maps[panel];
    for (int c : touched) {{
      uint32_t bits = mask[c];
      pattern_set.insert(bits);
      auto& group = map[bits];
      group.first.push_back(c);
      for (int r = 0; r < UFI; ++r) {{
        if (bits & (1u << r)) group.second.push_back(vals[(size_t)c * UFI + r]);
      }}
    }}
  }}

  std::vector<uint32_t> patterns(pattern_set.begin(), pattern_set.end());
  out.num_patterns = (int)patterns.size();
  out.rpp.push_back(0);
  out.npp.push_back(0);
  for (int panel = 0; panel < panels; ++panel) {{
    for (uint32_t bits : patterns) {{
      int pc = __builtin_popcount(bits);
      int real = 0;
      auto it = maps[panel].find(bits);
      if (it != maps[panel].end()) {{
        const auto& group = it->second;
        real = (int)group.first.size();
        int padded = (real + UFK - 1) / UFK * UFK;
        out.cols.insert(out.cols.end(), group.first.begin(), group.first.end());
        out.annz.insert(out.annz.end(), group.second.begin(), group.second.end());
        int last = group.first.back();
        for (int p = real; p < padded; ++p) {{
          out.cols.push_back(last);
          for (int s = 0; s < pc; ++s) out.annz.push_back(0.0f);
        }}
        out.group_padded_cols.push_back(padded);
      }} else {{
        out.group_padded_cols.push_back(0);
      }}
      out.group_panel.push_back(panel);
      out.group_pattern.push_back((int)bits);
      out.rpp.push_back((int)out.cols.size());
      out.npp.push_back((int)out.annz.size());
    }}
  }}
  return out;
}}

#ifdef ESC_TRANSFORMER_MAIN
// Reads "m k nnz", then m+1 row pointers, nnz column indices and nnz values
// as hex float bit patterns; dumps every output array for differential
// comparison.
int main(int argc, char** argv) {{
  if (argc != 2) {{
    std::fprintf(stderr, "usage: %s <input>\n", argv[0]);
    return 2;
  }}
  std::FILE* f = std::fopen(argv[1], "r");
  if (!f) return 2;
  int m = 0, k = 0, nnz = 0;
  if (std::fscanf(f, "%d %d %d", &m, &k, &nnz) != 3) return 2;
  std::vector<int> row_ptr(m + 1), col_idx(nnz);
  std::vector<float> values(nnz);
  for (int i = 0; i <= m; ++i) std::fscanf(f, "%d", &row_ptr[i]);
  for (int i = 0; i < nnz; ++i) std::fscanf(f, "%d", &col_idx[i]);
  for (int i = 0; i < nnz; ++i) {{
    uint32_t bits = 0;
    std::fscanf(f, "%x", &bits);
    float v;
    std::memcpy(&v, &bits, 4);
    values[i] = v;
  }}
  std::fclose(f);
  EscHost t = dataTransformer(m, k, row_ptr.data(), col_idx.data(), values.data());
  std::printf("num_patterns %d\n", t.num_patterns);
  auto dump_i = [](const char* name, const std::vector<int>& v) {{
    std::printf("%s", name);
    for (int x : v) std::printf(" %d", x);
    std::printf("\n");
  }};
  dump_i("group_panel", t.group_panel);
  dump_i("group_pattern", t.group_pattern);
  dump_i("group_padded_cols", t.group_padded_cols);
  dump_i("rpp", t.rpp);
  dump_i("npp", t.npp);
  dump_i("cols", t.cols);
  std::printf("annz");
  for (float v : t.annz) {{
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    std::printf(" %08x", bits);
  }}
  std::printf("\n");
  return 0;
}}
#endif
"#
    )
}

/// Emits kernel, host and transformer sources for a fully lowered IR.
pub fn emit(ir: &KernelIR, esc: &EscMatrix, compaction: bool) -> Result<EmittedArtifact, EmitError> {
    if ir.stage != Stage::DataTransformed {
        return Err(EmitError::NotLowered(ir.stage.name()));
    }
    let sched = ir
        .schedule
        .ok_or_else(|| EmitError::Mismatch("lowered kernel carries no schedule".into()))?;
    if esc.uf_i != sched.uf_i || esc.uf_k != sched.uf_k {
        return Err(EmitError::Mismatch(format!(
            "kernel schedule {sched} but format carries UFi={}, UFk={}",
            esc.uf_i, esc.uf_k
        )));
    }
    if let Grid::GroupBlocks { uf_i, .. } = ir.grid {
        if uf_i != sched.uf_i {
            return Err(EmitError::Mismatch("grid/schedule UFi disagree".into()));
        }
    }

    let (kernel_source, body_count) = if sched.uf_i == 1 {
        emit_kernel_single(ir, sched)?
    } else if compaction {
        emit_kernel_compacted(ir, sched)?
    } else {
        emit_kernel_uncompacted(ir, sched)?
    };

    Ok(EmittedArtifact {
        kernel_source,
        host_source: emit_host(sched, esc, compaction),
        transformer_source: emit_transformer(sched),
        body_count,
        compaction,
        schedule: sched,
    })
}
