// spmm kernel, schedule 4-2-2-32, one body per panel pattern
extern "C" __global__ void spmm_u4_k2_w2_t32(
    const float* __restrict__ annz, const int* __restrict__ cols,
    const int* __restrict__ rpp, const int* __restrict__ npp,
    const int* __restrict__ pattern_table, int num_patterns,
    const float* __restrict__ b, float* __restrict__ c, int n) {
  int g = blockIdx.x;
  int row_panel = g / num_patterns;
  int pattern = pattern_table[g % num_patterns];
  int i = row_panel * 4;
  int tid = threadIdx.x;
  switch (pattern) {
  case 1: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 1] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 1] * b[br1 * n + j + 32];
        t_nnz += 2;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
    }
  } break;
  case 2: {
    for (int j = tid; j < n; j += 64) {
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c1_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c1_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c1_0 += annz[t_nnz + 1] * b[br1 * n + j];
        c1_1 += annz[t_nnz + 1] * b[br1 * n + j + 32];
        t_nnz += 2;
      }
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
    }
  } break;
  case 3: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c1_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c1_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 2] * b[br1 * n + j];
        c1_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 2] * b[br1 * n + j + 32];
        c1_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        t_nnz += 4;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
    }
  } break;
  case 4: {
    for (int j = tid; j < n; j += 64) {
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c2_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c2_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c2_0 += annz[t_nnz + 1] * b[br1 * n + j];
        c2_1 += annz[t_nnz + 1] * b[br1 * n + j + 32];
        t_nnz += 2;
      }
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
    }
  } break;
  case 5: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c2_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c2_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 2] * b[br1 * n + j];
        c2_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 2] * b[br1 * n + j + 32];
        c2_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        t_nnz += 4;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
    }
  } break;
  case 6: {
    for (int j = tid; j < n; j += 64) {
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c1_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c2_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c1_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c2_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c1_0 += annz[t_nnz + 2] * b[br1 * n + j];
        c2_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c1_1 += annz[t_nnz + 2] * b[br1 * n + j + 32];
        c2_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        t_nnz += 4;
      }
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
    }
  } break;
  case 7: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c1_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c2_0 += annz[t_nnz + 2] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c1_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c2_1 += annz[t_nnz + 2] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c1_0 += annz[t_nnz + 4] * b[br1 * n + j];
        c2_0 += annz[t_nnz + 5] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        c1_1 += annz[t_nnz + 4] * b[br1 * n + j + 32];
        c2_1 += annz[t_nnz + 5] * b[br1 * n + j + 32];
        t_nnz += 6;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
    }
  } break;
  case 8: {
    for (int j = tid; j < n; j += 64) {
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c3_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c3_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c3_0 += annz[t_nnz + 1] * b[br1 * n + j];
        c3_1 += annz[t_nnz + 1] * b[br1 * n + j + 32];
        t_nnz += 2;
      }
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  case 9: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c3_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c3_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 2] * b[br1 * n + j];
        c3_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 2] * b[br1 * n + j + 32];
        c3_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        t_nnz += 4;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  case 10: {
    for (int j = tid; j < n; j += 64) {
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c1_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c3_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c1_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c3_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c1_0 += annz[t_nnz + 2] * b[br1 * n + j];
        c3_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c1_1 += annz[t_nnz + 2] * b[br1 * n + j + 32];
        c3_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        t_nnz += 4;
      }
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  case 11: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c1_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c3_0 += annz[t_nnz + 2] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c1_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c3_1 += annz[t_nnz + 2] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c1_0 += annz[t_nnz + 4] * b[br1 * n + j];
        c3_0 += annz[t_nnz + 5] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        c1_1 += annz[t_nnz + 4] * b[br1 * n + j + 32];
        c3_1 += annz[t_nnz + 5] * b[br1 * n + j + 32];
        t_nnz += 6;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  case 12: {
    for (int j = tid; j < n; j += 64) {
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c2_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c3_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c2_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c3_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c2_0 += annz[t_nnz + 2] * b[br1 * n + j];
        c3_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c2_1 += annz[t_nnz + 2] * b[br1 * n + j + 32];
        c3_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        t_nnz += 4;
      }
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  case 13: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c2_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c3_0 += annz[t_nnz + 2] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c2_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c3_1 += annz[t_nnz + 2] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c2_0 += annz[t_nnz + 4] * b[br1 * n + j];
        c3_0 += annz[t_nnz + 5] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        c2_1 += annz[t_nnz + 4] * b[br1 * n + j + 32];
        c3_1 += annz[t_nnz + 5] * b[br1 * n + j + 32];
        t_nnz += 6;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  case 14: {
    for (int j = tid; j < n; j += 64) {
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c1_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c2_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c3_0 += annz[t_nnz + 2] * b[br0 * n + j];
        c1_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c2_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c3_1 += annz[t_nnz + 2] * b[br0 * n + j + 32];
        c1_0 += annz[t_nnz + 3] * b[br1 * n + j];
        c2_0 += annz[t_nnz + 4] * b[br1 * n + j];
        c3_0 += annz[t_nnz + 5] * b[br1 * n + j];
        c1_1 += annz[t_nnz + 3] * b[br1 * n + j + 32];
        c2_1 += annz[t_nnz + 4] * b[br1 * n + j + 32];
        c3_1 += annz[t_nnz + 5] * b[br1 * n + j + 32];
        t_nnz += 6;
      }
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  case 15: {
    for (int j = tid; j < n; j += 64) {
      float c0_0 = 0.0f;
      float c0_1 = 0.0f;
      float c1_0 = 0.0f;
      float c1_1 = 0.0f;
      float c2_0 = 0.0f;
      float c2_1 = 0.0f;
      float c3_0 = 0.0f;
      float c3_1 = 0.0f;
      int t_nnz = npp[g];
      for (int k = rpp[g]; k < rpp[g + 1]; k += 2) {
        int br0 = cols[k];
        int br1 = cols[k + 1];
        c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
        c1_0 += annz[t_nnz + 1] * b[br0 * n + j];
        c2_0 += annz[t_nnz + 2] * b[br0 * n + j];
        c3_0 += annz[t_nnz + 3] * b[br0 * n + j];
        c0_1 += annz[t_nnz + 0] * b[br0 * n + j + 32];
        c1_1 += annz[t_nnz + 1] * b[br0 * n + j + 32];
        c2_1 += annz[t_nnz + 2] * b[br0 * n + j + 32];
        c3_1 += annz[t_nnz + 3] * b[br0 * n + j + 32];
        c0_0 += annz[t_nnz + 4] * b[br1 * n + j];
        c1_0 += annz[t_nnz + 5] * b[br1 * n + j];
        c2_0 += annz[t_nnz + 6] * b[br1 * n + j];
        c3_0 += annz[t_nnz + 7] * b[br1 * n + j];
        c0_1 += annz[t_nnz + 4] * b[br1 * n + j + 32];
        c1_1 += annz[t_nnz + 5] * b[br1 * n + j + 32];
        c2_1 += annz[t_nnz + 6] * b[br1 * n + j + 32];
        c3_1 += annz[t_nnz + 7] * b[br1 * n + j + 32];
        t_nnz += 8;
      }
      atomicAdd(&c[(i + 0) * n + j], c0_0);
      atomicAdd(&c[(i + 0) * n + j + 32], c0_1);
      atomicAdd(&c[(i + 1) * n + j], c1_0);
      atomicAdd(&c[(i + 1) * n + j + 32], c1_1);
      atomicAdd(&c[(i + 2) * n + j], c2_0);
      atomicAdd(&c[(i + 2) * n + j + 32], c2_1);
      atomicAdd(&c[(i + 3) * n + j], c3_0);
      atomicAdd(&c[(i + 3) * n + j + 32], c3_1);
    }
  } break;
  }
}
