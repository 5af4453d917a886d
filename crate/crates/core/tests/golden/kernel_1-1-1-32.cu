// spmm kernel, schedule 1-1-1-32, single panel pattern
extern "C" __global__ void spmm_u1_k1_w1_t32(
    const float* __restrict__ annz, const int* __restrict__ cols,
    const int* __restrict__ rpp, const int* __restrict__ npp,
    int num_patterns, const float* __restrict__ b, float* __restrict__ c, int n) {
  int g = blockIdx.x;
  int row_panel = g / num_patterns;
  int i = row_panel;
  int tid = threadIdx.x;
  for (int j = tid; j < n; j += 32) {
    float c0_0 = 0.0f;
    int t_nnz = npp[g];
    for (int k = rpp[g]; k < rpp[g + 1]; k += 1) {
      int br0 = cols[k];
      c0_0 += annz[t_nnz + 0] * b[br0 * n + j];
      t_nnz += 1;
    }
    atomicAdd(&c[(i + 0) * n + j], c0_0);
  }
}
