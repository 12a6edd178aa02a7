#pragma once

#include <cstddef>
#include <cstdint>

// Compute kernels used by the model, training and attack code.
//
// Every kernel assigns each output element to exactly one thread and keeps a
// fixed serial accumulation order inside that element, so results are
// bit-identical for any OMP thread count and identical to the serial
// reference in kernels::serial (which is the same code without threading).
// Weight matrices are [out x in] row-major; a row holds one output unit.

namespace htru::kernels {

// C[m x n] = A[m x k] * B[k x n]          (+= when accumulate)
void matmul_nn(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate = false);
// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate = false);
// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate = false);

void add_inplace(size_t n, const double* x, double* y);  // y += x
void scale_inplace(size_t n, double s, double* x);
void relu_inplace(size_t n, double* x);
// dpre[i] = dpost[i] * (act[i] > 0); exact for post-ReLU (optionally masked)
// activations since a zero output never carries gradient.
void relu_bwd_from_output(size_t n, const double* act, const double* dpost,
                          double* dpre);

void add_bias_rows(int rows, int cols, double* x, const double* b);  // x[r,:] += b
void add_bias_per_row(int rows, int cols, double* x, const double* b);  // x[r,:] += b[r]
void mask_cols(int rows, int cols, double* x, const double* mask);  // x[r,c] *= mask[c]
void mask_rows(int rows, int cols, double* x, const double* mask);  // x[r,:] *= mask[r]
void col_sums_accum(int rows, int cols, const double* x, double* out);  // out[c] += sum_r
void row_sums_accum(int rows, int cols, const double* x, double* out);  // out[r] += sum_c

// In-place row softmax with max subtraction.
void softmax_rows(int rows, int cols, double* x);

// 3x3 / stride-2 / pad-1 convolution lowering. x is [C x H x W];
// col is [(C*9) x (Ho*Wo)] with Ho = ceil(H/2), Wo = ceil(W/2).
void im2col_s2(const double* x, int C, int H, int W, int Ho, int Wo,
               double* col);
// Gather-form adjoint of im2col_s2: dx[C x H x W] from dcol.
void col2im_s2(const double* dcol, int C, int H, int W, int Ho, int Wo,
               double* dx);

// y = g * (x - mean) / sqrt(var + eps) + b, per row of d columns.
// mean/rstd are per-row caches for the backward pass.
void layernorm_fwd(int rows, int d, const double* x, const double* g,
                   const double* b, double* y, double* mean, double* rstd,
                   double eps);
// dx (+)= backward of the above; dg/db are accumulated.
void layernorm_bwd(int rows, int d, const double* x, const double* g,
                   const double* mean, const double* rstd, const double* dy,
                   double* dx, double* dg, double* db, bool accumulate_dx);

// One Adam step over n parameters; t is the 1-based step index.
void adam_step(size_t n, double* p, const double* g, double* m, double* v,
               int64_t t, double lr, double beta1, double beta2, double eps);

namespace serial {
void matmul_nn(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate = false);
void matmul_nt(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate = false);
void matmul_tn(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate = false);
void softmax_rows(int rows, int cols, double* x);
void im2col_s2(const double* x, int C, int H, int W, int Ho, int Wo,
               double* col);
void col2im_s2(const double* dcol, int C, int H, int W, int Ho, int Wo,
               double* dx);
void layernorm_fwd(int rows, int d, const double* x, const double* g,
                   const double* b, double* y, double* mean, double* rstd,
                   double eps);
void adam_step(size_t n, double* p, const double* g, double* m, double* v,
               int64_t t, double lr, double beta1, double beta2, double eps);
}  // namespace serial

}  // namespace htru::kernels
