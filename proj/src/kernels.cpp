#include "htru/kernels.hpp"

#include <algorithm>
#include <vector>
#include <cmath>
#include <cstring>

namespace htru::kernels {

// ---------------------------------------------------------------- matmul

#define HTRU_MATMUL_NN_BODY(pragma)                                      \
  if (!accumulate) std::memset(C, 0, sizeof(double) * (size_t)m * n);    \
  pragma                                                                 \
  for (int i = 0; i < m; ++i) {                                          \
    const double* a = A + (size_t)i * k;                                 \
    double* c = C + (size_t)i * n;                                       \
    for (int p = 0; p < k; ++p) {                                        \
      const double av = a[p];                                            \
      const double* b = B + (size_t)p * n;                               \
      for (int j = 0; j < n; ++j) c[j] += av * b[j];                     \
    }                                                                    \
  }

void matmul_nn(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate) {
  HTRU_MATMUL_NN_BODY(_Pragma("omp parallel for schedule(static)"))
}

void serial::matmul_nn(int m, int k, int n, const double* A, const double* B,
                       double* C, bool accumulate) {
  HTRU_MATMUL_NN_BODY()
}

// Transposing B and running the broadcast-accumulate form performs the same
// additions in the same p-order as the dot-product reference, so results
// stay bit-identical while the inner loop vectorizes.
void matmul_nt(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate) {
  std::vector<double> bt(static_cast<size_t>(k) * n);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p) {
    double* row = bt.data() + (size_t)p * n;
    for (int j = 0; j < n; ++j) row[j] = B[(size_t)j * k + p];
  }
  matmul_nn(m, k, n, A, bt.data(), C, accumulate);
}

void serial::matmul_nt(int m, int k, int n, const double* A, const double* B,
                       double* C, bool accumulate) {
  std::vector<double> bt(static_cast<size_t>(k) * n);
  for (int p = 0; p < k; ++p) {
    double* row = bt.data() + (size_t)p * n;
    for (int j = 0; j < n; ++j) row[j] = B[(size_t)j * k + p];
  }
  serial::matmul_nn(m, k, n, A, bt.data(), C, accumulate);
}

#define HTRU_MATMUL_TN_BODY(pragma)                                      \
  pragma                                                                 \
  for (int i = 0; i < m; ++i) {                                          \
    double* c = C + (size_t)i * n;                                       \
    if (!accumulate) std::memset(c, 0, sizeof(double) * (size_t)n);      \
    for (int p = 0; p < k; ++p) {                                        \
      const double av = A[(size_t)p * m + i];                            \
      const double* b = B + (size_t)p * n;                               \
      for (int j = 0; j < n; ++j) c[j] += av * b[j];                     \
    }                                                                    \
  }

void matmul_tn(int m, int k, int n, const double* A, const double* B,
               double* C, bool accumulate) {
  HTRU_MATMUL_TN_BODY(_Pragma("omp parallel for schedule(static)"))
}

void serial::matmul_tn(int m, int k, int n, const double* A, const double* B,
                       double* C, bool accumulate) {
  HTRU_MATMUL_TN_BODY()
}

// ------------------------------------------------------------ elementwise

void add_inplace(size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale_inplace(size_t n, double s, double* x) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) x[i] *= s;
}

void relu_inplace(size_t n, double* x) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_from_output(size_t n, const double* act, const double* dpost,
                          double* dpre) {
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) dpre[i] = act[i] > 0.0 ? dpost[i] : 0.0;
}

void add_bias_rows(int rows, int cols, double* x, const double* b) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double* p = x + (size_t)r * cols;
    for (int c = 0; c < cols; ++c) p[c] += b[c];
  }
}

void add_bias_per_row(int rows, int cols, double* x, const double* b) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double* p = x + (size_t)r * cols;
    const double v = b[r];
    for (int c = 0; c < cols; ++c) p[c] += v;
  }
}

void mask_cols(int rows, int cols, double* x, const double* mask) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double* p = x + (size_t)r * cols;
    for (int c = 0; c < cols; ++c) p[c] *= mask[c];
  }
}

void mask_rows(int rows, int cols, double* x, const double* mask) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double v = mask[r];
    double* p = x + (size_t)r * cols;
    for (int c = 0; c < cols; ++c) p[c] *= v;
  }
}

void col_sums_accum(int rows, int cols, const double* x, double* out) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) acc += x[(size_t)r * cols + c];
    out[c] += acc;
  }
}

void row_sums_accum(int rows, int cols, const double* x, double* out) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* p = x + (size_t)r * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += p[c];
    out[r] += acc;
  }
}

// ---------------------------------------------------------------- softmax

#define HTRU_SOFTMAX_BODY(pragma)                                        \
  pragma                                                                 \
  for (int r = 0; r < rows; ++r) {                                       \
    double* p = x + (size_t)r * cols;                                    \
    double mx = p[0];                                                    \
    for (int c = 1; c < cols; ++c) mx = std::max(mx, p[c]);              \
    double sum = 0.0;                                                    \
    for (int c = 0; c < cols; ++c) {                                     \
      p[c] = std::exp(p[c] - mx);                                        \
      sum += p[c];                                                       \
    }                                                                    \
    const double inv = 1.0 / sum;                                        \
    for (int c = 0; c < cols; ++c) p[c] *= inv;                          \
  }

void softmax_rows(int rows, int cols, double* x) {
  HTRU_SOFTMAX_BODY(_Pragma("omp parallel for schedule(static)"))
}

void serial::softmax_rows(int rows, int cols, double* x) {
  HTRU_SOFTMAX_BODY()
}

// ----------------------------------------------------------- convolution

// Output position (oh, ow) of channel c pulls input (2*oh + kh - 1,
// 2*ow + kw - 1); out-of-range taps contribute zero.
#define HTRU_IM2COL_BODY(pragma)                                         \
  pragma                                                                 \
  for (int c = 0; c < C; ++c) {                                          \
    for (int kh = 0; kh < 3; ++kh) {                                     \
      for (int kw = 0; kw < 3; ++kw) {                                   \
        double* dst = col + ((size_t)(c * 9 + kh * 3 + kw)) * Ho * Wo;   \
        const double* src = x + (size_t)c * H * W;                       \
        for (int oh = 0; oh < Ho; ++oh) {                                \
          const int ih = 2 * oh + kh - 1;                                \
          double* drow = dst + (size_t)oh * Wo;                          \
          if (ih < 0 || ih >= H) {                                       \
            std::memset(drow, 0, sizeof(double) * (size_t)Wo);           \
            continue;                                                    \
          }                                                              \
          const double* srow = src + (size_t)ih * W;                     \
          for (int ow = 0; ow < Wo; ++ow) {                              \
            const int iw = 2 * ow + kw - 1;                              \
            drow[ow] = (iw < 0 || iw >= W) ? 0.0 : srow[iw];             \
          }                                                              \
        }                                                                \
      }                                                                  \
    }                                                                    \
  }

void im2col_s2(const double* x, int C, int H, int W, int Ho, int Wo,
               double* col) {
  HTRU_IM2COL_BODY(_Pragma("omp parallel for schedule(static)"))
}

void serial::im2col_s2(const double* x, int C, int H, int W, int Ho, int Wo,
                       double* col) {
  HTRU_IM2COL_BODY()
}

// Gather form: each input pixel sums the (kh, kw) taps that cover it, so
// every dx element has one owner and a fixed 9-term order.
#define HTRU_COL2IM_BODY(pragma)                                         \
  pragma                                                                 \
  for (int c = 0; c < C; ++c) {                                          \
    double* dst = dx + (size_t)c * H * W;                                \
    for (int ih = 0; ih < H; ++ih) {                                     \
      for (int iw = 0; iw < W; ++iw) {                                   \
        double acc = 0.0;                                                \
        for (int kh = 0; kh < 3; ++kh) {                                 \
          const int oh2 = ih + 1 - kh;                                   \
          if (oh2 < 0 || (oh2 & 1) != 0) continue;                       \
          const int oh = oh2 >> 1;                                       \
          if (oh >= Ho) continue;                                        \
          for (int kw = 0; kw < 3; ++kw) {                               \
            const int ow2 = iw + 1 - kw;                                 \
            if (ow2 < 0 || (ow2 & 1) != 0) continue;                     \
            const int ow = ow2 >> 1;                                     \
            if (ow >= Wo) continue;                                      \
            acc += dcol[((size_t)(c * 9 + kh * 3 + kw)) * Ho * Wo +      \
                        (size_t)oh * Wo + ow];                           \
          }                                                              \
        }                                                                \
        dst[(size_t)ih * W + iw] = acc;                                  \
      }                                                                  \
    }                                                                    \
  }

void col2im_s2(const double* dcol, int C, int H, int W, int Ho, int Wo,
               double* dx) {
  HTRU_COL2IM_BODY(_Pragma("omp parallel for schedule(static)"))
}

void serial::col2im_s2(const double* dcol, int C, int H, int W, int Ho,
                       int Wo, double* dx) {
  HTRU_COL2IM_BODY()
}

// ------------------------------------------------------------- layernorm

#define HTRU_LN_FWD_BODY(pragma)                                         \
  pragma                                                                 \
  for (int r = 0; r < rows; ++r) {                                       \
    const double* xp = x + (size_t)r * d;                                \
    double* yp = y + (size_t)r * d;                                      \
    double mu = 0.0;                                                     \
    for (int i = 0; i < d; ++i) mu += xp[i];                             \
    mu /= d;                                                             \
    double var = 0.0;                                                    \
    for (int i = 0; i < d; ++i) {                                        \
      const double t = xp[i] - mu;                                       \
      var += t * t;                                                      \
    }                                                                    \
    var /= d;                                                            \
    const double rs = 1.0 / std::sqrt(var + eps);                        \
    mean[r] = mu;                                                        \
    rstd[r] = rs;                                                        \
    for (int i = 0; i < d; ++i) yp[i] = g[i] * (xp[i] - mu) * rs + b[i]; \
  }

void layernorm_fwd(int rows, int d, const double* x, const double* g,
                   const double* b, double* y, double* mean, double* rstd,
                   double eps) {
  HTRU_LN_FWD_BODY(_Pragma("omp parallel for schedule(static)"))
}

void serial::layernorm_fwd(int rows, int d, const double* x, const double* g,
                           const double* b, double* y, double* mean,
                           double* rstd, double eps) {
  HTRU_LN_FWD_BODY()
}

void layernorm_bwd(int rows, int d, const double* x, const double* g,
                   const double* mean, const double* rstd, const double* dy,
                   double* dx, double* dg, double* db, bool accumulate_dx) {
  // dg/db are reductions over rows; keep them serial in row order so the
  // result does not depend on the thread count.
  for (int r = 0; r < rows; ++r) {
    const double* xp = x + (size_t)r * d;
    const double* dyp = dy + (size_t)r * d;
    const double mu = mean[r];
    const double rs = rstd[r];
    for (int i = 0; i < d; ++i) {
      dg[i] += dyp[i] * (xp[i] - mu) * rs;
      db[i] += dyp[i];
    }
  }
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* xp = x + (size_t)r * d;
    const double* dyp = dy + (size_t)r * d;
    double* dxp = dx + (size_t)r * d;
    const double mu = mean[r];
    const double rs = rstd[r];
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < d; ++i) {
      const double gdy = g[i] * dyp[i];
      s1 += gdy;
      s2 += gdy * (xp[i] - mu) * rs;
    }
    s1 /= d;
    s2 /= d;
    for (int i = 0; i < d; ++i) {
      const double xhat = (xp[i] - mu) * rs;
      const double v = (g[i] * dyp[i] - s1 - xhat * s2) * rs;
      dxp[i] = accumulate_dx ? dxp[i] + v : v;
    }
  }
}

// ------------------------------------------------------------------ adam

#define HTRU_ADAM_BODY(pragma)                                           \
  const double bc1 = 1.0 - std::pow(beta1, (double)t);                   \
  const double bc2 = 1.0 - std::pow(beta2, (double)t);                   \
  pragma                                                                 \
  for (size_t i = 0; i < n; ++i) {                                       \
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];                          \
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];                   \
    const double mhat = m[i] / bc1;                                      \
    const double vhat = v[i] / bc2;                                      \
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);                         \
  }

void adam_step(size_t n, double* p, const double* g, double* m, double* v,
               int64_t t, double lr, double beta1, double beta2, double eps) {
  HTRU_ADAM_BODY(_Pragma("omp parallel for schedule(static)"))
}

void serial::adam_step(size_t n, double* p, const double* g, double* m,
                       double* v, int64_t t, double lr, double beta1,
                       double beta2, double eps) {
  HTRU_ADAM_BODY()
}

}  // namespace htru::kernels
