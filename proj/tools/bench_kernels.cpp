// Times the OpenMP kernels against their serial references and checks that
// both produce bit-identical results.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "htru/kernels.hpp"

using namespace htru;
namespace k = kernels;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_vec(size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <typename F>
double time_ms(F&& f, int reps) {
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) f();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main() {
  std::mt19937_64 rng(42);
  std::printf("%-28s %10s %10s %8s %6s\n", "kernel", "omp ms", "serial ms",
              "speedup", "equal");

  {
    const int m = 416, kk = 128, n = 256;
    auto A = random_vec((size_t)m * kk, rng);
    auto B = random_vec((size_t)kk * n, rng);
    std::vector<double> C1((size_t)m * n), C2((size_t)m * n);
    const double t_omp = time_ms([&] { k::matmul_nn(m, kk, n, A.data(), B.data(), C1.data()); }, 20);
    const double t_ser = time_ms([&] { k::serial::matmul_nn(m, kk, n, A.data(), B.data(), C2.data()); }, 20);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "matmul_nn 416x128x256",
                t_omp, t_ser, t_ser / t_omp, bit_equal(C1, C2) ? "yes" : "NO");
  }
  {
    const int m = 416, kk = 128, n = 256;
    auto A = random_vec((size_t)m * kk, rng);
    auto B = random_vec((size_t)n * kk, rng);
    std::vector<double> C1((size_t)m * n), C2((size_t)m * n);
    const double t_omp = time_ms([&] { k::matmul_nt(m, kk, n, A.data(), B.data(), C1.data()); }, 20);
    const double t_ser = time_ms([&] { k::serial::matmul_nt(m, kk, n, A.data(), B.data(), C2.data()); }, 20);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "matmul_nt 416x128x256",
                t_omp, t_ser, t_ser / t_omp, bit_equal(C1, C2) ? "yes" : "NO");
  }
  {
    const int m = 256, kk = 416, n = 128;
    auto A = random_vec((size_t)kk * m, rng);
    auto B = random_vec((size_t)kk * n, rng);
    std::vector<double> C1((size_t)m * n), C2((size_t)m * n);
    const double t_omp = time_ms([&] { k::matmul_tn(m, kk, n, A.data(), B.data(), C1.data()); }, 20);
    const double t_ser = time_ms([&] { k::serial::matmul_tn(m, kk, n, A.data(), B.data(), C2.data()); }, 20);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "matmul_tn 256x416x128",
                t_omp, t_ser, t_ser / t_omp, bit_equal(C1, C2) ? "yes" : "NO");
  }
  {
    const int C = 32, H = 32, W = 128, Ho = 16, Wo = 64;
    auto x = random_vec((size_t)C * H * W, rng);
    std::vector<double> col1((size_t)C * 9 * Ho * Wo), col2(col1.size());
    const double t_omp = time_ms([&] { k::im2col_s2(x.data(), C, H, W, Ho, Wo, col1.data()); }, 50);
    const double t_ser = time_ms([&] { k::serial::im2col_s2(x.data(), C, H, W, Ho, Wo, col2.data()); }, 50);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "im2col_s2 32x32x128", t_omp,
                t_ser, t_ser / t_omp, bit_equal(col1, col2) ? "yes" : "NO");
    std::vector<double> dx1(x.size()), dx2(x.size());
    const double t_omp2 = time_ms([&] { k::col2im_s2(col1.data(), C, H, W, Ho, Wo, dx1.data()); }, 50);
    const double t_ser2 = time_ms([&] { k::serial::col2im_s2(col2.data(), C, H, W, Ho, Wo, dx2.data()); }, 50);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "col2im_s2 32x32x128", t_omp2,
                t_ser2, t_ser2 / t_omp2, bit_equal(dx1, dx2) ? "yes" : "NO");
  }
  {
    const int rows = 512, cols = 53;
    auto x0 = random_vec((size_t)rows * cols, rng);
    auto x1 = x0, x2 = x0;
    const double t_omp = time_ms([&] { x1 = x0; k::softmax_rows(rows, cols, x1.data()); }, 50);
    const double t_ser = time_ms([&] { x2 = x0; k::serial::softmax_rows(rows, cols, x2.data()); }, 50);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "softmax_rows 512x53", t_omp,
                t_ser, t_ser / t_omp, bit_equal(x1, x2) ? "yes" : "NO");
  }
  {
    const int rows = 416, d = 128;
    auto x = random_vec((size_t)rows * d, rng);
    auto gvec = random_vec(d, rng);
    auto b = random_vec(d, rng);
    std::vector<double> y1(x.size()), y2(x.size()), mean(rows), rstd(rows);
    const double t_omp = time_ms([&] {
      k::layernorm_fwd(rows, d, x.data(), gvec.data(), b.data(), y1.data(), mean.data(), rstd.data(), 1e-5);
    }, 50);
    const double t_ser = time_ms([&] {
      k::serial::layernorm_fwd(rows, d, x.data(), gvec.data(), b.data(), y2.data(), mean.data(), rstd.data(), 1e-5);
    }, 50);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "layernorm_fwd 416x128", t_omp,
                t_ser, t_ser / t_omp, bit_equal(y1, y2) ? "yes" : "NO");
  }
  {
    const size_t n = 1u << 20;
    auto p1 = random_vec(n, rng);
    auto p2 = p1;
    auto gr = random_vec(n, rng);
    std::vector<double> m1(n, 0.0), v1(n, 0.0), m2(n, 0.0), v2(n, 0.0);
    const double t_omp = time_ms([&] {
      k::adam_step(n, p1.data(), gr.data(), m1.data(), v1.data(), 1, 1e-3, 0.9, 0.999, 1e-8);
    }, 10);
    const double t_ser = time_ms([&] {
      k::serial::adam_step(n, p2.data(), gr.data(), m2.data(), v2.data(), 1, 1e-3, 0.9, 0.999, 1e-8);
    }, 10);
    std::printf("%-28s %10.3f %10.3f %8.2f %6s\n", "adam_step 1M", t_omp, t_ser,
                t_ser / t_omp, bit_equal(p1, p2) ? "yes" : "NO");
  }
  return 0;
}
