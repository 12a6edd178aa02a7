#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "htru/kernels.hpp"

using namespace htru;
namespace k = kernels;

namespace {

std::vector<double> rand_vec(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Naive dot-product oracle, deliberately a different formulation.
void naive_mm(int m, int kk, int n, const std::vector<double>& A,
              const std::vector<double>& B, std::vector<double>& C) {
  C.assign((size_t)m * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < kk; ++p) acc += A[(size_t)i * kk + p] * B[(size_t)p * n + j];
      C[(size_t)i * n + j] = acc;
    }
}

}  // namespace

TEST_CASE("matmul variants match the naive oracle") {
  const int m = 17, kk = 29, n = 23;
  auto A = rand_vec((size_t)m * kk, 1);
  auto B = rand_vec((size_t)kk * n, 2);
  std::vector<double> expect, got((size_t)m * n);
  naive_mm(m, kk, n, A, B, expect);

  k::matmul_nn(m, kk, n, A.data(), B.data(), got.data());
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  // B^T layout
  std::vector<double> Bt((size_t)n * kk);
  for (int p = 0; p < kk; ++p)
    for (int j = 0; j < n; ++j) Bt[(size_t)j * kk + p] = B[(size_t)p * n + j];
  k::matmul_nt(m, kk, n, A.data(), Bt.data(), got.data());
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  // A^T layout
  std::vector<double> At((size_t)kk * m);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < kk; ++p) At[(size_t)p * m + i] = A[(size_t)i * kk + p];
  k::matmul_tn(m, kk, n, At.data(), B.data(), got.data());
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("accumulate flag adds on top") {
  const int m = 5, kk = 7, n = 3;
  auto A = rand_vec((size_t)m * kk, 3);
  auto B = rand_vec((size_t)kk * n, 4);
  std::vector<double> once((size_t)m * n), twice((size_t)m * n);
  k::matmul_nn(m, kk, n, A.data(), B.data(), once.data());
  k::matmul_nn(m, kk, n, A.data(), B.data(), twice.data());
  k::matmul_nn(m, kk, n, A.data(), B.data(), twice.data(), true);
  for (size_t i = 0; i < once.size(); ++i)
    CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 5; ++round) {
    std::uniform_int_distribution<int> dim(1, 60);
    const int m = dim(rng), kk = dim(rng), n = dim(rng);
    auto A = rand_vec((size_t)m * kk, 100 + round);
    auto B = rand_vec((size_t)kk * n, 200 + round);
    auto Bt = rand_vec((size_t)n * kk, 300 + round);
    auto At = rand_vec((size_t)kk * m, 400 + round);
    std::vector<double> c1((size_t)m * n), c2((size_t)m * n);

    k::matmul_nn(m, kk, n, A.data(), B.data(), c1.data());
    k::serial::matmul_nn(m, kk, n, A.data(), B.data(), c2.data());
    CHECK(bit_equal(c1, c2));

    k::matmul_nt(m, kk, n, A.data(), Bt.data(), c1.data());
    k::serial::matmul_nt(m, kk, n, A.data(), Bt.data(), c2.data());
    CHECK(bit_equal(c1, c2));

    k::matmul_tn(m, kk, n, At.data(), B.data(), c1.data());
    k::serial::matmul_tn(m, kk, n, At.data(), B.data(), c2.data());
    CHECK(bit_equal(c1, c2));
  }

  const int C = 3, H = 13, W = 21, Ho = 7, Wo = 11;
  auto x = rand_vec((size_t)C * H * W, 7);
  std::vector<double> col1((size_t)C * 9 * Ho * Wo), col2(col1.size());
  k::im2col_s2(x.data(), C, H, W, Ho, Wo, col1.data());
  k::serial::im2col_s2(x.data(), C, H, W, Ho, Wo, col2.data());
  CHECK(bit_equal(col1, col2));

  std::vector<double> dx1(x.size()), dx2(x.size());
  k::col2im_s2(col1.data(), C, H, W, Ho, Wo, dx1.data());
  k::serial::col2im_s2(col2.data(), C, H, W, Ho, Wo, dx2.data());
  CHECK(bit_equal(dx1, dx2));
}

TEST_CASE("im2col and col2im are adjoint") {
  // <im2col(x), y> == <x, col2im(y)> for random x, y.
  const int C = 2, H = 9, W = 14, Ho = 5, Wo = 7;
  auto x = rand_vec((size_t)C * H * W, 11);
  auto y = rand_vec((size_t)C * 9 * Ho * Wo, 12);
  std::vector<double> col(y.size()), back(x.size());
  k::im2col_s2(x.data(), C, H, W, Ho, Wo, col.data());
  k::col2im_s2(y.data(), C, H, W, Ho, Wo, back.data());
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < col.size(); ++i) lhs += col[i] * y[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("softmax rows normalize and keep order") {
  std::vector<double> x = {1.0, 2.0, 3.0, -1e30, 0.0, -1e30};
  k::softmax_rows(2, 3, x.data());
  CHECK(x[0] + x[1] + x[2] == doctest::Approx(1.0));
  CHECK(x[2] > x[1]);
  CHECK(x[1] > x[0]);
  // masked entries underflow to exactly zero
  CHECK(x[3] == 0.0);
  CHECK(x[5] == 0.0);
  CHECK(x[4] == doctest::Approx(1.0));
}

TEST_CASE("layernorm forward/backward against finite differences") {
  const int rows = 3, d = 8;
  auto x = rand_vec((size_t)rows * d, 21);
  auto g = rand_vec(d, 22);
  auto b = rand_vec(d, 23);
  std::vector<double> y((size_t)rows * d), mean(rows), rstd(rows);
  const double eps = 1e-5;
  k::layernorm_fwd(rows, d, x.data(), g.data(), b.data(), y.data(),
                   mean.data(), rstd.data(), eps);

  // scalar objective: weighted sum of outputs
  auto w = rand_vec(y.size(), 24);
  std::vector<double> dx(x.size(), 0.0), dg(d, 0.0), db(d, 0.0);
  k::layernorm_bwd(rows, d, x.data(), g.data(), mean.data(), rstd.data(),
                   w.data(), dx.data(), dg.data(), db.data(), false);

  auto objective = [&](const std::vector<double>& xv, const std::vector<double>& gv,
                       const std::vector<double>& bv) {
    std::vector<double> yy(y.size()), mm(rows), rr(rows);
    k::layernorm_fwd(rows, d, xv.data(), gv.data(), bv.data(), yy.data(),
                     mm.data(), rr.data(), eps);
    double s = 0.0;
    for (size_t i = 0; i < yy.size(); ++i) s += w[i] * yy[i];
    return s;
  };
  const double h = 1e-6;
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const size_t i = rng() % x.size();
    auto xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (objective(xp, g, b) - objective(xm, g, b)) / (2 * h);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (int rep = 0; rep < 5; ++rep) {
    const size_t i = rng() % (size_t)d;
    auto gp = g, gm = g;
    gp[i] += h;
    gm[i] -= h;
    const double fd = (objective(x, gp, b) - objective(x, gm, b)) / (2 * h);
    CHECK(dg[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("adam step math") {
  // Single parameter, one step: update = lr * g/( |g| + eps ) after bias
  // correction cancels.
  std::vector<double> p{1.0}, g{0.5}, m{0.0}, v{0.0};
  k::adam_step(1, p.data(), g.data(), m.data(), v.data(), 1, 0.1, 0.9, 0.999, 1e-8);
  const double mhat = 0.5;           // (0.1*g)/(1-0.9)
  const double vhat = 0.25;          // (0.001*g^2)/(1-0.999)
  const double expect = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(p[0] == doctest::Approx(expect).epsilon(1e-12));
}
