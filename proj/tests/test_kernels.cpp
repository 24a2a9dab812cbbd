#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <vector>

#include "cav/kernels.hpp"
#include "cav/rng.hpp"
#include "doctest.h"

using cav::kernels::Backend;
using cav::kernels::backend_available;
using cav::kernels::force_backend;
using cav::kernels::ops;
using cav::num::Rng;

namespace {

std::vector<double> rand_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

void naive_gemm(std::vector<double>& c, const std::vector<double>& a,
                const std::vector<double>& b, int m, int k, int n) {
  c.assign(std::size_t(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int t = 0; t < k; ++t) c[std::size_t(i) * n + j] += a[std::size_t(i) * k + t] * b[std::size_t(t) * n + j];
}

}  // namespace

TEST_CASE("gemm_nn matches naive oracle") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    int m = 1 + rng.uniform_int(9), k = 1 + rng.uniform_int(9), n = 1 + rng.uniform_int(9);
    auto a = rand_vec(rng, std::size_t(m) * k);
    auto b = rand_vec(rng, std::size_t(k) * n);
    std::vector<double> c(std::size_t(m) * n), want;
    ops().gemm_nn(c.data(), a.data(), b.data(), m, k, n);
    naive_gemm(want, a, b, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("accumulating gemms match naive oracle") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    int m = 1 + rng.uniform_int(9), k = 1 + rng.uniform_int(9), n = 1 + rng.uniform_int(9);
    auto a = rand_vec(rng, std::size_t(m) * k);      // [m x k]
    auto bt = rand_vec(rng, std::size_t(n) * k);     // [n x k], logical b^T
    auto at = rand_vec(rng, std::size_t(k) * m);     // [k x m], logical a^T
    auto b = rand_vec(rng, std::size_t(k) * n);      // [k x n]
    auto c0 = rand_vec(rng, std::size_t(m) * n);

    // c += a * bt^T
    auto c = c0;
    ops().gemm_acc_nt(c.data(), a.data(), bt.data(), m, k, n);
    std::vector<double> bT(std::size_t(k) * n), want;
    for (int t = 0; t < k; ++t)
      for (int j = 0; j < n; ++j) bT[std::size_t(t) * n + j] = bt[std::size_t(j) * k + t];
    naive_gemm(want, a, bT, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(c[i] == doctest::Approx(c0[i] + want[i]).epsilon(1e-12));

    // c += at^T * b
    c = c0;
    ops().gemm_acc_tn(c.data(), at.data(), b.data(), m, k, n);
    std::vector<double> aN(std::size_t(m) * k);
    for (int t = 0; t < k; ++t)
      for (int i = 0; i < m; ++i) aN[std::size_t(i) * k + t] = at[std::size_t(t) * m + i];
    naive_gemm(want, aN, b, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(c[i] == doctest::Approx(c0[i] + want[i]).epsilon(1e-12));
  }
}

TEST_CASE("elementwise kernels") {
  std::vector<double> a = {-1.0, 0.0, 2.0, 0.5, -3.0};
  std::vector<double> c(5);
  ops().relu(c.data(), a.data(), 5);
  CHECK(c == std::vector<double>{0.0, 0.0, 2.0, 0.5, 0.0});

  std::vector<double> b = {1, 2, 3, 4, 5};
  ops().add(c.data(), a.data(), b.data(), 5);
  CHECK(c == std::vector<double>{0.0, 2.0, 5.0, 4.5, 2.0});

  ops().scale(c.data(), b.data(), -2.0, 5);
  CHECK(c == std::vector<double>{-2, -4, -6, -8, -10});

  std::vector<double> da(5, 1.0), dc = {10, 10, 10, 10, 10};
  ops().relu_mask_acc(da.data(), dc.data(), a.data(), 5);
  CHECK(da == std::vector<double>{1.0, 1.0, 11.0, 11.0, 1.0});
}

#if defined(__x86_64__)
TEST_CASE("scalar and avx2 backends are bit-identical") {
  if (!backend_available(Backend::avx2)) {
    MESSAGE("avx2 not available on this cpu, skipping");
    return;
  }
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int m = 1 + rng.uniform_int(12), k = 1 + rng.uniform_int(12), n = 1 + rng.uniform_int(12);
    auto a = rand_vec(rng, std::size_t(m) * k);
    auto b = rand_vec(rng, std::size_t(k) * n);
    auto bt = rand_vec(rng, std::size_t(n) * k);
    auto at = rand_vec(rng, std::size_t(k) * m);
    auto seed_c = rand_vec(rng, std::size_t(m) * n);
    std::size_t len = seed_c.size();

    auto run = [&](const cav::kernels::Ops& K) {
      std::vector<std::vector<double>> out;
      std::vector<double> c(len);
      K.gemm_nn(c.data(), a.data(), b.data(), m, k, n);
      out.push_back(c);
      c = seed_c;
      K.gemm_acc_nt(c.data(), a.data(), bt.data(), m, k, n);
      out.push_back(c);
      c = seed_c;
      K.gemm_acc_tn(c.data(), at.data(), b.data(), m, k, n);
      out.push_back(c);
      K.add(c.data(), a.data(), a.data(), std::min(a.size(), len));
      out.push_back(c);
      c = seed_c;
      K.axpy_acc(c.data(), 1.7, b.data(), std::min(b.size(), len));
      out.push_back(c);
      K.relu(c.data(), c.data(), len);
      out.push_back(c);
      return out;
    };

    auto rs = run(cav::kernels::scalar_ops);
    auto rv = run(cav::kernels::avx2_ops);
    REQUIRE(rs.size() == rv.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      REQUIRE(rs[i].size() == rv[i].size());
      CHECK(std::memcmp(rs[i].data(), rv[i].data(), rs[i].size() * sizeof(double)) == 0);
    }
  }
}
#endif

TEST_CASE("force_backend switches dispatch") {
  force_backend(Backend::scalar);
  CHECK(cav::kernels::active_backend() == Backend::scalar);
  if (backend_available(Backend::avx2)) {
    force_backend(Backend::avx2);
    CHECK(cav::kernels::active_backend() == Backend::avx2);
  }
  force_backend(Backend::scalar);
}
