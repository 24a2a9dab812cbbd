#include "cav/kernels.hpp"

#include <cstring>
#include <stdexcept>

namespace cav::kernels {

namespace {

void s_gemm_nn(double* c, const double* a, const double* b, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * std::size_t(m) * std::size_t(n));
  for (int i = 0; i < m; ++i) {
    double* crow = c + std::size_t(i) * n;
    for (int t = 0; t < k; ++t) {
      const double ait = a[std::size_t(i) * k + t];
      const double* brow = b + std::size_t(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += ait * brow[j];
    }
  }
}

void s_gemm_acc_nt(double* c, const double* a, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + std::size_t(j) * k;
      double acc = crow[j];
      for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] = acc;
    }
  }
}

void s_gemm_acc_tn(double* c, const double* a, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + std::size_t(i) * n;
    for (int t = 0; t < k; ++t) {
      const double ati = a[std::size_t(t) * m + i];
      const double* brow = b + std::size_t(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += ati * brow[j];
    }
  }
}

void s_add(double* c, const double* a, const double* b, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) c[i] = a[i] + b[i];
}

void s_acc(double* a, const double* b, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) a[i] += b[i];
}

void s_axpy_acc(double* a, double s, const double* b, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) a[i] += s * b[i];
}

void s_scale(double* c, const double* a, double s, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) c[i] = a[i] * s;
}

void s_relu(double* c, const double* a, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) c[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void s_relu_mask_acc(double* da, const double* dc, const double* x, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i)
    if (x[i] > 0.0) da[i] += dc[i];
}

}  // namespace

const Ops scalar_ops = {
    s_gemm_nn, s_gemm_acc_nt, s_gemm_acc_tn, s_add,  s_acc,
    s_axpy_acc, s_scale,      s_relu,        s_relu_mask_acc,
};

namespace {

bool avx2_supported() {
#if defined(__x86_64__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Ops* pick_default() {
#if defined(__x86_64__)
  if (avx2_supported()) return &avx2_ops;
#endif
  return &scalar_ops;
}

const Ops* g_active = pick_default();

}  // namespace

const Ops& ops() { return *g_active; }

Backend active_backend() {
#if defined(__x86_64__)
  if (g_active == &avx2_ops) return Backend::avx2;
#endif
  return Backend::scalar;
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2: return avx2_supported();
  }
  return false;
}

void force_backend(Backend b) {
  if (!backend_available(b)) throw std::runtime_error("kernel backend not available on this CPU");
  switch (b) {
    case Backend::scalar: g_active = &scalar_ops; break;
#if defined(__x86_64__)
    case Backend::avx2: g_active = &avx2_ops; break;
#else
    case Backend::avx2: break;
#endif
  }
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

}  // namespace cav::kernels
