// AVX2 variants. Compiled with -mavx2 in its own TU; only reached after a
// runtime cpuid check. Inner accumulation order matches the scalar kernels
// exactly (per output element: ascending inner index, separate mul and add),
// which keeps the two backends bit-identical.
#if defined(__x86_64__)

#include "cav/kernels.hpp"

#include <immintrin.h>

#include <cstring>
#include <vector>

namespace cav::kernels {

namespace {

thread_local std::vector<double> g_scratch;

void v_gemm_nn(double* c, const double* a, const double* b, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * std::size_t(m) * std::size_t(n));
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    double* crow = c + std::size_t(i) * n;
    for (int t = 0; t < k; ++t) {
      const double ait = a[std::size_t(i) * k + t];
      const __m256d va = _mm256_set1_pd(ait);
      const double* brow = b + std::size_t(t) * n;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d vc = _mm256_loadu_pd(crow + j);
        __m256d vb = _mm256_loadu_pd(brow + j);
        vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += ait * brow[j];
    }
  }
}

void v_gemm_acc_tn(double* c, const double* a, const double* b, int m, int k, int n) {
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    double* crow = c + std::size_t(i) * n;
    for (int t = 0; t < k; ++t) {
      const double ati = a[std::size_t(t) * m + i];
      const __m256d va = _mm256_set1_pd(ati);
      const double* brow = b + std::size_t(t) * n;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d vc = _mm256_loadu_pd(crow + j);
        __m256d vb = _mm256_loadu_pd(brow + j);
        vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += ati * brow[j];
    }
  }
}

// b arrives [n x k]; transpose into scratch so the j loop is contiguous.
// Scalar reference runs t innermost per (i, j), and so does this.
void v_gemm_acc_nt(double* c, const double* a, const double* b, int m, int k, int n) {
  g_scratch.resize(std::size_t(k) * n);
  double* bt = g_scratch.data();
  for (int j = 0; j < n; ++j)
    for (int t = 0; t < k; ++t) bt[std::size_t(t) * n + j] = b[std::size_t(j) * k + t];
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    double* crow = c + std::size_t(i) * n;
    const double* arow = a + std::size_t(i) * k;
    for (int t = 0; t < k; ++t) {
      const __m256d va = _mm256_set1_pd(arow[t]);
      const double* btrow = bt + std::size_t(t) * n;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d vc = _mm256_loadu_pd(crow + j);
        __m256d vb = _mm256_loadu_pd(btrow + j);
        vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += arow[t] * btrow[j];
    }
  }
}

void v_add(double* c, const double* a, const double* b, std::size_t len) {
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4)
    _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < len; ++i) c[i] = a[i] + b[i];
}

void v_acc(double* a, const double* b, std::size_t len) {
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4)
    _mm256_storeu_pd(a + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < len; ++i) a[i] += b[i];
}

void v_axpy_acc(double* a, double s, const double* b, std::size_t len) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i);
    va = _mm256_add_pd(va, _mm256_mul_pd(vs, _mm256_loadu_pd(b + i)));
    _mm256_storeu_pd(a + i, va);
  }
  for (; i < len; ++i) a[i] += s * b[i];
}

void v_scale(double* c, const double* a, double s, std::size_t len) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4)
    _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < len; ++i) c[i] = a[i] * s;
}

void v_relu(double* c, const double* a, std::size_t len) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4)
    _mm256_storeu_pd(c + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  for (; i < len; ++i) c[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void v_relu_mask_acc(double* da, const double* dc, const double* x, std::size_t len) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    __m256d vd = _mm256_and_pd(_mm256_loadu_pd(dc + i), mask);
    _mm256_storeu_pd(da + i, _mm256_add_pd(_mm256_loadu_pd(da + i), vd));
  }
  for (; i < len; ++i)
    if (x[i] > 0.0) da[i] += dc[i];
}

}  // namespace

const Ops avx2_ops = {
    v_gemm_nn, v_gemm_acc_nt, v_gemm_acc_tn, v_add,  v_acc,
    v_axpy_acc, v_scale,      v_relu,        v_relu_mask_acc,
};

}  // namespace cav::kernels

#endif  // __x86_64__
