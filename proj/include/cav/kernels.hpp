#pragma once
#include <cstddef>

// Dense double-precision inner loops used by the tape. Scalar reference
// kernels plus an AVX2 variant selected at runtime; both accumulate in the
// same order (mul then add, ascending inner index), so results are
// bit-identical across backends.
namespace cav::kernels {

struct Ops {
  // c[m x n] = a[m x k] * b[k x n]
  void (*gemm_nn)(double* c, const double* a, const double* b, int m, int k, int n);
  // c[m x n] += a[m x k] * b^T, b stored [n x k]
  void (*gemm_acc_nt)(double* c, const double* a, const double* b, int m, int k, int n);
  // c[m x n] += a^T * b, a stored [k x m], b stored [k x n]
  void (*gemm_acc_tn)(double* c, const double* a, const double* b, int m, int k, int n);
  void (*add)(double* c, const double* a, const double* b, std::size_t len);
  void (*acc)(double* a, const double* b, std::size_t len);             // a += b
  void (*axpy_acc)(double* a, double s, const double* b, std::size_t len); // a += s*b
  void (*scale)(double* c, const double* a, double s, std::size_t len);
  void (*relu)(double* c, const double* a, std::size_t len);
  void (*relu_mask_acc)(double* da, const double* dc, const double* x, std::size_t len);
};

enum class Backend { scalar, avx2 };

const Ops& ops();
Backend active_backend();
bool backend_available(Backend b);
void force_backend(Backend b);  // test hook; throws if unavailable
const char* backend_name(Backend b);

extern const Ops scalar_ops;
#if defined(__x86_64__)
extern const Ops avx2_ops;
#endif

}  // namespace cav::kernels
