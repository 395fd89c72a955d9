#pragma once

#include <cstddef>

// Data-parallel inner loops used by the lift table, the lifted-state
// propagation and the QP solver. Every kernel has a scalar reference
// implementation and, on x86-64, an AVX2+FMA variant selected at runtime.
// Elementwise kernels are bit-identical across backends (each lane performs
// the same fused operations); reductions (dot, sum, matvec_row) may differ
// in summation order and are equivalence-tested under a relative tolerance.

namespace koopcar::kern {

struct KernelTable {
  const char* name;

  // dst[i] = a[i] * b[i]
  void (*cwise_mul)(double* dst, const double* a, const double* b, std::size_t n);
  // y[i] = fma(alpha, x[i], y[i])
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i a[i]
  double (*sum)(const double* a, std::size_t n);
  // y[r] = dot(A[r,:], x) for row-major A (rows x cols)
  void (*matvec_row)(const double* a, std::size_t rows, std::size_t cols,
                     const double* x, double* y);
  // y[c] += sum_r A[r,c] * x[r] for row-major A (transpose product, accumulating)
  void (*matvec_t_accum)(const double* a, std::size_t rows, std::size_t cols,
                         const double* x, double* y);
  // out[i] = (xs[i]-qx)^2 + (ys[i]-qy)^2 + (zs[i]-qz)^2
  void (*dist2_3d)(const double* xs, const double* ys, const double* zs,
                   std::size_t n, double qx, double qy, double qz, double* out);
  // v[i] = min(v[i], ub[i])
  void (*clip_upper)(double* v, const double* ub, std::size_t n);
  // v[i] = min(max(v[i], lo[i]), hi[i])
  void (*clip_box)(double* v, const double* lo, const double* hi, std::size_t n);
  // max_i |a[i]|
  double (*inf_norm)(const double* a, std::size_t n);
  // max_i |a[i] - b[i]|
  double (*inf_norm_diff)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the AVX2 translation unit is not part of the build.
const KernelTable* avx2_table();

// True when the running CPU supports AVX2 and FMA.
bool avx2_supported();

// Backend picked once per process: AVX2 when supported, scalar otherwise.
// Environment override: KOOPCAR_KERNELS=scalar|avx2.
const KernelTable& active();

inline void cwise_mul(double* dst, const double* a, const double* b, std::size_t n) {
  active().cwise_mul(dst, a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }
inline void matvec_row(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* y) {
  active().matvec_row(a, rows, cols, x, y);
}
inline void matvec_t_accum(const double* a, std::size_t rows, std::size_t cols,
                           const double* x, double* y) {
  active().matvec_t_accum(a, rows, cols, x, y);
}
inline void dist2_3d(const double* xs, const double* ys, const double* zs,
                     std::size_t n, double qx, double qy, double qz, double* out) {
  active().dist2_3d(xs, ys, zs, n, qx, qy, qz, out);
}
inline void clip_upper(double* v, const double* ub, std::size_t n) {
  active().clip_upper(v, ub, n);
}
inline void clip_box(double* v, const double* lo, const double* hi, std::size_t n) {
  active().clip_box(v, lo, hi, n);
}
inline double inf_norm(const double* a, std::size_t n) { return active().inf_norm(a, n); }
inline double inf_norm_diff(const double* a, const double* b, std::size_t n) {
  return active().inf_norm_diff(a, b, n);
}

}  // namespace koopcar::kern
