#include "koopcar/kernels.hpp"

#include <cmath>

namespace koopcar::kern {
namespace {

void s_cwise_mul(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void s_axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double s_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double s_sum(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

void s_matvec_row(const double* a, std::size_t rows, std::size_t cols,
                  const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = s_dot(a + r * cols, x, cols);
}

void s_matvec_t_accum(const double* a, std::size_t rows, std::size_t cols,
                      const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * cols;
    const double xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] = std::fma(xr, row[c], y[c]);
  }
}

void s_dist2_3d(const double* xs, const double* ys, const double* zs,
                std::size_t n, double qx, double qy, double qz, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    out[i] = std::fma(dx, dx, std::fma(dy, dy, dz * dz));
  }
}

void s_clip_upper(double* v, const double* ub, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = v[i] < ub[i] ? v[i] : ub[i];
}

void s_clip_box(double* v, const double* lo, const double* hi, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double t = v[i] > lo[i] ? v[i] : lo[i];
    v[i] = t < hi[i] ? t : hi[i];
  }
}

double s_inf_norm(const double* a, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::fabs(a[i]);
    if (v > m) m = v;
  }
  return m;
}

double s_inf_norm_diff(const double* a, const double* b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::fabs(a[i] - b[i]);
    if (v > m) m = v;
  }
  return m;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t = {
      "scalar",     s_cwise_mul, s_axpy,       s_dot,      s_sum,
      s_matvec_row, s_matvec_t_accum, s_dist2_3d, s_clip_upper, s_clip_box,
      s_inf_norm,   s_inf_norm_diff,
  };
  return t;
}

}  // namespace koopcar::kern
