// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma; only dispatched to
// after a runtime CPU check. Elementwise kernels mirror the scalar reference
// lane for lane (single-rounded fma on both paths), so results are
// bit-identical; reductions use vector accumulators and a fixed horizontal
// sum, so they are tolerance-equivalent only.

#include "koopcar/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace koopcar::kern {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

void v_cwise_mul(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void v_axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double v_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double v_sum(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

void v_matvec_row(const double* a, std::size_t rows, std::size_t cols,
                  const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = v_dot(a + r * cols, x, cols);
}

void v_matvec_t_accum(const double* a, std::size_t rows, std::size_t cols,
                      const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * cols;
    const __m256d vx = _mm256_set1_pd(x[r]);
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      __m256d vy = _mm256_loadu_pd(y + c);
      vy = _mm256_fmadd_pd(vx, _mm256_loadu_pd(row + c), vy);
      _mm256_storeu_pd(y + c, vy);
    }
    for (; c < cols; ++c) y[c] = std::fma(x[r], row[c], y[c]);
  }
}

void v_dist2_3d(const double* xs, const double* ys, const double* zs,
                std::size_t n, double qx, double qy, double qz, double* out) {
  const __m256d vqx = _mm256_set1_pd(qx);
  const __m256d vqy = _mm256_set1_pd(qy);
  const __m256d vqz = _mm256_set1_pd(qz);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vqx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vqy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vqz);
    __m256d d = _mm256_mul_pd(dz, dz);
    d = _mm256_fmadd_pd(dy, dy, d);
    d = _mm256_fmadd_pd(dx, dx, d);
    _mm256_storeu_pd(out + i, d);
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    out[i] = std::fma(dx, dx, std::fma(dy, dy, dz * dz));
  }
}

void v_clip_upper(double* v, const double* ub, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(v + i, _mm256_min_pd(_mm256_loadu_pd(v + i), _mm256_loadu_pd(ub + i)));
  }
  for (; i < n; ++i) v[i] = v[i] < ub[i] ? v[i] : ub[i];
}

void v_clip_box(double* v, const double* lo, const double* hi, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_max_pd(_mm256_loadu_pd(v + i), _mm256_loadu_pd(lo + i));
    _mm256_storeu_pd(v + i, _mm256_min_pd(t, _mm256_loadu_pd(hi + i)));
  }
  for (; i < n; ++i) {
    double t = v[i] > lo[i] ? v[i] : lo[i];
    v[i] = t < hi[i] ? t : hi[i];
  }
}

double v_inf_norm(const double* a, std::size_t n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(signmask, _mm256_loadu_pd(a + i)));
  }
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  lo = _mm_max_pd(lo, hi);
  double m = _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) {
    const double v = std::fabs(a[i]);
    if (v > m) m = v;
  }
  return m;
}

double v_inf_norm_diff(const double* a, const double* b, std::size_t n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(signmask, d));
  }
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  lo = _mm_max_pd(lo, hi);
  double m = _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) {
    const double v = std::fabs(a[i] - b[i]);
    if (v > m) m = v;
  }
  return m;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable t = {
      "avx2",       v_cwise_mul, v_axpy,       v_dot,      v_sum,
      v_matvec_row, v_matvec_t_accum, v_dist2_3d, v_clip_upper, v_clip_box,
      v_inf_norm,   v_inf_norm_diff,
  };
  return &t;
}

}  // namespace koopcar::kern
