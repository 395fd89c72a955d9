#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "koopcar/kernels.hpp"
#include "koopcar/rng.hpp"

using namespace koopcar;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 10.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

const std::vector<std::size_t> kSizes = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 100, 1003};

}  // namespace

TEST_CASE("scalar kernel sanity") {
  const kern::KernelTable& t = kern::scalar_table();
  const double a[4] = {1, 2, 3, 4};
  const double b[4] = {10, 20, 30, 40};
  CHECK(t.dot(a, b, 4) == doctest::Approx(300.0));
  CHECK(t.sum(a, 4) == doctest::Approx(10.0));
  CHECK(t.inf_norm(b, 4) == 40.0);
  CHECK(t.inf_norm_diff(a, b, 4) == 36.0);

  double dst[4];
  t.cwise_mul(dst, a, b, 4);
  CHECK(dst[2] == 90.0);

  double y[4] = {1, 1, 1, 1};
  t.axpy(2.0, a, y, 4);
  CHECK(y[3] == 9.0);

  // 2x3 row-major matrix
  const double m[6] = {1, 2, 3, 4, 5, 6};
  const double x3[3] = {1, 1, 1};
  double out2[2];
  t.matvec_row(m, 2, 3, x3, out2);
  CHECK(out2[0] == 6.0);
  CHECK(out2[1] == 15.0);

  const double x2[2] = {1, 2};
  double acc3[3] = {0, 0, 0};
  t.matvec_t_accum(m, 2, 3, x2, acc3);
  CHECK(acc3[0] == 9.0);   // 1*1 + 4*2
  CHECK(acc3[2] == 15.0);  // 3*1 + 6*2

  double xs[2] = {1, 0}, ys[2] = {0, 2}, zs[2] = {0, 0};
  double d2[2];
  t.dist2_3d(xs, ys, zs, 2, 0, 0, 0, d2);
  CHECK(d2[0] == 1.0);
  CHECK(d2[1] == 4.0);

  double v[3] = {5, -5, 0.5};
  const double lo[3] = {-1, -1, -1}, hi[3] = {1, 1, 1};
  t.clip_box(v, lo, hi, 3);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == -1.0);
  CHECK(v[2] == 0.5);
}

TEST_CASE("avx2 variants match the scalar reference") {
  const kern::KernelTable* v = kern::avx2_table();
  if (v == nullptr || !kern::avx2_supported()) {
    MESSAGE("AVX2 unavailable; dispatch falls back to scalar");
    CHECK(&kern::active() == &kern::scalar_table());
    return;
  }
  const kern::KernelTable& s = kern::scalar_table();
  Rng rng(42);

  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);

    // Elementwise kernels: bit-exact across backends.
    {
      std::vector<double> r1(n), r2(n);
      s.cwise_mul(r1.data(), a.data(), b.data(), n);
      v->cwise_mul(r2.data(), a.data(), b.data(), n);
      CHECK(r1 == r2);
    }
    {
      std::vector<double> y1 = b, y2 = b;
      s.axpy(1.7, a.data(), y1.data(), n);
      v->axpy(1.7, a.data(), y2.data(), n);
      CHECK(y1 == y2);
    }
    {
      std::vector<double> v1 = a, v2 = a;
      s.clip_upper(v1.data(), b.data(), n);
      v->clip_upper(v2.data(), b.data(), n);
      CHECK(v1 == v2);
      std::vector<double> lo(n, -3.0), hi(n, 3.0);
      v1 = a;
      v2 = a;
      s.clip_box(v1.data(), lo.data(), hi.data(), n);
      v->clip_box(v2.data(), lo.data(), hi.data(), n);
      CHECK(v1 == v2);
    }
    {
      const auto zs = random_vec(rng, n);
      std::vector<double> d1(n), d2(n);
      s.dist2_3d(a.data(), b.data(), zs.data(), n, 0.3, -1.2, 2.5, d1.data());
      v->dist2_3d(a.data(), b.data(), zs.data(), n, 0.3, -1.2, 2.5, d2.data());
      CHECK(d1 == d2);
    }
    CHECK(s.inf_norm(a.data(), n) == v->inf_norm(a.data(), n));
    CHECK(s.inf_norm_diff(a.data(), b.data(), n) == v->inf_norm_diff(a.data(), b.data(), n));

    // Reductions: summation order differs, equivalence within tolerance.
    {
      const double d1 = s.dot(a.data(), b.data(), n);
      const double d2 = v->dot(a.data(), b.data(), n);
      CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
      const double s1 = s.sum(a.data(), n);
      const double s2 = v->sum(a.data(), n);
      CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
    }
  }

  // matvec equivalence on a rectangular matrix.
  for (std::size_t rows : {1u, 3u, 17u}) {
    for (std::size_t cols : {1u, 4u, 153u}) {
      const auto m = random_vec(rng, rows * cols);
      const auto x = random_vec(rng, cols);
      std::vector<double> y1(rows), y2(rows);
      s.matvec_row(m.data(), rows, cols, x.data(), y1.data());
      v->matvec_row(m.data(), rows, cols, x.data(), y2.data());
      for (std::size_t i = 0; i < rows; ++i) {
        CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
      }

      const auto xr = random_vec(rng, rows);
      std::vector<double> acc1(cols, 0.5), acc2(cols, 0.5);
      s.matvec_t_accum(m.data(), rows, cols, xr.data(), acc1.data());
      v->matvec_t_accum(m.data(), rows, cols, xr.data(), acc2.data());
      CHECK(acc1 == acc2);  // same per-element fma order
    }
  }
}

TEST_CASE("dispatch picks a usable backend") {
  const kern::KernelTable& t = kern::active();
  CHECK((&t == &kern::scalar_table() || &t == kern::avx2_table()));
  if (kern::avx2_supported()) CHECK(&t == kern::avx2_table());
}
