#include <doctest.h>

#include <cmath>
#include <limits>

#include "../support.hpp"
#include "csgd/numkit.hpp"

using namespace csgd;

namespace {

// det(A - lambda I) by Gaussian elimination in long double.
long double char_poly(const Mat& a, long double lambda) {
  const std::size_t n = a.rows();
  std::vector<std::vector<long double>> m(n, std::vector<long double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m[i][j] = a(i, j) - (i == j ? lambda : 0.0L);
  long double det = 1.0L;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(m[r][c]) > std::fabs(m[piv][c])) piv = r;
    if (m[piv][c] == 0.0L) return 0.0L;
    if (piv != c) {
      std::swap(m[piv], m[c]);
      det = -det;
    }
    det *= m[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const long double f = m[r][c] / m[c][c];
      for (std::size_t k = c; k < n; ++k) m[r][k] -= f * m[c][k];
    }
  }
  return det;
}

Mat random_spd(RngStream& rng, std::size_t d) {
  Mat g(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) g(i, j) = rng.normal();
  Mat s = matmul(g.transpose(), g);
  for (std::size_t i = 0; i < d; ++i) s(i, i) += 0.5;
  return s;
}

}  // namespace

TEST_SUITE("numkit") {

TEST_CASE("dot products") {
  CHECK(dot(Vec{1, 0}, Vec{0, 1}) == 0.0);
  CHECK(dot(Vec{1, 2}, Vec{3, 4}) == 11.0);
  CHECK(dot(Vec::unit(4, 2), Vec::unit(4, 2)) == 1.0);
  // Compensation recovers the 1 that naive summation loses.
  CHECK(dot(Vec{1e16, 1.0, -1e16}, Vec{1, 1, 1}) == 1.0);
  CHECK_THROWS_AS(dot(Vec{1, 2}, Vec{1}), Error);
  try {
    dot(Vec{1e200, 1e200}, Vec{1e200, 1e200});
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NumericOverflow);
  }
}

TEST_CASE("matvec") {
  const Vec v{1.5, -2, 3};
  CHECK(matvec(Mat::identity(3), v) == v);
  CHECK(matvec(Mat::diag(Vec{2, 3}), Vec{1, 1}) == Vec{2, 3});
  CHECK(matvec(Mat(3, 3), v) == Vec(3));
  CHECK_THROWS_AS(matvec(Mat(2, 3), Vec{1, 2}), Error);
}

TEST_CASE("cholesky, lu and spd certification") {
  const Mat a = Mat::from_rows({{4, 2, 0.4}, {2, 5, 1}, {0.4, 1, 3}});
  const auto l = cholesky(a);
  REQUIRE(l);
  const Vec b{1, -2, 0.5};
  const Vec x = cholesky_solve(*l, b);
  const Vec r = matvec(a, x) - b;
  CHECK(norm(r) < 1e-14);
  const Vec y = lu_solve(a, b);
  CHECK(norm(y - x) < 1e-14);
  CHECK(certify_spd(a));
  const Mat indefinite = Mat::from_rows({{1, 2}, {2, 1}});
  CHECK_FALSE(cholesky(indefinite));
  CHECK_FALSE(certify_spd(indefinite));
  CHECK_THROWS_AS(lu_solve(Mat::from_rows({{1, 2}, {2, 4}}), Vec{1, 1}), Error);
}

TEST_CASE("extreme eigenpairs: diagonal and identity") {
  const auto e = power_iteration_extreme_eigs(Mat::diag(Vec{1, 2, 3}));
  CHECK(e.lambda_min == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(e.lambda_max == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(std::abs(e.q_max[2]) == doctest::Approx(1.0).epsilon(1e-9));
  const auto i = power_iteration_extreme_eigs(Mat::identity(4));
  CHECK(i.lambda_min == doctest::Approx(1.0));
  CHECK(i.lambda_max == doctest::Approx(1.0));
  CHECK(norm(i.q_max) == doctest::Approx(1.0));
}

TEST_CASE("extreme eigenpairs match characteristic-polynomial roots on random SPD 5x5") {
  RngStream rng(17, 3);
  for (int t = 0; t < 10; ++t) {
    const Mat a = random_spd(rng, 5);
    const auto e = power_iteration_extreme_eigs(a);
    const auto ref = testsupport::jacobi_eigen(testsupport::to_matrix(a));
    const double scale = static_cast<double>(ref.values.back());
    CHECK(std::abs(e.lambda_max - static_cast<double>(ref.values.back())) <= 1e-8 * scale);
    CHECK(std::abs(e.lambda_min - static_cast<double>(ref.values.front())) <= 1e-8 * scale);
    // Both reference roots are roots of det(A - lambda I): bracket a sign change.
    for (long double root : {ref.values.front(), ref.values.back()}) {
      const long double h = 1e-7L * scale;
      CHECK(char_poly(a, root - h) * char_poly(a, root + h) <= 0.0L);
    }
    const Vec aq = matvec(a, e.q_max);
    CHECK(norm(aq - e.lambda_max * e.q_max) <= 1e-8 * scale);
  }
}

TEST_CASE("gaussian sampling") {
  RngStream zero(1, 1);
  CHECK(gaussian(zero, 3, Isotropic{0.0}) == Vec(3));
  CHECK(zero.counter() == RngStream::normal_draws(3));
  RngStream neg(1, 1);
  CHECK_THROWS_AS(gaussian(neg, 3, Isotropic{-1.0}), Error);

  RngStream a(9, 2, 40), b(9, 2, 40);
  CHECK(gaussian(a, 4, Isotropic{2.0}) == gaussian(b, 4, Isotropic{2.0}));

  RngStream rng(11, 5);
  const int n = 100000;
  double s00 = 0, s11 = 0, s01 = 0;
  for (int i = 0; i < n; ++i) {
    const Vec x = gaussian(rng, 2, Vec{1.0, 4.0});
    s00 += x[0] * x[0];
    s11 += x[1] * x[1];
    s01 += x[0] * x[1];
  }
  CHECK(std::abs(s00 / n - 1.0) <= 0.05);
  CHECK(std::abs(s11 / n - 4.0) <= 0.05 * 4.0);
  CHECK(std::abs(s01 / n) <= 0.05);
}

}
