#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "csgd/error.hpp"
#include "csgd/rng.hpp"

namespace csgd {

// Dense vector of doubles with a fixed length.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : v_(n, fill) {}
  Vec(std::initializer_list<double> xs) : v_(xs) {}
  explicit Vec(std::vector<double> xs) : v_(std::move(xs)) {}

  static Vec unit(std::size_t n, std::size_t i);

  std::size_t size() const noexcept { return v_.size(); }
  bool empty() const noexcept { return v_.empty(); }

  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  double* data() noexcept { return v_.data(); }
  const double* data() const noexcept { return v_.data(); }
  auto begin() noexcept { return v_.begin(); }
  auto end() noexcept { return v_.end(); }
  auto begin() const noexcept { return v_.begin(); }
  auto end() const noexcept { return v_.end(); }

  std::span<double> span() noexcept { return v_; }
  std::span<const double> span() const noexcept { return v_; }
  const std::vector<double>& values() const noexcept { return v_; }

  Vec& operator+=(const Vec& o);
  Vec& operator-=(const Vec& o);
  Vec& operator*=(double s);

  bool operator==(const Vec&) const = default;

 private:
  std::vector<double> v_;
};

Vec operator+(Vec a, const Vec& b);
Vec operator-(Vec a, const Vec& b);
Vec operator*(double s, Vec a);

// Neumaier-compensated inner product. Throws NumericOverflow on a non-finite
// result and DimensionMismatch on unequal lengths.
double dot(std::span<const double> a, std::span<const double> b);
inline double dot(const Vec& a, const Vec& b) { return dot(a.span(), b.span()); }

double norm_sq(const Vec& a);
double norm(const Vec& a);
double dist_sq(const Vec& a, const Vec& b);
void axpy(double alpha, const Vec& x, Vec& y);
bool all_finite(std::span<const double> xs) noexcept;

// Row-major dense matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  static Mat identity(std::size_t n);
  static Mat diag(const Vec& d);
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {a_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {a_.data() + i * cols_, cols_}; }

  const std::vector<double>& values() const noexcept { return a_; }

  Mat transpose() const;
  bool is_symmetric(double tol = 0.0) const;

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> a_;
};

Vec matvec(const Mat& m, const Vec& v);
Mat matmul(const Mat& a, const Mat& b);
Mat operator+(const Mat& a, const Mat& b);
Mat operator*(double s, const Mat& a);

// Lower-triangular Cholesky factor, or nullopt when the matrix is not
// numerically positive definite.
std::optional<Mat> cholesky(const Mat& m);
Vec cholesky_solve(const Mat& lower, const Vec& rhs);

// Dense LU solve with partial pivoting. Throws on a singular matrix.
Vec lu_solve(Mat m, Vec rhs);

bool certify_spd(const Mat& m);

// Covariance for gaussian(): isotropic sigma^2 I or a diagonal.
struct Isotropic {
  double variance;
};
using CovarianceSpec = std::variant<Isotropic, Vec>;

// Sample from N(0, cov). Consumes RngStream::normal_draws(d) draws regardless
// of the covariance, so streams shared by coupled iterates stay aligned. A zero
// variance yields zeros; a negative one is an error.
Vec gaussian(RngStream& rng, std::size_t d, const CovarianceSpec& cov);

struct EigenExtremes {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  Vec q_max;  // unit eigenvector of lambda_max
  Vec q_min;  // unit eigenvector of lambda_min
  std::size_t iterations = 0;
};

inline constexpr std::size_t kEigenIterationCap = 100000;

// Extreme eigenpairs of a symmetric matrix: power iteration for the top of the
// spectrum and shifted inverse iteration for the bottom. Converged when the
// residual |M q - lambda q| drops below tol times the spectral scale.
// Eigenvector signs are fixed so the largest-magnitude entry is positive.
EigenExtremes power_iteration_extreme_eigs(const Mat& m, double tol = 1e-10,
                                           std::size_t max_iter = kEigenIterationCap);

}  // namespace csgd
