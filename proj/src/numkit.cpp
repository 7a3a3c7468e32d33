#include "csgd/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace csgd {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::NumericOverflow: return "numeric_overflow";
    case ErrorCode::NonConvergence: return "non_convergence";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    case ErrorCode::Diverged: return "diverged";
    case ErrorCode::DegenerateDiagnostic: return "degenerate_diagnostic";
    case ErrorCode::DegenerateDirection: return "degenerate_direction";
  }
  return "unknown";
}

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    fail(ErrorCode::DimensionMismatch,
         std::string(what) + ": length " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

void require_finite(const Vec& v, const char* what) {
  if (!all_finite(v.span())) {
    fail(ErrorCode::NumericOverflow, std::string(what) + " produced a non-finite value");
  }
}

}  // namespace

Vec Vec::unit(std::size_t n, std::size_t i) {
  if (i >= n) fail(ErrorCode::InvalidArgument, "unit vector index out of range");
  Vec e(n);
  e[i] = 1.0;
  return e;
}

Vec& Vec::operator+=(const Vec& o) {
  require_same(size(), o.size(), "vector add");
  for (std::size_t i = 0; i < size(); ++i) v_[i] += o.v_[i];
  require_finite(*this, "vector add");
  return *this;
}

Vec& Vec::operator-=(const Vec& o) {
  require_same(size(), o.size(), "vector subtract");
  for (std::size_t i = 0; i < size(); ++i) v_[i] -= o.v_[i];
  require_finite(*this, "vector subtract");
  return *this;
}

Vec& Vec::operator*=(double s) {
  for (double& x : v_) x *= s;
  require_finite(*this, "vector scale");
  return *this;
}

Vec operator+(Vec a, const Vec& b) { return a += b; }
Vec operator-(Vec a, const Vec& b) { return a -= b; }
Vec operator*(double s, Vec a) { return a *= s; }

double dot(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "dot");
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a[i] * b[i];
    const double t = sum + p;
    if (std::abs(sum) >= std::abs(p)) {
      comp += (sum - t) + p;
    } else {
      comp += (p - t) + sum;
    }
    sum = t;
  }
  const double out = sum + comp;
  if (!std::isfinite(out)) fail(ErrorCode::NumericOverflow, "dot produced a non-finite value");
  return out;
}

double norm_sq(const Vec& a) { return dot(a, a); }
double norm(const Vec& a) { return std::sqrt(norm_sq(a)); }

double dist_sq(const Vec& a, const Vec& b) {
  require_same(a.size(), b.size(), "dist_sq");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    sum += t * t;
  }
  return sum;
}

void axpy(double alpha, const Vec& x, Vec& y) {
  require_same(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(std::span<const double> xs) noexcept {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::diag(const Vec& d) {
  Mat m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Mat m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    require_same(row.size(), c, "Mat::from_rows");
    std::size_t j = 0;
    for (double x : row) m(i, j++) = x;
    ++i;
  }
  return m;
}

Mat Mat::transpose() const {
  Mat t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Mat::is_symmetric(double tol) const {
  if (!square()) return false;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

Vec matvec(const Mat& m, const Vec& v) {
  require_same(m.cols(), v.size(), "matvec");
  Vec out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), v.span());
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  require_same(a.cols(), b.rows(), "matmul");
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Mat operator+(const Mat& a, const Mat& b) {
  require_same(a.rows(), b.rows(), "matrix add");
  require_same(a.cols(), b.cols(), "matrix add");
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) + b(i, j);
  return out;
}

Mat operator*(double s, const Mat& a) {
  Mat out = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) *= s;
  return out;
}

std::optional<Mat> cholesky(const Mat& m) {
  if (!m.square()) return std::nullopt;
  const std::size_t n = m.rows();
  Mat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Vec cholesky_solve(const Mat& lower, const Vec& rhs) {
  const std::size_t n = lower.rows();
  require_same(n, rhs.size(), "cholesky_solve");
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * y[k];
    y[i] = s / lower(i, i);
  }
  Vec x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x[k];
    x[ii] = s / lower(ii, ii);
  }
  return x;
}

Vec lu_solve(Mat m, Vec rhs) {
  if (!m.square()) fail(ErrorCode::DimensionMismatch, "lu_solve: matrix not square");
  const std::size_t n = m.rows();
  require_same(n, rhs.size(), "lu_solve");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t i = col + 1; i < n; ++i)
      if (std::abs(m(i, col)) > std::abs(m(piv, col))) piv = i;
    if (m(piv, col) == 0.0) fail(ErrorCode::NumericOverflow, "lu_solve: singular matrix");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(col, j), m(piv, j));
      std::swap(rhs[col], rhs[piv]);
    }
    for (std::size_t i = col + 1; i < n; ++i) {
      const double f = m(i, col) / m(col, col);
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) m(i, j) -= f * m(col, j);
      rhs[i] -= f * rhs[col];
    }
  }
  Vec x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = rhs[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= m(ii, j) * x[j];
    x[ii] = s / m(ii, ii);
  }
  require_finite(x, "lu_solve");
  return x;
}

bool certify_spd(const Mat& m) {
  double scale = 0.0;
  for (double x : m.values()) scale = std::max(scale, std::abs(x));
  return m.is_symmetric(1e-12 * scale) && cholesky(m).has_value();
}

Vec gaussian(RngStream& rng, std::size_t d, const CovarianceSpec& cov) {
  Vec out(d);
  if (const auto* iso = std::get_if<Isotropic>(&cov)) {
    if (!(iso->variance >= 0.0)) fail(ErrorCode::InvalidArgument, "gaussian: negative variance");
    rng.normals(out.span());
    const double s = std::sqrt(iso->variance);
    for (double& x : out) x *= s;
    return out;
  }
  const Vec& diag = std::get<Vec>(cov);
  require_same(diag.size(), d, "gaussian covariance");
  for (double v : diag)
    if (!(v >= 0.0)) fail(ErrorCode::InvalidArgument, "gaussian: negative variance entry");
  rng.normals(out.span());
  for (std::size_t i = 0; i < d; ++i) out[i] *= std::sqrt(diag[i]);
  return out;
}

namespace {

void normalize_sign(Vec& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg]) + 1e-14) arg = i;
  if (v[arg] < 0.0)
    for (double& x : v) x = -x;
}

Vec start_vector(std::size_t n) {
  RngStream rng(0x5EEDu, 0xE16u);
  Vec v(n);
  for (double& x : v) x = 1.0 + 0.5 * (rng.uniform() - 0.5);
  const double nv = norm(v);
  for (double& x : v) x /= nv;
  return v;
}

double residual(const Mat& m, const Vec& v, double lambda) {
  const Vec mv = matvec(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double t = mv[i] - lambda * v[i];
    s += t * t;
  }
  return std::sqrt(s);
}

}  // namespace

EigenExtremes power_iteration_extreme_eigs(const Mat& m, double tol, std::size_t max_iter) {
  if (!m.square() || m.rows() == 0)
    fail(ErrorCode::InvalidArgument, "eigen extremes need a non-empty square matrix");
  const std::size_t n = m.rows();
  double scale = 0.0;
  double gersh_lo = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += std::abs(m(i, j));
      if (j != i) off += std::abs(m(i, j));
    }
    scale = std::max(scale, row);
    gersh_lo = i == 0 ? m(i, i) - off : std::min(gersh_lo, m(i, i) - off);
  }
  if (!m.is_symmetric(1e-12 * scale)) fail(ErrorCode::InvalidArgument, "matrix is not symmetric");

  EigenExtremes out;
  if (scale == 0.0) {
    out.q_max = Vec::unit(n, 0);
    out.q_min = Vec::unit(n, 0);
    return out;
  }
  const double threshold = tol * scale;

  // Top of the spectrum: power iteration on a PSD shift of m.
  const double top_shift = std::max(0.0, -gersh_lo);
  Vec v = start_vector(n);
  double lambda = 0.0;
  bool done = false;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vec w = matvec(m, v);
    lambda = dot(v, w);
    ++out.iterations;
    if (residual(m, v, lambda) <= threshold) {
      done = true;
      break;
    }
    axpy(top_shift, v, w);
    const double nw = norm(w);
    if (nw == 0.0) fail(ErrorCode::NonConvergence, "power iteration collapsed to zero");
    for (double& x : w) x /= nw;
    v = std::move(w);
  }
  if (!done) fail(ErrorCode::NonConvergence, "power iteration hit the iteration cap");
  normalize_sign(v);
  out.lambda_max = lambda;
  out.q_max = v;

  // Bottom of the spectrum: inverse iteration, shifted only when m is not PD.
  Mat shifted = m;
  auto chol = cholesky(shifted);
  double bottom_shift = 0.0;
  if (!chol) {
    bottom_shift = std::max(0.0, -gersh_lo) + 1e-3 * scale;
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) += bottom_shift;
    chol = cholesky(shifted);
    if (!chol) fail(ErrorCode::NonConvergence, "shifted matrix failed to factor");
  }
  v = start_vector(n);
  done = false;
  for (std::size_t it = 0; it < max_iter; ++it) {
    lambda = dot(v, matvec(m, v));
    ++out.iterations;
    if (residual(m, v, lambda) <= threshold) {
      done = true;
      break;
    }
    Vec w = cholesky_solve(*chol, v);
    const double nw = norm(w);
    for (double& x : w) x /= nw;
    v = std::move(w);
  }
  if (!done) fail(ErrorCode::NonConvergence, "inverse iteration hit the iteration cap");
  normalize_sign(v);
  out.lambda_min = lambda;
  out.q_min = v;
  return out;
}

}  // namespace csgd
