#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "csgd/problems.hpp"

namespace csgd {

double log1p_exp_neg(double z) {
  // log(1 + e^{-z}) without overflow for either sign of z.
  return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

namespace {

std::size_t rows_of(std::span<const double> xs, std::span<const double> ys, std::size_t d) {
  if (d == 0 || xs.size() % d != 0 || xs.size() / d != ys.size())
    fail(ErrorCode::DimensionMismatch, "sample batch shape does not match theta");
  if (ys.empty()) fail(ErrorCode::InvalidArgument, "empty sample batch");
  return ys.size();
}

}  // namespace

Vec logistic_grad(std::span<const double> xs, std::span<const double> ys, const Vec& theta) {
  const std::size_t d = theta.size();
  const std::size_t m = rows_of(xs, ys, d);
  Vec g(d);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = xs.subspan(i * d, d);
    const double w = -ys[i] * sigmoid_neg(ys[i] * dot(x, theta.span()));
    for (std::size_t j = 0; j < d; ++j) g[j] += w * x[j];
  }
  for (double& v : g) v /= static_cast<double>(m);
  return g;
}

Vec least_squares_grad(std::span<const double> xs, std::span<const double> ys, const Vec& theta) {
  const std::size_t d = theta.size();
  const std::size_t m = rows_of(xs, ys, d);
  Vec g(d);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = xs.subspan(i * d, d);
    const double w = -(ys[i] - dot(x, theta.span()));
    for (std::size_t j = 0; j < d; ++j) g[j] += w * x[j];
  }
  for (double& v : g) v /= static_cast<double>(m);
  return g;
}

Vec svm_subgrad(std::span<const double> xs, std::span<const double> ys, const Vec& theta,
                double lambda) {
  const std::size_t d = theta.size();
  const std::size_t m = rows_of(xs, ys, d);
  Vec g(d);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = xs.subspan(i * d, d);
    // Margin ties take the inactive-hinge branch.
    if (ys[i] * dot(x, theta.span()) >= 1.0) continue;
    for (std::size_t j = 0; j < d; ++j) g[j] -= ys[i] * x[j];
  }
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] / static_cast<double>(m) + lambda * theta[j];
  return g;
}

Vec lasso_subgrad(std::span<const double> xs, std::span<const double> ys, const Vec& theta,
                  double lambda) {
  const std::size_t d = theta.size();
  const std::size_t m = rows_of(xs, ys, d);
  Vec g(d);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = xs.subspan(i * d, d);
    const double w = -2.0 * (ys[i] - dot(x, theta.span()));
    for (std::size_t j = 0; j < d; ++j) g[j] += w * x[j];
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sign = theta[j] > 0.0 ? 1.0 : (theta[j] < 0.0 ? -1.0 : 0.0);
    g[j] = g[j] / static_cast<double>(m) + lambda * sign;
  }
  return g;
}

Vec uniform_convex_grad(const Vec& theta, double p_exp, const Vec& noise) {
  if (noise.size() != theta.size()) fail(ErrorCode::DimensionMismatch, "noise length");
  Vec g = noise;
  const double r = norm(theta);
  if (r > 0.0) {
    const double f = std::pow(r, p_exp - 2.0);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += f * theta[j];
  }
  return g;
}

Vec quadratic_grad(const QuadraticParams& q, const Vec& theta, const Vec& noise) {
  Vec g = matvec(q.H, theta);
  g += q.a;
  g += noise;
  return g;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

std::uint64_t get_le(std::istream& is, int bytes) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), bytes);
  if (!is) fail(ErrorCode::Io, "truncated dataset file");
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  os.write("CSGD", 4);
  put_u32(os, kDatasetVersion);
  put_u64(os, data.d);
  put_u64(os, data.n);
  for (double x : data.x) put_u64(os, std::bit_cast<std::uint64_t>(x));
  for (double y : data.y) put_u64(os, std::bit_cast<std::uint64_t>(y));
  if (!os) fail(ErrorCode::Io, "write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CSGD", 4) != 0) fail(ErrorCode::Io, "bad dataset magic");
  if (get_le(is, 4) != kDatasetVersion) fail(ErrorCode::Io, "unsupported dataset version");
  Dataset data;
  data.d = get_le(is, 8);
  data.n = get_le(is, 8);
  data.x.resize(data.n * data.d);
  data.y.resize(data.n);
  for (double& x : data.x) x = std::bit_cast<double>(get_le(is, 8));
  for (double& y : data.y) y = std::bit_cast<double>(get_le(is, 8));
  return data;
}

}  // namespace csgd
