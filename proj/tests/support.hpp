#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library's numerics, so a bug there cannot cancel out.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace testsupport {

using Matrix = std::vector<std::vector<long double>>;

struct Eigen {
  std::vector<long double> values;  // ascending
  Matrix vectors;                   // vectors[j] is the eigenvector of values[j]
};

// Cyclic Jacobi rotations on a symmetric matrix, in long double.
inline Eigen jacobi_eigen(Matrix a) {
  const std::size_t n = a.size();
  Matrix v(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0L;
  for (int sweep = 0; sweep < 100; ++sweep) {
    long double off = 0.0L;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-36L) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0L) continue;
        const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
        const long double t = (theta >= 0 ? 1.0L : -1.0L) /
                              (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
        const long double c = 1.0L / std::sqrt(t * t + 1.0L);
        const long double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const long double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return a[x][x] < a[y][y]; });
  Eigen e;
  for (std::size_t j : idx) {
    e.values.push_back(a[j][j]);
    std::vector<long double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k][j];
    e.vectors.push_back(col);
  }
  return e;
}

template <class M>
Matrix to_matrix(const M& m) {
  Matrix out(m.rows(), std::vector<long double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

// D0^T (I - gamma H)^{2k} D0 = sum_j (1 - gamma lambda_j)^{2k} (q_j^T D0)^2.
template <class V>
long double spectral_dk(const Eigen& e, long double gamma, const V& d0, unsigned long k) {
  long double total = 0.0L;
  for (std::size_t j = 0; j < e.values.size(); ++j) {
    long double proj = 0.0L;
    for (std::size_t i = 0; i < e.vectors[j].size(); ++i) proj += e.vectors[j][i] * d0[i];
    total += std::pow(1.0L - gamma * e.values[j], 2.0L * k) * proj * proj;
  }
  return total;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return r;
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace testsupport
