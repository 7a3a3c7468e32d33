#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "../support.hpp"
#include "csgd/problems.hpp"

using namespace csgd;

namespace {

ProblemPtr build(ProblemKind kind, std::size_t d, std::size_t n, std::uint64_t seed = 3) {
  ProblemOptions o;
  o.kind = kind;
  o.d = d;
  o.n = n;
  o.seed = seed;
  return make_problem(o);
}

// Solve a small dense system in long double, independent of the library.
std::vector<long double> gauss_solve(std::vector<std::vector<long double>> a,
                                     std::vector<long double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<long double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    long double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

BatchToken token_at(const Problem& p, std::uint64_t k, std::uint64_t stream = 77) {
  return BatchToken{9, stream, k * p.draws_per_batch(), 0};
}

}  // namespace

TEST_SUITE("problems") {

TEST_CASE("least squares constants and the normal-equation reference") {
  const auto p = build(ProblemKind::LeastSquares, 5, 20000);
  double trace = 0.0;
  for (std::size_t j = 1; j <= 5; ++j) trace += 1.0 / static_cast<double>(j);
  CHECK(p->constants().r_sq == doctest::Approx(trace).epsilon(1e-12));
  CHECK(p->default_gamma0() == doctest::Approx(1.0 / (2.0 * trace)));

  const Dataset& data = p->dataset();
  std::vector<std::vector<long double>> xtx(5, std::vector<long double>(5, 0.0L));
  std::vector<long double> xty(5, 0.0L);
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto x = data.row(i);
    for (std::size_t a = 0; a < 5; ++a) {
      xty[a] += x[a] * static_cast<long double>(data.y[i]);
      for (std::size_t b = 0; b < 5; ++b) xtx[a][b] += x[a] * static_cast<long double>(x[b]);
    }
  }
  const auto ts = gauss_solve(xtx, xty);
  const Vec& got = p->reference().theta_star;
  for (std::size_t j = 0; j < 5; ++j)
    CHECK(std::abs(got[j] - static_cast<double>(ts[j])) <= 1e-10 * std::max(1.0L, std::fabs(ts[j])));
}

TEST_CASE("svm strong convexity is lambda; lasso planted vector is s-sparse") {
  ProblemOptions o;
  o.kind = ProblemKind::Svm;
  o.d = 20;
  o.n = 2000;
  o.lambda = 0.1;
  const auto svm = make_problem(o);
  CHECK(svm->constants().mu == 0.1);

  ProblemOptions l;
  l.kind = ProblemKind::Lasso;
  l.d = 100;
  l.n = 3000;
  l.sparsity = 60;
  l.lambda = 1e-4;
  const auto lasso = make_problem(l);
  const auto& lp = std::get<LassoParams>(lasso->params());
  std::size_t nnz = 0;
  for (double v : lp.theta_sparse) nnz += v != 0.0;
  CHECK(nnz == 60);

  l.sparsity = 101;
  try {
    make_problem(l);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
  }
}

TEST_CASE("logistic oracle examples") {
  const std::vector<double> zero_x(3, 0.0), y1{1.0};
  CHECK(logistic_grad(zero_x, y1, Vec{0.3, -2, 1}) == Vec(3));
  const std::vector<double> e1{1, 0, 0};
  const Vec g = logistic_grad(e1, y1, Vec(3));
  CHECK(g[0] == -0.5);
  CHECK(g[1] == 0.0);

  // Batch average equals the mean of per-sample gradients.
  RngStream rng(4, 4);
  std::vector<double> xs(3 * 8), ys(8);
  for (auto& v : xs) v = rng.normal();
  for (auto& v : ys) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const Vec theta{0.2, -0.7, 1.1};
  const Vec batch = logistic_grad(xs, ys, theta);
  Vec mean(3);
  for (std::size_t i = 0; i < 8; ++i) {
    const Vec gi = logistic_grad(std::span<const double>(xs).subspan(3 * i, 3),
                                 std::span<const double>(ys).subspan(i, 1), theta);
    for (std::size_t j = 0; j < 3; ++j) mean[j] += gi[j] / 8.0;
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(batch[j] - mean[j]) <= 1e-14);
}

TEST_CASE("logistic full gradient matches central differences of the objective") {
  const auto p = build(ProblemKind::Logistic, 5, 4000);
  RngStream rng(8, 1);
  for (int t = 0; t < 5; ++t) {
    Vec theta(5);
    for (auto& v : theta) v = rng.normal();
    const Vec g = *p->full_gradient(theta);
    for (std::size_t j = 0; j < 5; ++j) {
      const double h = 1e-5;
      Vec a = theta, b = theta;
      a[j] += h;
      b[j] -= h;
      const double fd = (*p->objective(a) - *p->objective(b)) / (2 * h);
      CHECK(std::abs(fd - g[j]) <= 1e-6 * std::max(1.0, std::abs(g[j])));
    }
  }
}

TEST_CASE("least squares oracle examples and population mean") {
  const std::vector<double> x{1, 0}, y{2};
  CHECK(least_squares_grad(x, y, Vec(2)) == Vec{-2, 0});

  ProblemOptions o;
  o.kind = ProblemKind::LeastSquares;
  o.d = 3;
  o.n = 0;
  o.seed = 5;
  o.sigma_noise = 0.0;
  const auto quiet = make_problem(o);
  const Vec& ts = quiet->reference().theta_star;
  CHECK(quiet->gradient(ts, token_at(*quiet, 0)).g == Vec(3));

  o.sigma_noise = 1.0;
  const auto p = make_problem(o);
  const Vec theta{0.5, -1.0, 2.0};
  const int n = 100000;
  std::vector<std::vector<double>> samples(3);
  for (int k = 0; k < n; ++k) {
    const Vec g = p->gradient(theta, token_at(*p, k)).g;
    for (std::size_t j = 0; j < 3; ++j) samples[j].push_back(g[j]);
  }
  const auto& glm = std::get<GlmParams>(p->params());
  for (std::size_t j = 0; j < 3; ++j) {
    const double expected = glm.h_diag[j] * (theta[j] - p->reference().theta_star[j]);
    const auto ms = testsupport::mean_se(samples[j]);
    CHECK(std::abs(ms.mean - expected) <= 3.0 * ms.se);
  }
}

TEST_CASE("svm subgradient examples and the subgradient inequality") {
  const std::vector<double> e1{1, 0}, y{1};
  CHECK(svm_subgrad(e1, y, Vec{2, 0}, 0.1) == Vec{0.2, 0});
  CHECK(svm_subgrad(e1, y, Vec(2), 0.1) == Vec{-1, 0});

  RngStream rng(12, 0);
  const std::size_t n = 300, d = 4;
  std::vector<double> xs(n * d), ys(n);
  for (auto& v : xs) v = rng.normal();
  for (auto& v : ys) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double lambda = 0.1;
  auto f = [&](const Vec& th) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) z += xs[i * d + j] * th[j];
      s += std::max(0.0, 1.0 - ys[i] * z);
    }
    double r = 0.0;
    for (double v : th) r += v * v;
    return s / n + 0.5 * lambda * r;
  };
  int bad = 0;
  for (int t = 0; t < 1000; ++t) {
    Vec a(d), b(d);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const Vec g = svm_subgrad(xs, ys, a, lambda);
    if (f(b) < f(a) + dot(g, b - a) - 1e-12) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("lasso subgradient examples and the subgradient inequality") {
  const std::vector<double> x{1, 2, -1, 0.5}, y0{0, 0};
  CHECK(lasso_subgrad(x, y0, Vec(2), 0.3) == Vec(2));
  const Vec th{1, -1};
  const std::vector<double> yfit{1 * 1 + 2 * -1, -1 * 1 + 0.5 * -1};
  const Vec g = lasso_subgrad(x, yfit, th, 0.3);
  CHECK(g[0] == doctest::Approx(0.3));
  CHECK(g[1] == doctest::Approx(-0.3));

  RngStream rng(13, 0);
  const std::size_t n = 200, d = 5;
  std::vector<double> xs(n * d), ys(n);
  for (auto& v : xs) v = rng.normal();
  for (auto& v : ys) v = rng.normal();
  const double lambda = 0.05;
  auto f = [&](const Vec& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) z += xs[i * d + j] * t[j];
      s += (ys[i] - z) * (ys[i] - z);
    }
    double l1 = 0.0;
    for (double v : t) l1 += std::abs(v);
    return s / n + lambda * l1;
  };
  int bad = 0;
  for (int t = 0; t < 1000; ++t) {
    Vec a(d), b(d);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    if (t % 10 == 0) a[t % d] = 0.0;  // exercise the kink
    if (f(b) < f(a) + dot(lasso_subgrad(xs, ys, a, lambda), b - a) - 1e-10) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("uniformly convex gradient") {
  CHECK(uniform_convex_grad(Vec(3), 2.5, Vec(3)) == Vec(3));
  CHECK(uniform_convex_grad(Vec::unit(3, 0), 2.5, Vec(3)) == Vec::unit(3, 0));
  RngStream rng(14, 0);
  const double p = 2.5;
  auto f = [&](const Vec& t) { return std::pow(norm(t), p) / p; };
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    Vec th(4);
    for (auto& v : th) v = rng.normal();
    const Vec g = uniform_convex_grad(th, p, Vec(4));
    for (std::size_t j = 0; j < 4; ++j) {
      const double h = 1e-6;
      Vec a = th, b = th;
      a[j] += h;
      b[j] -= h;
      const double fd = (f(a) - f(b)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[j]) / std::max(1e-3, std::abs(g[j])));
    }
  }
  CHECK(worst <= 1e-5);
  const auto uc = build(ProblemKind::UniformlyConvex, 6, 0);
  CHECK(uc->reference().theta_star == Vec(6));
}

TEST_CASE("quadratic oracle: coupling identity and mean") {
  ProblemOptions o;
  o.kind = ProblemKind::Quadratic;
  o.d = 3;
  o.isotropic_h = 1.0;
  o.zero_linear = true;
  o.noise_scale = 0.0;
  const auto id = make_problem(o);
  const Vec v{0.3, -1, 2};
  CHECK(id->gradient(v, token_at(*id, 0)).g == v);

  ProblemOptions r;
  r.kind = ProblemKind::Quadratic;
  r.d = 4;
  r.seed = 21;
  const auto p = make_problem(r);
  const auto& q = std::get<QuadraticParams>(p->params());
  const Vec t1{1, 2, 3, 4}, t2{-0.5, 0.25, 1, 0};
  const Vec* ts[] = {&t1, &t2};
  Vec out[2];
  p->gradients(token_at(*p, 5), ts, out);
  const Vec diff = out[0] - out[1];
  const Vec expect = matvec(q.H, t1 - t2);
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(diff[j] - expect[j]) <= 1e-14);

  const int n = 100000;
  std::vector<std::vector<double>> samples(4);
  for (int k = 0; k < n; ++k) {
    const Vec g = p->gradient(t1, token_at(*p, k)).g;
    for (std::size_t j = 0; j < 4; ++j) samples[j].push_back(g[j]);
  }
  const Vec mean = matvec(q.H, t1) + q.a;
  for (std::size_t j = 0; j < 4; ++j) {
    const auto ms = testsupport::mean_se(samples[j]);
    CHECK(std::abs(ms.mean - mean[j]) <= 3.0 * ms.se);
  }
}

TEST_CASE("same token replays the same stochastic gradient") {
  const auto p = build(ProblemKind::Logistic, 5, 1000);
  const Vec th{0.1, 0.2, 0.3, 0.4, 0.5};
  const BatchToken tok = token_at(*p, 123);
  CHECK(p->gradient(th, tok).g == p->gradient(th, tok).g);
  CHECK(p->gradient(th, tok).g != p->gradient(th, token_at(*p, 124)).g);
  const auto again = build(ProblemKind::Logistic, 5, 1000);
  CHECK(again->dataset().x == p->dataset().x);
  CHECK(again->reference().theta_star == p->reference().theta_star);
}

TEST_CASE("reference solutions are stationary") {
  for (ProblemKind k : {ProblemKind::LeastSquares, ProblemKind::Logistic, ProblemKind::Quadratic}) {
    const bool finite = k != ProblemKind::Quadratic;
    const auto p = build(k, 5, finite ? 5000 : 0);
    const Vec g_star = *p->full_gradient(p->reference().theta_star);
    const Vec g_zero = *p->full_gradient(Vec(5));
    CHECK(norm(g_star) <= 1e-8 * std::max(1.0, norm(g_zero)));
  }
}

TEST_CASE("lsa chain: stationary law, fixed point and occupancy") {
  ProblemOptions o;
  o.kind = ProblemKind::Lsa;
  o.d = 4;
  o.seed = 6;
  o.n_states = 5;
  const auto p = make_problem(o);
  const auto& l = std::get<LsaParams>(p->params());
  double total = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += l.pi[i] * l.P(i, j);
    CHECK(std::abs(s - l.pi[j]) <= 1e-12);
    total += l.pi[j];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  const Vec res = matvec(l.A_bar, p->reference().theta_star) + l.b_bar;
  CHECK(norm(res) <= 1e-10);

  // 1e6 transitions: empirical occupancy within 1% total variation.
  std::vector<double> count(5, 0.0);
  std::uint32_t s = 0;
  const int steps = 1000000;
  for (int k = 0; k < steps; ++k) {
    s = p->next_chain_state(BatchToken{1, 33, static_cast<std::uint64_t>(k) * p->draws_per_batch(), s});
    count[s] += 1.0;
  }
  double tv = 0.0;
  for (std::size_t j = 0; j < 5; ++j) tv += 0.5 * std::abs(count[j] / steps - l.pi[j]);
  CHECK(tv <= 0.01);

  o.n_states = 1;
  const auto one = make_problem(o);
  const auto& l1 = std::get<LsaParams>(one->params());
  const Vec fixed = matvec(l1.A[0], one->reference().theta_star) + l1.b[0];
  CHECK(norm(fixed) <= 1e-10);
}

TEST_CASE("dataset dump round trip") {
  const auto p = build(ProblemKind::LeastSquares, 3, 50);
  const auto path = std::filesystem::temp_directory_path() / "csgd_dataset_roundtrip.bin";
  write_dataset(p->dataset(), path);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "CSGD");
  in.close();
  const Dataset back = read_dataset(path);
  CHECK(back.n == 50);
  CHECK(back.d == 3);
  CHECK(back.x == p->dataset().x);
  CHECK(back.y == p->dataset().y);
  std::filesystem::remove(path);
}

}
