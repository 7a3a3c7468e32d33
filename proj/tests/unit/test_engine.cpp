#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "csgd/engine.hpp"

using namespace csgd;

namespace {

ProblemPtr quadratic(std::size_t d, std::uint64_t seed, std::optional<double> noise = {},
                     std::optional<double> iso = {}, bool zero_linear = false) {
  ProblemOptions o;
  o.kind = ProblemKind::Quadratic;
  o.d = d;
  o.seed = seed;
  o.noise_scale = noise;
  o.isotropic_h = iso;
  o.zero_linear = zero_linear;
  return make_problem(o);
}

ControllerParams fixed_constant(double gamma) {
  ControllerParams p;
  p.kind = ControllerKind::FixedSchedule;
  p.schedule = ScheduleKind::Constant;
  p.gamma0 = gamma;
  p.track_distance = true;
  return p;
}

bool same_record(const TraceRecord& a, const TraceRecord& b) {
  auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return a.k == b.k && eq(a.gamma, b.gamma) && eq(a.statistic, b.statistic) && eq(a.err, b.err) &&
         eq(a.err_avg, b.err_avg) && eq(a.gap_avg, b.gap_avg) && eq(a.dist, b.dist) &&
         a.restart == b.restart;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("coupled difference follows (I - gamma H)^k D0 on the quadratic kind") {
  const auto p = quadratic(5, 8);
  const auto& q = std::get<QuadraticParams>(p->params());
  const auto eig = testsupport::jacobi_eigen(testsupport::to_matrix(q.H));
  const double gamma = 0.05 / static_cast<double>(eig.values.back());
  CoupledRun run(p, fixed_constant(gamma), EngineOptions{}, RunStreams{3, 16, 17, 18});
  const Vec d0 = run.state().theta1 - run.state().theta2;
  std::vector<long double> d(d0.begin(), d0.end());
  for (std::uint64_t k = 1; k <= 300; ++k) {
    REQUIRE(run.step());
    std::vector<long double> next(5, 0.0L);
    for (std::size_t i = 0; i < 5; ++i) {
      next[i] = d[i];
      for (std::size_t j = 0; j < 5; ++j) next[i] -= gamma * q.H(i, j) * d[j];
    }
    d = next;
    long double want = 0.0L;
    for (long double v : d) want += v * v;
    const double got = dist_sq(run.state().theta1, run.state().theta2);
    REQUIRE(std::abs(got - static_cast<double>(want)) <= 1e-10 * static_cast<double>(want));
  }
}

TEST_CASE("zero noise at the optimum stays put") {
  const auto p = quadratic(4, 2, 0.0, 1.0, true);
  REQUIRE(p->reference().theta_star == Vec(4));
  auto c = fixed_constant(0.3);
  c.track_distance = false;
  EngineOptions eo;
  eo.n_iters = 50;
  CoupledRun run(p, c, eo, RunStreams{1, 16, 17, 18});
  for (int k = 0; k < 50; ++k) REQUIRE(run.step());
  CHECK(run.state().theta1 == Vec(4));
}

TEST_CASE("b-step backward reinitialization restores the stored auxiliary iterate") {
  const auto p = quadratic(3, 5);
  ControllerParams c;
  c.kind = ControllerKind::CouplingStatic;
  c.b = 5;
  c.beta0 = 0.3;
  EngineOptions eo;
  CoupledRun run(p, c, eo, RunStreams{2, 16, 17, 18});
  std::vector<Vec> theta2{run.state().theta2};
  std::size_t checked = 0;
  for (std::uint64_t k = 1; k <= 2000; ++k) {
    const std::size_t before = run.controller().restart_log.size();
    REQUIRE(run.step());
    CHECK(run.state().history.size() <= c.b + 1);
    CHECK(run.state().history.back() == run.state().theta2);
    if (run.controller().restart_log.size() > before && k > c.b && run.state().perturbations == 0) {
      CHECK(run.state().theta2 == theta2[k - c.b]);
      CHECK(run.state().D0_sq == dist_sq(run.state().theta1, run.state().theta2));
      CHECK(run.controller().D0_sq == run.state().D0_sq);
      ++checked;
    }
    theta2.push_back(run.state().theta2);
  }
  CHECK(checked >= 2);

  // b = 0 keeps the auxiliary iterate where it is.
  c.b = 0;
  CoupledRun zero(p, c, eo, RunStreams{2, 16, 17, 18});
  std::size_t restarts = 0;
  for (std::uint64_t k = 1; k <= 2000; ++k) {
    const std::size_t n = zero.controller().restart_log.size();
    REQUIRE(zero.step());
    CHECK(zero.state().history.size() == 1);
    if (zero.controller().restart_log.size() > n && zero.state().perturbations == 0) {
      CHECK(zero.state().D0_sq == dist_sq(zero.state().theta1, zero.state().theta2));
      ++restarts;
    }
  }
  CHECK(restarts >= 1);
}

TEST_CASE("coincident start triggers the perturbation branch") {
  const auto p = quadratic(4, 3);
  ControllerParams c;
  c.kind = ControllerKind::CouplingStatic;
  c.gamma0 = 0.05;
  EngineOptions eo;
  eo.init_scale = 0.0;
  const RunStreams rs{6, 16, 17, 18};
  CoupledRun run(p, c, eo, rs);
  CHECK(run.state().perturbations == 1);
  RngStream rng(6, 18, 0);
  const Vec z = gaussian(rng, 4, Isotropic{1.0});
  const Vec expect = run.state().theta1 + std::sqrt(0.05) * z;
  for (std::size_t j = 0; j < 4; ++j) CHECK(run.state().theta2[j] == doctest::Approx(expect[j]).epsilon(1e-15));
  CHECK(run.state().D0_sq > 0.0);
  CHECK(run.controller().D0_sq == run.state().D0_sq);
}

TEST_CASE("running average equals the brute-force mean of the iterates") {
  ProblemOptions o;
  o.kind = ProblemKind::Logistic;
  o.d = 5;
  o.n = 2000;
  const auto p = make_problem(o);
  ControllerParams c;
  c.kind = ControllerKind::CouplingStatic;
  CoupledRun run(p, c, EngineOptions{}, RunStreams{4, 16, 17, 18});
  std::vector<long double> sum(5, 0.0L);
  for (std::uint64_t k = 1; k <= 3000; ++k) {
    REQUIRE(run.step());
    for (std::size_t j = 0; j < 5; ++j) sum[j] += run.state().theta1[j];
  }
  for (std::size_t j = 0; j < 5; ++j) {
    const double mean = static_cast<double>(sum[j] / 3000.0L);
    CHECK(std::abs(run.state().avg1[j] - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
  }
}

TEST_CASE("trace layout") {
  const auto p = quadratic(3, 1);
  EngineOptions eo;
  eo.n_iters = 0;
  const RunTrace empty = run_engine(p, fixed_constant(0.1), eo, RunStreams{1, 16, 17, 18});
  CHECK(empty.records.empty());
  CHECK(empty.initial.k == 0);
  CHECK(empty.final_k == 0);

  eo.n_iters = 1000;
  eo.trace_stride = 7;
  const RunTrace t = run_engine(p, fixed_constant(0.1), eo, RunStreams{1, 16, 17, 18});
  CHECK(t.records.size() == 1000 / 7 + 1);  // every 7th plus the final iteration
  CHECK(t.records.back().k == 1000);
  for (const auto& r : t.records) {
    CHECK(r.gamma == 0.1);
    CHECK(std::isnan(r.statistic));
    CHECK(std::isfinite(r.dist));
  }
}

TEST_CASE("runs are deterministic in their inputs") {
  ProblemOptions o;
  o.kind = ProblemKind::LeastSquares;
  o.d = 5;
  o.n = 1000;
  const auto p = make_problem(o);
  for (ControllerKind kind : {ControllerKind::CouplingStatic, ControllerKind::Pflug,
                              ControllerKind::DistanceBased}) {
    ControllerParams c;
    c.kind = kind;
    EngineOptions eo;
    eo.n_iters = 5000;
    eo.trace_stride = 10;
    const RunTrace a = run_engine(p, c, eo, RunStreams{9, 32, 33, 34});
    const RunTrace b = run_engine(p, c, eo, RunStreams{9, 32, 33, 34});
    REQUIRE(a.records.size() == b.records.size());
    bool same = true;
    for (std::size_t i = 0; i < a.records.size(); ++i) same = same && same_record(a.records[i], b.records[i]);
    CHECK(same);
    CHECK(a.final_theta == b.final_theta);
    const RunTrace other = run_engine(p, c, eo, RunStreams{10, 32, 33, 34});
    CHECK(other.final_theta != a.final_theta);
  }
}

TEST_CASE("divergence is recorded, not thrown") {
  const auto p = quadratic(3, 1);
  EngineOptions eo;
  eo.n_iters = 10000;
  const RunTrace t = run_engine(p, fixed_constant(50.0), eo, RunStreams{1, 16, 17, 18});
  CHECK(t.diverged);
  CHECK_FALSE(t.failure.empty());
  CHECK(std::isinf(t.records.back().err));
  CHECK(t.final_k < 10000);
}

}
