#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "csgd/controllers.hpp"
#include "csgd/engine.hpp"
#include "csgd/oracle.hpp"

using namespace csgd;

namespace {

ControllerParams coupling(double gamma0, double beta0) {
  ControllerParams p;
  p.kind = ControllerKind::CouplingStatic;
  p.gamma0 = gamma0;
  p.beta0 = beta0;
  return p;
}

ControllerState armed(const ControllerParams& p, double d0_sq) {
  ControllerState s = init_controller(p);
  rearm_d0(s, p, d0_sq);
  return s;
}

ProblemPtr isotropic_quadratic(std::size_t d, double h, double noise, std::uint64_t seed = 1) {
  ProblemOptions o;
  o.kind = ProblemKind::Quadratic;
  o.d = d;
  o.seed = seed;
  o.isotropic_h = h;
  o.zero_linear = true;
  o.noise_scale = noise;
  return make_problem(o);
}

std::uint64_t first_decay(const RunTrace& t) {
  return t.restarts.empty() ? UINT64_MAX : t.restarts.front().k;
}

}  // namespace

TEST_SUITE("controllers") {

TEST_CASE("coincident iterates decay; S equal to beta continues") {
  auto p = coupling(0.1, 0.25);
  auto s = armed(p, 4.0);
  const Vec a{1, 2};
  const Decision d = coupling_observe(s, p, a, a, 1);
  CHECK(d.decay);
  CHECK(d.reinit_auxiliary);
  CHECK(d.new_gamma == doctest::Approx(0.05));

  auto t = armed(p, 4.0);
  // |(1,0)|^2 / 4 = 0.25 exactly.
  CHECK_FALSE(coupling_observe(t, p, Vec{1, 0}, Vec{0, 0}, 1).decay);
  CHECK(t.last_statistic == 0.25);

  auto z = init_controller(p);
  CHECK_THROWS_AS(coupling_observe(z, p, a, a, 1), Error);
}

TEST_CASE("quadratic H = 0.5 I, gamma = 0.2, beta = 0.01: first decay at k = 22") {
  // Own closed form: S_k = (1 - 0.1)^(2k); smallest k with S_k < 0.01.
  std::uint64_t expected = 0;
  for (std::uint64_t k = 1; k < 1000; ++k)
    if (std::pow(0.81L, static_cast<long double>(k)) < 0.01L) {
      expected = k;
      break;
    }
  CHECK(expected == 22);
  // The library's oracle agrees on the statistic's path.
  const Mat H = Mat::diag(Vec(3, 0.5));
  const Vec D0{1.0, -2.0, 0.5};
  const double d0 = norm_sq(D0);
  CHECK(dk_closed_form(H, 0.2, D0, 21) / d0 >= 0.01);
  CHECK(dk_closed_form(H, 0.2, D0, 22) / d0 < 0.01);

  // Controller fed the exact recursion.
  auto p = coupling(0.2, 0.01);
  auto s = armed(p, d0);
  Vec diff = D0;
  std::uint64_t fired = 0;
  for (std::uint64_t k = 1; k <= 100 && !fired; ++k) {
    diff *= 0.9;
    if (coupling_observe(s, p, diff, Vec(3), k).decay) fired = k;
  }
  CHECK(fired == expected);

  // And through the engine with noise switched off.
  const auto prob = isotropic_quadratic(3, 0.5, 0.0);
  EngineOptions eo;
  eo.n_iters = 40;
  const RunTrace tr = run_engine(prob, p, eo, RunStreams{5, 16, 17, 18});
  REQUIRE_FALSE(tr.restarts.empty());
  CHECK(tr.restarts.front().k == expected);
}

TEST_CASE("phase algebra is exact after many decays") {
  ControllerParams p = coupling(0.3, 0.2);
  p.kind = ControllerKind::CouplingAdaptive;
  p.r = 0.7;
  p.eta = 0.9;
  auto s = armed(p, 1.0);
  const Vec a{1.0};
  for (std::uint64_t k = 1; k <= 40; ++k) {
    REQUIRE(coupling_observe(s, p, a, a, k).decay);
    rearm_d0(s, p, 1.0);
  }
  CHECK(s.phase_index == 40);
  CHECK(s.gamma_current == 0.3 * std::pow(0.7, 40.0));
  CHECK(s.beta_current == 0.2 * std::pow(0.9, 40.0));
  CHECK(s.restart_log.size() == 40);
  CHECK(s.restart_log[3].old_gamma == 0.3 * std::pow(0.7, 3.0));
}

TEST_CASE("no decay before burn-in or between check points; patience") {
  auto p = coupling(0.1, 0.5);
  p.burn_in = 10;
  p.check_every = 4;
  auto s = armed(p, 1.0);
  const Vec a{0.0};
  std::uint64_t fired = 0;
  for (std::uint64_t k = 1; k <= 30 && !fired; ++k)
    if (coupling_observe(s, p, a, a, k).decay) fired = k;
  CHECK(fired == 12);  // first multiple of 4 beyond 10

  auto q = coupling(0.1, 0.5);
  q.patience = 3;
  auto t = armed(q, 1.0);
  CHECK_FALSE(coupling_observe(t, q, a, a, 1).decay);
  CHECK_FALSE(coupling_observe(t, q, a, a, 2).decay);
  CHECK_FALSE(coupling_observe(t, q, Vec{1.0}, a, 3).decay);  // streak broken
  CHECK_FALSE(coupling_observe(t, q, a, a, 4).decay);
  CHECK_FALSE(coupling_observe(t, q, a, a, 5).decay);
  CHECK(coupling_observe(t, q, a, a, 6).decay);
}

TEST_CASE("scale invariance of the coupling trigger") {
  RngStream rng(3, 3);
  for (int t = 0; t < 200; ++t) {
    Vec d(4);
    for (auto& v : d) v = rng.normal();
    const double d0 = 1.0 + 4.0 * rng.uniform();
    const double c = std::exp(4.0 * rng.normal());
    auto p = coupling(0.1, 0.3);
    auto s1 = armed(p, d0);
    auto s2 = armed(p, c * c * d0);
    const bool a = coupling_observe(s1, p, d, Vec(4), 1).decay;
    const bool b = coupling_observe(s2, p, c * d, Vec(4), 1).decay;
    CHECK(a == b);
  }
}

TEST_CASE("pflug sign rule") {
  ControllerParams p;
  p.kind = ControllerKind::Pflug;
  p.gamma0 = 0.1;
  p.burn_in = 5;
  auto s = init_controller(p);
  const Vec e{1.0};
  for (std::uint64_t k = 1; k <= 200; ++k) CHECK_FALSE(pflug_observe(s, p, e, e, k).decay);

  auto t = init_controller(p);
  std::uint64_t fired = 0;
  // -1, +1, -1, +1, ... then one extra -1 keeps the running mean negative.
  for (std::uint64_t k = 1; k <= 50 && !fired; ++k) {
    const Vec g{k % 2 == 1 ? -1.0 : 1.0};
    if (pflug_observe(t, p, e, g, k).decay) fired = k;
  }
  CHECK(fired == 7);  // k = 6 has mean 0; k = 7 is the first check with mean < 0
  CHECK(t.pflug_count == 0);
  CHECK(t.phase_start == 7);
  CHECK(t.gamma_current == doctest::Approx(0.05));
}

TEST_CASE("default pflug and distance burn-in") {
  ControllerParams p;
  p.kind = ControllerKind::Pflug;
  p.gamma0 = 0.01;
  p.mu = 0.5;
  auto s = init_controller(p);
  CHECK(effective_burn_in(s, p) == 400);
  p.mu = 1e-9;
  CHECK(effective_burn_in(s, p) == kPflugBurnInCap);
  p.kind = ControllerKind::DistanceBased;
  p.mu = 0.5;
  CHECK(effective_burn_in(s, p) == 200);
  p.kind = ControllerKind::CouplingStatic;
  CHECK(effective_burn_in(s, p) == 0);
}

TEST_CASE("distance rule: diffusion continues, saturation decays") {
  ControllerParams p;
  p.kind = ControllerKind::DistanceBased;
  p.gamma0 = 0.1;
  p.burn_in = 0;
  auto s = init_controller(p);
  s.anchor = Vec(1);
  // Omega_k = k: log-log slope exactly 1.
  for (std::uint64_t k = 1; k <= 2000; ++k)
    CHECK_FALSE(distance_observe(s, p, Vec{std::sqrt(static_cast<double>(k))}, k).decay);
  CHECK(s.last_statistic == doctest::Approx(1.0).epsilon(1e-9));

  auto t = init_controller(p);
  t.anchor = Vec(1);
  std::uint64_t fired = 0;
  for (std::uint64_t k = 1; k <= 100 && !fired; ++k)
    if (distance_observe(t, p, Vec{2.0}, k).decay) fired = k;
  CHECK(fired == 2);  // checkpoints 1 and 2; frozen Omega gives slope 0
  CHECK(t.anchor == Vec{2.0});

  // Omega = 0 at a checkpoint is skipped.
  auto z = init_controller(p);
  z.anchor = Vec(1);
  for (std::uint64_t k = 1; k <= 50; ++k) CHECK_FALSE(distance_observe(z, p, Vec(1), k).decay);
}

TEST_CASE("fixed schedules") {
  ControllerParams p;
  p.kind = ControllerKind::FixedSchedule;
  p.schedule = ScheduleKind::InvSqrt;
  p.C = 1.0;
  CHECK(fixed_schedule(p, 4) == 0.5);
  p.schedule = ScheduleKind::InvMuK;
  p.mu = 0.1;
  CHECK(fixed_schedule(p, 10) == doctest::Approx(1.0).epsilon(1e-15));
  p.schedule = ScheduleKind::UniformOpt;
  p.tau = 1.0 - 2.0 / 2.5;
  CHECK(fixed_schedule(p, 7) == doctest::Approx(std::pow(7.0, -1.0 / 1.2)).epsilon(1e-14));
  p.gamma_max = 0.3;
  CHECK(fixed_schedule(p, 1) == 0.3);
  CHECK_THROWS_AS(fixed_schedule(p, 0), Error);

  // The uniformly convex problem resolves tau from p_exp.
  ProblemOptions o;
  o.kind = ProblemKind::UniformlyConvex;
  o.d = 3;
  o.p_exp = 2.5;
  ControllerParams u;
  u.kind = ControllerKind::FixedSchedule;
  u.schedule = ScheduleKind::UniformOpt;
  const auto r = resolve_params(u, *make_problem(o));
  CHECK(*r.tau == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("validation names the field") {
  ControllerParams p;
  p.r = 1.0;
  try {
    validate(p);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    CHECK(std::string(e.what()).find("r:") != std::string::npos);
  }
  ControllerParams q;
  q.eta = 0.0;
  CHECK_THROWS_AS(validate(q), Error);
  ControllerParams b;
  b.beta0 = 1.0;
  CHECK_THROWS_AS(validate(b), Error);
}

TEST_CASE("pflug fires before coupling on a noisy isotropic quadratic with small gamma") {
  const auto prob = isotropic_quadratic(50, 1.0, 1.0, 4);
  EngineOptions eo;
  eo.n_iters = 3000;
  eo.trace_stride = 3000;
  int pflug_first = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RunStreams rs{100 + seed, 16, 17, 18};
    auto c = coupling(0.01, 0.01);
    ControllerParams pf;
    pf.kind = ControllerKind::Pflug;
    pf.gamma0 = 0.01;
    const auto kc = first_decay(run_engine(prob, c, eo, rs));
    const auto kp = first_decay(run_engine(prob, pf, eo, rs));
    pflug_first += kp < kc;
  }
  CHECK(pflug_first >= 6);
}

TEST_CASE("distance rule decays within a factor 3 of coupling on least squares d = 5") {
  ProblemOptions o;
  o.kind = ProblemKind::LeastSquares;
  o.d = 5;
  o.n = 0;
  o.seed = 2;
  const auto prob = make_problem(o);
  EngineOptions eo;
  eo.n_iters = 40000;
  eo.trace_stride = 40000;
  std::vector<double> kc, kd;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RunStreams rs{300 + seed, 16, 17, 18};
    ControllerParams c;
    c.kind = ControllerKind::CouplingStatic;
    ControllerParams dr;
    dr.kind = ControllerKind::DistanceBased;
    kc.push_back(static_cast<double>(first_decay(run_engine(prob, c, eo, rs))));
    kd.push_back(static_cast<double>(first_decay(run_engine(prob, dr, eo, rs))));
  }
  const double mc = testsupport::median(kc), md = testsupport::median(kd);
  MESSAGE("median first decay: coupling " << mc << ", distance " << md);
  CHECK(md <= 3.0 * mc);
  CHECK(md >= mc / 3.0);
}

}
