#include "csgd/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "csgd/engine.hpp"

namespace csgd {

double contraction_rate(double gamma, double mu, double L) {
  if (!(L > 0.0) || !(gamma > 0.0 && gamma < 2.0 / L))
    fail(ErrorCode::InvalidArgument, "contraction_rate needs gamma in (0, 2/L)");
  return 1.0 - 2.0 * gamma * mu * (1.0 - gamma * L / 2.0);
}

double varrho(double gamma, double L, double mu) {
#ifdef CSGD_FAULT_FLIP_VARRHO
  return 1.0 + 2.0 * gamma * L + gamma * gamma * mu * mu;
#else
  return 1.0 - 2.0 * gamma * L + gamma * gamma * mu * mu;
#endif
}

double lemma1_gamma0(double L, double mu) {
  if (!(mu > 0.0) || !(L >= mu)) fail(ErrorCode::InvalidArgument, "need L >= mu > 0");
  return std::min(1.0 / (4.0 * L), 2.0 * L / mu);
}

double lemma1_k0(double L, double mu) {
  if (!(mu > 0.0) || !(L >= mu)) fail(ErrorCode::InvalidArgument, "need L >= mu > 0");
  return 4.0 * L / mu;
}

double dk_closed_form(const Mat& H, double gamma, const Vec& D0, std::uint64_t k) {
  if (!H.square() || H.rows() != D0.size())
    fail(ErrorCode::DimensionMismatch, "dk_closed_form: H and D0 shapes differ");
  const double L = power_iteration_extreme_eigs(H).lambda_max;
  if (!(gamma > 0.0 && gamma < 1.0 / L))
    fail(ErrorCode::InvalidArgument, "dk_closed_form needs gamma in (0, 1/L)");
  Vec v = D0;
  for (std::uint64_t i = 0; i < k; ++i) axpy(-gamma, matvec(H, v), v);
  return norm_sq(v);
}

Lemma1Report lemma1_check(double L, double mu, std::size_t grid_size) {
  if (grid_size < 2) fail(ErrorCode::InvalidArgument, "lemma1_check needs at least 2 points");
  Lemma1Report rep;
  rep.gamma0 = lemma1_gamma0(L, mu);
  rep.k0 = lemma1_k0(L, mu);
  rep.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double g = rep.gamma0 * static_cast<double>(i) / static_cast<double>(grid_size - 1);
    const double lhs = std::pow(1.0 - g * mu, rep.k0);
    const double rhs = 1.0 - 2.0 * g * L + g * g * mu;
    if (rhs - lhs < rep.worst_margin) {
      rep.worst_margin = rhs - lhs;
      rep.worst_gamma = g;
    }
  }
  rep.pass = rep.worst_margin >= -1e-12;
  return rep;
}

double theorem1_floor(double gamma, double L, double mu, std::uint64_t k) {
  const double g0 = lemma1_gamma0(L, mu);
  if (!(gamma > 0.0 && gamma <= g0))
    fail(ErrorCode::InvalidArgument, "theorem1_floor needs gamma in (0, gamma0]");
  return std::pow(varrho(gamma, L, mu), static_cast<double>(k));
}

StationaryEstimate stationary_error_estimate(const ProblemPtr& problem, double gamma,
                                             std::uint64_t horizon, double tail_frac,
                                             std::size_t reps, std::uint64_t seed) {
  const auto& c = problem->constants();
  if (!(c.mu > 0.0)) fail(ErrorCode::InvalidArgument, "stationary estimate needs mu > 0");
  if (!(tail_frac > 0.0 && tail_frac <= 1.0))
    fail(ErrorCode::InvalidArgument, "tail_frac must lie in (0, 1]");
  if (reps < 2) fail(ErrorCode::InvalidArgument, "need at least two replications");
  const double rho = contraction_rate(gamma, c.mu, c.L);
  const double burn = static_cast<double>(horizon) * (1.0 - tail_frac);
  if (!(std::pow(rho, burn) < 1e-3))
    fail(ErrorCode::InvalidArgument, "horizon too short: rho^(horizon (1 - tail)) >= 1e-3");
  const auto tail_start = static_cast<std::uint64_t>(std::floor(burn));

  ControllerParams params;
  params.kind = ControllerKind::FixedSchedule;
  params.schedule = ScheduleKind::Constant;
  params.gamma0 = gamma;
  params.average = false;
  EngineOptions opts;
  opts.n_iters = horizon;
  const Vec& ts = problem->reference().theta_star;

  StationaryEstimate est;
  for (std::size_t r = 0; r < reps; ++r) {
    const std::uint64_t base = 0x4000000000000000ull | (static_cast<std::uint64_t>(r) << 4);
    CoupledRun run(problem, params, opts, RunStreams{seed, base, base + 1, base + 2});
    double sum = 0.0;
    std::uint64_t count = 0;
    while (run.state().k < horizon) {
      if (!run.step()) fail(ErrorCode::Diverged, "stationary chain diverged");
      if (run.state().k > tail_start) {
        sum += dist_sq(run.state().theta1, ts);
        ++count;
      }
    }
    est.rep_means.push_back(sum / static_cast<double>(count));
  }
  double m = 0.0;
  for (double v : est.rep_means) m += v;
  m /= static_cast<double>(reps);
  double ss = 0.0;
  for (double v : est.rep_means) ss += (v - m) * (v - m);
  est.mean = m;
  est.stderr_ = std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps));
  est.ci_lo = m - 3.0 * est.stderr_;
  est.ci_hi = m + 3.0 * est.stderr_;
  return est;
}

double proximity_ratio_quadratic(const Mat& H, double gamma, const Vec& D0, std::uint64_t k) {
  // The top eigenvector of I - gamma H is the bottom one of H.
  const Vec q = power_iteration_extreme_eigs(H, 1e-14).q_min;
  const double proj = dot(D0, q);
  if (std::abs(proj) <= 1e-12 * norm(D0))
    fail(ErrorCode::DegenerateDirection, "D0 is orthogonal to the top eigenvector");
  return dk_closed_form(H, gamma, D0, k) / (proj * proj);
}

double ar1_stationary_error(std::size_t d, double gamma, double h, double c) {
  return static_cast<double>(d) * gamma * c * c / (2.0 * h - gamma * h * h);
}

// ---------------------------------------------------------------------------
// verify suite

namespace {

using nlohmann::json;

ProblemPtr random_quadratic(std::uint64_t seed, std::size_t d, double h_min, double h_max) {
  ProblemOptions o;
  o.kind = ProblemKind::Quadratic;
  o.d = d;
  o.seed = seed;
  o.h_min = h_min;
  o.h_max = h_max;
  return make_problem(o);
}

CheckResult check_coupling_identity() {
  CheckResult r{"coupling_identity", true, "", 0.0};
  double worst = 0.0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const ProblemPtr p = random_quadratic(seed, 5, 0.1, 1.0);
    const Mat& H = std::get<QuadraticParams>(p->params()).H;
    const double gamma = 0.05 / p->constants().L;
    ControllerParams cp;
    cp.kind = ControllerKind::FixedSchedule;
    cp.gamma0 = gamma;
    cp.track_distance = true;
    cp.average = false;
    EngineOptions eo;
    eo.n_iters = 1000;
    CoupledRun run(p, cp, eo, RunStreams{seed, 100, 101, 102});
    Vec v = run.state().theta1 - run.state().theta2;
    while (run.state().k < 1000) {
      run.step();
      axpy(-gamma, matvec(H, v), v);
      const double measured = dist_sq(run.state().theta1, run.state().theta2);
      const double exact = norm_sq(v);
      worst = std::max(worst, std::abs(measured - exact) / exact);
    }
  }
  r.pass = worst <= 1e-10;
  r.detail = json{{"max_rel_err", worst}, {"tol", 1e-10}, {"k_max", 1000}}.dump();
  return r;
}

CheckResult check_spectral_sandwich() {
  CheckResult r{"spectral_sandwich", true, "", 0.0};
  RngStream rng(2024, 0);
  std::size_t violations = 0;
  std::size_t evaluated = 0;
  for (int inst = 0; inst < 20; ++inst) {
    // Condition numbers in [5, 100] keep every bound above the underflow range.
    const double kappa = 5.0 + 95.0 * rng.uniform();
    const double L = 0.5 + 2.0 * rng.uniform();
    const ProblemPtr p = random_quadratic(1000 + inst, 5, L / kappa, L);
    const Mat& H = std::get<QuadraticParams>(p->params()).H;
    const auto e = power_iteration_extreme_eigs(H);
    const Vec D0 = gaussian(rng, 5, Isotropic{1.0});
    const double d0 = norm_sq(D0);
    for (double frac : {0.1, 0.5, 0.9}) {
      const double gamma = frac / e.lambda_max;
      Vec v = D0;
      for (std::uint64_t k = 1; k <= 1000; ++k) {
        axpy(-gamma, matvec(H, v), v);
        const double dk = norm_sq(v);
        const double kk = 2.0 * static_cast<double>(k);
        const double lo = std::pow(1.0 - gamma * e.lambda_max, kk) * d0;
        const double hi = std::pow(1.0 - gamma * e.lambda_min, kk) * d0;
        ++evaluated;
        if (!(lo <= dk && dk <= hi)) ++violations;
      }
    }
  }
  r.pass = violations == 0;
  r.detail = json{{"instances", 20}, {"evaluated", evaluated}, {"violations", violations}}.dump();
  return r;
}

CheckResult check_lemma1() {
  CheckResult r{"lemma1", true, "", 0.0};
  RngStream rng(77, 0);
  double worst = std::numeric_limits<double>::infinity();
  std::size_t failures = 0;
  std::vector<std::pair<double, double>> pairs{{1.0, 0.1}, {10.0, 10.0}};
  for (int i = 0; i < 20; ++i) {
    const double L = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
    const double mu = L * std::pow(10.0, -4.0 * rng.uniform());
    pairs.emplace_back(L, mu);
  }
  for (auto [L, mu] : pairs) {
    const Lemma1Report rep = lemma1_check(L, mu, 10000);
    worst = std::min(worst, rep.worst_margin);
    if (!rep.pass) ++failures;
  }
  r.pass = failures == 0;
  r.detail = json{{"pairs", pairs.size()}, {"grid", 10000}, {"worst_margin", worst},
                  {"failures", failures}}
                 .dump();
  return r;
}

CheckResult check_theorem1_floor() {
  CheckResult r{"theorem1_floor", true, "", 0.0};
  ProblemOptions o;
  o.kind = ProblemKind::Logistic;
  o.d = 5;
  o.n = 100000;
  o.seed = 5;
  const ProblemPtr p = make_problem(o);
  const double L = p->constants().L;
  const double mu = p->constants().mu;
  const double gamma = 1.0 / (8.0 * L);
  ControllerParams cp;
  cp.kind = ControllerKind::FixedSchedule;
  cp.gamma0 = gamma;
  cp.track_distance = true;
  cp.average = false;
  EngineOptions eo;
  eo.n_iters = 10000;
  constexpr std::size_t kReps = 50;
  constexpr std::uint64_t kStride = 10;
  const std::size_t points = eo.n_iters / kStride + 1;
  std::vector<double> sum(points, 0.0), sum_sq(points, 0.0);
  for (std::size_t rep = 0; rep < kReps; ++rep) {
    const std::uint64_t base = 0x2000000000000000ull | (rep << 4);
    CoupledRun run(p, cp, eo, RunStreams{o.seed, base, base + 1, base + 2});
    auto record = [&](std::size_t idx) {
      const double v = dist_sq(run.state().theta1, run.state().theta2);
      sum[idx] += v;
      sum_sq[idx] += v * v;
    };
    record(0);
    while (run.state().k < eo.n_iters) {
      run.step();
      if (run.state().k % kStride == 0) record(run.state().k / kStride);
    }
  }
  const double n = static_cast<double>(kReps);
  const double mean0 = sum[0] / n;
  std::size_t violations = 0;
  std::uint64_t first_bad = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points; ++i) {
    const double m = sum[i] / n;
    const double var = std::max(0.0, (sum_sq[i] - n * m * m) / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double floor = theorem1_floor(gamma, L, mu, i * kStride) * mean0;
    tightest = std::min(tightest, m + 3.0 * se - floor);
    if (!(m >= floor - 3.0 * se)) {
      if (violations == 0) first_bad = i * kStride;
      ++violations;
    }
  }
  // The chaining step of the proof: varrho^k >= (1 - gamma mu)^{k tau}, tau = 4L/mu.
  std::size_t chain_failures = 0;
  for (int i = 1; i <= 200; ++i) {
    const double g = lemma1_gamma0(L, mu) * i / 200.0;
    const double tau = 4.0 * L / mu;
    for (std::uint64_t k : {1u, 10u, 100u}) {
      const double lhs = std::pow(varrho(g, L, mu), static_cast<double>(k));
      const double rhs = std::pow(1.0 - g * mu, static_cast<double>(k) * tau);
      if (lhs < rhs) ++chain_failures;
    }
  }
  r.pass = violations == 0 && chain_failures == 0;
  r.detail = json{{"reps", kReps},
                  {"gamma", gamma},
                  {"varrho", varrho(gamma, L, mu)},
                  {"violations", violations},
                  {"first_violation_k", first_bad},
                  {"min_slack", tightest},
                  {"chain_failures", chain_failures}}
                 .dump();
  return r;
}

CheckResult check_stationary_ar1() {
  CheckResult r{"stationary_ar1", true, "", 0.0};
  constexpr double h = 1.0;
  constexpr double c = 1.0;
  constexpr std::size_t d = 5;
  ProblemOptions o;
  o.kind = ProblemKind::Quadratic;
  o.d = d;
  o.seed = 9;
  o.isotropic_h = h;
  o.noise_scale = c;
  const ProblemPtr p = make_problem(o);
  json detail = json::array();
  bool ok = true;
  std::vector<double> means;
  for (double frac : {0.01, 0.005}) {
    const double gamma = frac / h;
    const StationaryEstimate est = stationary_error_estimate(p, gamma, 200000, 0.2, 10, 9);
    const double exact = ar1_stationary_error(d, gamma, h, c);
    const bool inside = est.ci_lo <= exact && exact <= est.ci_hi;
    ok = ok && inside;
    means.push_back(est.mean);
    detail.push_back({{"gamma", gamma}, {"estimate", est.mean}, {"stderr", est.stderr_},
                      {"closed_form", exact}, {"inside_ci", inside}});
  }
  // Halving gamma should halve the error: the two-point slope is 2 ideally.
  const double ratio = means[0] / means[1];
  const bool linear = std::abs(ratio / 2.0 - 1.0) <= 0.25;
  r.pass = ok && linear;
  r.detail = json{{"points", detail}, {"ratio", ratio}, {"linear_within_25pct", linear}}.dump();
  return r;
}

CheckResult check_contraction() {
  CheckResult r{"contraction_rate", true, "", 0.0};
  const double L = 2.0, mu = 0.5;
  const std::size_t n = 20000;
  const double cell = (2.0 / L) / static_cast<double>(n);
  double best = 2.0, arg = 0.0;
  bool below_one = true;
  for (std::size_t i = 1; i < n; ++i) {
    const double g = cell * static_cast<double>(i);
    const double rho = contraction_rate(g, mu, L);
    below_one = below_one && rho < 1.0;
    if (rho < best) {
      best = rho;
      arg = g;
    }
  }
  const bool at_inv_l = std::abs(arg - 1.0 / L) <= cell;
  const bool example = std::abs(contraction_rate(0.1, 1.0, 2.0) - 0.82) <= 1e-15;
  r.pass = below_one && at_inv_l && example;
  r.detail = json{{"argmin", arg}, {"one_over_L", 1.0 / L}, {"rho_lt_1", below_one},
                  {"example_0.82", example}}
                 .dump();
  return r;
}

CheckResult check_proximity() {
  CheckResult r{"proximity_ratio", true, "", 0.0};
  RngStream rng(31, 0);
  std::size_t violations = 0;
  for (int inst = 0; inst < 10; ++inst) {
    const ProblemPtr p = random_quadratic(3000 + inst, 5, 0.1, 1.0);
    const Mat& H = std::get<QuadraticParams>(p->params()).H;
    const auto e = power_iteration_extreme_eigs(H);
    const double gamma = 0.5 / e.lambda_max;
    const Vec D0 = gaussian(rng, 5, Isotropic{1.0});
    for (std::uint64_t k : {1u, 10u, 100u}) {
      const double ratio = proximity_ratio_quadratic(H, gamma, D0, k);
      const double bound = std::pow(1.0 - gamma * e.lambda_min, 2.0 * static_cast<double>(k));
      if (!(ratio >= bound * (1.0 - 1e-12))) ++violations;
    }
  }
  r.pass = violations == 0;
  r.detail = json{{"instances", 10}, {"violations", violations}}.dump();
  return r;
}

struct NamedCheck {
  const char* name;
  CheckResult (*fn)();
};

constexpr NamedCheck kChecks[] = {
    {"coupling_identity", check_coupling_identity}, {"spectral_sandwich", check_spectral_sandwich},
    {"lemma1", check_lemma1},                 {"theorem1_floor", check_theorem1_floor},
    {"stationary_ar1", check_stationary_ar1}, {"contraction_rate", check_contraction},
    {"proximity_ratio", check_proximity},
};

}  // namespace

std::vector<std::string> verify_check_names() {
  std::vector<std::string> names;
  for (const auto& c : kChecks) names.emplace_back(c.name);
  return names;
}

std::vector<CheckResult> run_verify(const std::vector<std::string>& only,
                                    const std::function<void(const CheckResult&)>& sink) {
  for (const auto& name : only) {
    bool known = false;
    for (const auto& c : kChecks) known = known || name == c.name;
    if (!known) fail(ErrorCode::InvalidArgument, "unknown verify check '" + name + "'");
  }
  std::vector<CheckResult> results;
  for (const auto& c : kChecks) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult res;
    try {
      res = c.fn();
    } catch (const Error& e) {
      res = {c.name, false, json{{"error", e.what()}}.dump(), 0.0};
    }
    res.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sink) sink(res);
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace csgd
