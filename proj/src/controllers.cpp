#include "csgd/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace csgd {

std::string_view to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::CouplingStatic: return "coupling_static";
    case ControllerKind::CouplingAdaptive: return "coupling_adaptive";
    case ControllerKind::DistanceBased: return "distance";
    case ControllerKind::Pflug: return "pflug";
    case ControllerKind::FixedSchedule: return "fixed";
  }
  return "unknown";
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::InvSqrt: return "inv_sqrt";
    case ScheduleKind::InvMuK: return "inv_mu_k";
    case ScheduleKind::UniformOpt: return "uniform_opt";
  }
  return "unknown";
}

std::optional<ControllerKind> parse_controller_kind(std::string_view name) {
  for (ControllerKind k : {ControllerKind::CouplingStatic, ControllerKind::CouplingAdaptive,
                           ControllerKind::DistanceBased, ControllerKind::Pflug,
                           ControllerKind::FixedSchedule})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::optional<ScheduleKind> parse_schedule_kind(std::string_view name) {
  for (ScheduleKind k : {ScheduleKind::Constant, ScheduleKind::InvSqrt, ScheduleKind::InvMuK,
                         ScheduleKind::UniformOpt})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

bool is_coupling(ControllerKind kind) noexcept {
  return kind == ControllerKind::CouplingStatic || kind == ControllerKind::CouplingAdaptive;
}

void validate(const ControllerParams& p) {
  auto bad = [](const char* field, const std::string& why) {
    fail(ErrorCode::Config, std::string(field) + ": " + why);
  };
  if (!(p.gamma0 >= 0.0) || !std::isfinite(p.gamma0)) bad("gamma0", "must be positive");
  if (!(p.r > 0.0 && p.r < 1.0)) bad("r", "must lie in (0, 1)");
  if (!(p.beta0 > 0.0 && p.beta0 < 1.0)) bad("beta0", "must lie in (0, 1)");
  if (!(p.eta > 0.0 && p.eta <= 1.0)) bad("eta", "must lie in (0, 1]");
  if (p.check_every == 0) bad("check_every", "must be at least 1");
  if (p.patience == 0) bad("patience", "must be at least 1");
  if (!(p.q > 1.0)) bad("q", "must exceed 1");
  if (!std::isfinite(p.slope_threshold)) bad("slope_threshold", "must be finite");
  if (!(p.C > 0.0)) bad("C", "must be positive");
  if (p.mu && !(*p.mu >= 0.0)) bad("mu", "must be non-negative");
  if (p.tau && !(*p.tau >= 0.0)) bad("tau", "must be non-negative");
  if (p.gamma_max && !(*p.gamma_max > 0.0)) bad("gamma_max", "must be positive");
  if (p.kind == ControllerKind::FixedSchedule && p.schedule == ScheduleKind::InvMuK && p.mu &&
      *p.mu == 0.0)
    bad("mu", "inv_mu_k needs mu > 0");
}

ControllerState init_controller(const ControllerParams& p) {
  if (!(p.gamma0 > 0.0)) fail(ErrorCode::InvalidArgument, "gamma0 is not resolved");
  ControllerState s;
  s.gamma_current = p.gamma0;
  s.beta_current = p.beta0;
  return s;
}

double fixed_schedule(const ControllerParams& p, std::uint64_t k) {
  if (k == 0) fail(ErrorCode::InvalidArgument, "schedules are indexed from k = 1");
  const double kk = static_cast<double>(k);
  double g = 0.0;
  switch (p.schedule) {
    case ScheduleKind::Constant: g = p.gamma0; break;
    case ScheduleKind::InvSqrt: g = p.C / std::sqrt(kk); break;
    case ScheduleKind::InvMuK: {
      const double mu = p.mu.value_or(0.0);
      if (!(mu > 0.0)) fail(ErrorCode::InvalidArgument, "inv_mu_k needs mu > 0");
      g = 1.0 / (mu * kk);
      break;
    }
    case ScheduleKind::UniformOpt:
      g = p.C * std::pow(kk, -1.0 / (p.tau.value_or(0.0) + 1.0));
      break;
  }
  if (p.gamma_max) g = std::min(g, *p.gamma_max);
  return g;
}

double step_size(const ControllerState& s, const ControllerParams& p, std::uint64_t k) {
  if (p.kind == ControllerKind::FixedSchedule) return fixed_schedule(p, k);
  return s.gamma_current;
}

std::uint64_t effective_burn_in(const ControllerState& s, const ControllerParams& p) {
  if (p.burn_in) return *p.burn_in;
  switch (p.kind) {
    case ControllerKind::Pflug: {
      const double mu = p.mu.value_or(0.0);
      if (!(mu > 0.0)) return kPflugBurnInCap;
      const double raw = std::ceil(2.0 / (s.gamma_current * mu));
      return raw >= static_cast<double>(kPflugBurnInCap) ? kPflugBurnInCap
                                                         : static_cast<std::uint64_t>(raw);
    }
    case ControllerKind::DistanceBased: {
      const double mu = p.mu.value_or(0.0);
      if (!(mu > 0.0)) return kDistanceBurnInCap;
      const double raw = std::ceil(kDistanceBurnInScale / (s.gamma_current * mu));
      return raw >= static_cast<double>(kDistanceBurnInCap) ? kDistanceBurnInCap
                                                            : static_cast<std::uint64_t>(raw);
    }
    default: return 0;
  }
}

namespace {

bool at_check(const ControllerState& s, const ControllerParams& p, std::uint64_t k) {
  return k % p.check_every == 0 && k - s.phase_start > effective_burn_in(s, p);
}

// Applies the phase transition and returns the decay decision. Stepsize and
// threshold are recomputed from the phase index so no rounding accumulates.
Decision decay(ControllerState& s, const ControllerParams& p, std::uint64_t k, double stat,
               bool reinit) {
  const double old_gamma = s.gamma_current;
  ++s.phase_index;
  const double m = static_cast<double>(s.phase_index);
  s.gamma_current = p.gamma0 * std::pow(p.r, m);
  if (p.kind == ControllerKind::CouplingAdaptive) s.beta_current = p.beta0 * std::pow(p.eta, m);
  s.phase_start = k;
  s.streak = 0;
  s.restart_log.push_back({k, old_gamma, s.gamma_current, stat});
  return {true, s.gamma_current, reinit, stat};
}

Decision carry_on(double stat) { return {false, 0.0, false, stat}; }

}  // namespace

Decision coupling_observe(ControllerState& s, const ControllerParams& p, const Vec& theta1,
                          const Vec& theta2, std::uint64_t k) {
  if (k == 0) fail(ErrorCode::InvalidArgument, "coupling_observe needs k >= 1");
  if (!(s.D0_sq > 0.0))
    fail(ErrorCode::DegenerateDiagnostic, "phase reference distance is zero");
  const double S = dist_sq(theta1, theta2) / s.D0_sq;
  s.last_statistic = S;
  if (!at_check(s, p, k)) return carry_on(S);
  if (S < s.beta_current) {
    if (++s.streak >= p.patience) return decay(s, p, k, S, true);
  } else {
    s.streak = 0;
  }
  return carry_on(S);
}

Decision pflug_observe(ControllerState& s, const ControllerParams& p, const Vec& g_prev,
                       const Vec& g_curr, std::uint64_t k) {
  if (k == 0) fail(ErrorCode::InvalidArgument, "pflug_observe needs k >= 1");
  s.pflug_sum += dot(g_prev, g_curr);
  ++s.pflug_count;
  const double mean = s.pflug_sum / static_cast<double>(s.pflug_count);
  s.last_statistic = mean;
  if (!at_check(s, p, k)) return carry_on(mean);
  if (mean < 0.0) {
    if (++s.streak >= p.patience) {
      Decision d = decay(s, p, k, mean, false);
      s.pflug_sum = 0.0;
      s.pflug_count = 0;
      return d;
    }
  } else {
    s.streak = 0;
  }
  return carry_on(mean);
}

Decision distance_observe(ControllerState& s, const ControllerParams& p, const Vec& theta,
                          std::uint64_t k) {
  if (s.anchor.size() != theta.size())
    fail(ErrorCode::InvalidArgument, "distance rule has no anchor for this phase");
  const std::uint64_t t = k - s.phase_start;
  auto checkpoint = [&](std::uint32_t j) {
    return static_cast<std::uint64_t>(std::ceil(std::pow(p.q, static_cast<double>(j))));
  };
  while (checkpoint(s.next_checkpoint_j) < t) ++s.next_checkpoint_j;
  if (checkpoint(s.next_checkpoint_j) != t) return carry_on(s.last_statistic);
  while (checkpoint(s.next_checkpoint_j) <= t) ++s.next_checkpoint_j;

  const double omega = dist_sq(theta, s.anchor);
  if (omega == 0.0) return carry_on(s.last_statistic);
  if (s.prev_checkpoint_k == 0) {
    s.prev_checkpoint_k = t;
    s.prev_checkpoint_omega = omega;
    return carry_on(s.last_statistic);
  }
  const double slope = (std::log(omega) - std::log(s.prev_checkpoint_omega)) /
                       (std::log(static_cast<double>(t)) -
                        std::log(static_cast<double>(s.prev_checkpoint_k)));
  s.prev_checkpoint_k = t;
  s.prev_checkpoint_omega = omega;
  s.last_statistic = slope;
  if (!at_check(s, p, k)) return carry_on(slope);
  if (slope < p.slope_threshold) {
    if (++s.streak >= p.patience) {
      Decision d = decay(s, p, k, slope, false);
      s.anchor = theta;
      s.next_checkpoint_j = 0;
      s.prev_checkpoint_k = 0;
      s.prev_checkpoint_omega = 0.0;
      return d;
    }
  } else {
    s.streak = 0;
  }
  return carry_on(slope);
}

void rearm_d0(ControllerState& s, const ControllerParams& p, double d0_sq) {
  if (s.D0_sq_global == 0.0) s.D0_sq_global = d0_sq;
  s.D0_sq = p.global_d0 ? s.D0_sq_global : d0_sq;
}

}  // namespace csgd
