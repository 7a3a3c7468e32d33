#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "csgd/numkit.hpp"

namespace csgd {

enum class ControllerKind { CouplingStatic, CouplingAdaptive, DistanceBased, Pflug, FixedSchedule };
enum class ScheduleKind { Constant, InvSqrt, InvMuK, UniformOpt };

std::string_view to_string(ControllerKind kind);
std::string_view to_string(ScheduleKind kind);
std::optional<ControllerKind> parse_controller_kind(std::string_view name);
std::optional<ScheduleKind> parse_schedule_kind(std::string_view name);

struct ControllerParams {
  ControllerKind kind = ControllerKind::CouplingStatic;
  double gamma0 = 0.0;  // 0 = take the problem's default
  double r = 0.5;
  std::uint64_t b = 100;
  double beta0 = 1e-2;
  double eta = 0.75;
  std::uint64_t check_every = 1;
  // Iterations into a phase before a decay may fire. Unset: 0 for coupling,
  // min(2/(gamma mu), 1e4) for Pflug and min(1/(gamma mu), 1e4) for the
  // distance rule, with gamma the current phase's stepsize.
  std::optional<std::uint64_t> burn_in;
  std::uint32_t patience = 1;  // consecutive triggering checks required
  bool global_d0 = false;      // keep the first-phase denominator across restarts

  double q = 1.5;                // distance rule checkpoint ratio
  double slope_threshold = 0.5;  // distance rule log-log slope cutoff

  ScheduleKind schedule = ScheduleKind::Constant;
  double C = 1.0;
  std::optional<double> mu;         // InvMuK and the Pflug burn-in; unset = problem constant
  std::optional<double> tau;        // UniformOpt exponent; unset = problem's 1 - 2/p
  std::optional<double> gamma_max;  // optional cap on scheduled stepsizes

  bool average = true;
  bool track_distance = false;  // run the auxiliary iterate under non-coupling controllers
};

inline constexpr std::uint64_t kPflugBurnInCap = 10000;
inline constexpr double kDistanceBurnInScale = 1.0;
inline constexpr std::uint64_t kDistanceBurnInCap = 10000;

bool is_coupling(ControllerKind kind) noexcept;

// Throws ErrorCode::Config naming the offending field.
void validate(const ControllerParams& p);

struct RestartEvent {
  std::uint64_t k = 0;
  double old_gamma = 0.0;
  double new_gamma = 0.0;
  double statistic = 0.0;
};

struct Decision {
  bool decay = false;
  double new_gamma = 0.0;
  bool reinit_auxiliary = false;
  double statistic = 0.0;
};

struct ControllerState {
  double gamma_current = 0.0;
  double beta_current = 0.0;
  double D0_sq = 0.0;
  double D0_sq_global = 0.0;
  std::uint32_t phase_index = 0;
  std::uint64_t phase_start = 0;  // iteration at which the current phase began
  std::uint32_t streak = 0;
  double last_statistic = 0.0;

  double pflug_sum = 0.0;
  std::uint64_t pflug_count = 0;

  Vec anchor;
  std::uint32_t next_checkpoint_j = 0;
  std::uint64_t prev_checkpoint_k = 0;  // phase-relative; 0 = none yet
  double prev_checkpoint_omega = 0.0;

  std::vector<RestartEvent> restart_log;
};

// gamma0 must already be resolved (> 0).
ControllerState init_controller(const ControllerParams& p);

// Stepsize for the update that produces theta_k (k >= 1).
double step_size(const ControllerState& s, const ControllerParams& p, std::uint64_t k);

double fixed_schedule(const ControllerParams& p, std::uint64_t k);

// Each observe call sees the state after step k. On Decay the state has
// already moved to the next phase (gamma, beta, restart log, accumulators);
// the caller re-arms D0_sq after re-initializing the auxiliary iterate.
Decision coupling_observe(ControllerState& s, const ControllerParams& p, const Vec& theta1,
                          const Vec& theta2, std::uint64_t k);
Decision pflug_observe(ControllerState& s, const ControllerParams& p, const Vec& g_prev,
                       const Vec& g_curr, std::uint64_t k);
Decision distance_observe(ControllerState& s, const ControllerParams& p, const Vec& theta,
                          std::uint64_t k);

void rearm_d0(ControllerState& s, const ControllerParams& p, double d0_sq);

// Burn-in in effect for the current phase.
std::uint64_t effective_burn_in(const ControllerState& s, const ControllerParams& p);

}  // namespace csgd
