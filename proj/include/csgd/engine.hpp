#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "csgd/controllers.hpp"
#include "csgd/problems.hpp"

namespace csgd {

struct EngineOptions {
  std::uint64_t n_iters = 100000;
  std::uint64_t trace_stride = 0;  // 0 = max(1, n_iters / 100)
  double init_scale = 1.0;         // std of the auxiliary start offset
  double divergence_threshold = 1e12;
};

// Stream ids for one run. All share the master seed as Philox key.
struct RunStreams {
  std::uint64_t seed = 0;
  std::uint64_t data = 0;
  std::uint64_t init = 1;
  std::uint64_t perturbation = 2;
};

struct CoupledState {
  Vec theta1;
  Vec theta2;  // empty when the auxiliary iterate is not tracked
  std::uint64_t k = 0;
  double D0_sq = 0.0;
  std::deque<Vec> history;  // oldest first, newest == theta2
  Vec avg1;
  std::uint32_t chain_state = 0;
  Vec g_prev;  // last primary stochastic gradient
  std::uint64_t perturbations = 0;
};

struct TraceRecord {
  std::uint64_t k = 0;
  double gamma = 0.0;
  double statistic = 0.0;  // NaN where the controller has none
  double err = 0.0;        // |theta1 - theta*|^2
  double err_avg = 0.0;    // |avg - theta*|^2, NaN without averaging
  double gap_avg = 0.0;    // f(avg) - f*, NaN without averaging or objective
  double dist = 0.0;       // |theta1 - theta2|^2, NaN without an auxiliary iterate
  bool restart = false;    // a decay happened since the previous record
};

struct RunTrace {
  TraceRecord initial;
  std::vector<TraceRecord> records;
  std::vector<RestartEvent> restarts;
  bool diverged = false;
  std::string failure;
  std::uint64_t final_k = 0;
  Vec final_theta;
  Vec final_avg;
};

// One coupled SGD run under a controller. Advancing is deterministic in
// (problem, params, options, streams).
class CoupledRun {
 public:
  CoupledRun(ProblemPtr problem, ControllerParams params, EngineOptions opts, RunStreams streams);

  // One iteration: step, average, divergence check, controller, reinit.
  // Returns false once the run has diverged.
  bool step();
  // Advance to n_iters (or divergence) and return the trace.
  RunTrace run();

  const CoupledState& state() const noexcept { return st_; }
  const ControllerState& controller() const noexcept { return ctl_; }
  const ControllerParams& params() const noexcept { return params_; }
  const Problem& problem() const noexcept { return *problem_; }
  bool diverged() const noexcept { return diverged_; }
  double gamma_last() const noexcept { return gamma_last_; }

  TraceRecord snapshot() const;

 private:
  void reinit_auxiliary();
  void push_history();
  BatchToken token() const;

  ProblemPtr problem_;
  ControllerParams params_;
  EngineOptions opts_;
  RunStreams streams_;
  CoupledState st_;
  ControllerState ctl_;
  bool coupled_ = false;
  bool diverged_ = false;
  std::string failure_;
  double gamma_last_ = 0.0;
  std::vector<Vec> grads_;
  bool restart_pending_ = false;
};

// Resolves "auto" controller fields (gamma0, mu, tau) from the problem.
ControllerParams resolve_params(ControllerParams p, const Problem& problem);

RunTrace run_engine(ProblemPtr problem, const ControllerParams& params, const EngineOptions& opts,
                    const RunStreams& streams);

}  // namespace csgd
