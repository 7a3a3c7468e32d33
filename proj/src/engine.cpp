#include "csgd/engine.hpp"

#include <cmath>
#include <limits>

namespace csgd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double reinit_floor(const Vec& theta1) { return 1e-12 * std::max(1.0, norm_sq(theta1)); }

}  // namespace

ControllerParams resolve_params(ControllerParams p, const Problem& problem) {
  validate(p);
  if (p.gamma0 == 0.0) p.gamma0 = problem.default_gamma0();
  if (!p.mu) p.mu = problem.constants().mu;
  if (!p.tau) {
    const auto* uc = std::get_if<UniformConvexParams>(&problem.params());
    p.tau = uc ? uc->tau_exp : 0.0;
  }
  if (!(p.gamma0 > 0.0) || !std::isfinite(p.gamma0))
    fail(ErrorCode::Config, "gamma0: resolved value is not positive");
  if (p.kind == ControllerKind::FixedSchedule && p.schedule == ScheduleKind::InvMuK &&
      !(*p.mu > 0.0))
    fail(ErrorCode::Config, "mu: inv_mu_k needs mu > 0 and the problem has none");
  return p;
}

CoupledRun::CoupledRun(ProblemPtr problem, ControllerParams params, EngineOptions opts,
                       RunStreams streams)
    : problem_(std::move(problem)), opts_(opts), streams_(streams) {
  if (!problem_) fail(ErrorCode::InvalidArgument, "null problem");
  if (!(opts_.init_scale >= 0.0)) fail(ErrorCode::Config, "init_scale must be non-negative");
  if (!(opts_.divergence_threshold > 0.0))
    fail(ErrorCode::Config, "divergence_threshold must be positive");
  params_ = resolve_params(params, *problem_);
  ctl_ = init_controller(params_);
  ctl_.last_statistic = kNaN;
  coupled_ = is_coupling(params_.kind) || params_.track_distance;

  const std::size_t d = problem_->dim();
  st_.theta1 = problem_->initial_point();
  RngStream init(streams_.seed, streams_.init);
  const Vec offset = gaussian(init, d, Isotropic{opts_.init_scale * opts_.init_scale});
  st_.chain_state = problem_->initial_chain_state(init);
  if (coupled_) {
    st_.theta2 = st_.theta1 + offset;
    push_history();
    st_.D0_sq = dist_sq(st_.theta1, st_.theta2);
    if (!(st_.D0_sq >= reinit_floor(st_.theta1))) {
      st_.history.clear();
      reinit_auxiliary();
    }
    rearm_d0(ctl_, params_, st_.D0_sq);
    if (is_coupling(params_.kind)) ctl_.last_statistic = 1.0;
  }
  if (params_.kind == ControllerKind::DistanceBased) ctl_.anchor = st_.theta1;
  if (params_.average) st_.avg1 = st_.theta1;
  grads_.resize(coupled_ ? 2 : 1);
}

BatchToken CoupledRun::token() const {
  return {streams_.seed, streams_.data, st_.k * problem_->draws_per_batch(), st_.chain_state};
}

void CoupledRun::push_history() {
  st_.history.push_back(st_.theta2);
  while (st_.history.size() > params_.b + 1) st_.history.pop_front();
}

// theta2 <- theta2_{k-b} (the oldest stored entry when fewer exist). The
// newest history slot is overwritten so history[newest] == theta2 holds.
void CoupledRun::reinit_auxiliary() {
  if (!st_.history.empty()) {
    st_.theta2 = st_.history.front();
    st_.history.back() = st_.theta2;
  }
  st_.D0_sq = dist_sq(st_.theta1, st_.theta2);
  if (st_.D0_sq < reinit_floor(st_.theta1)) {
    const std::size_t d = problem_->dim();
    RngStream rng(streams_.seed, streams_.perturbation,
                  st_.perturbations * RngStream::normal_draws(d));
    ++st_.perturbations;
    const Vec z = gaussian(rng, d, Isotropic{1.0});
    st_.theta2 = st_.theta1;
    axpy(std::sqrt(ctl_.gamma_current), z, st_.theta2);
    if (st_.history.empty()) {
      st_.history.push_back(st_.theta2);
    } else {
      st_.history.back() = st_.theta2;
    }
    st_.D0_sq = dist_sq(st_.theta1, st_.theta2);
  }
}

bool CoupledRun::step() {
  if (diverged_) return false;
  const std::uint64_t k = st_.k + 1;
  const double gamma = step_size(ctl_, params_, k);
  gamma_last_ = gamma;
  const BatchToken tok = token();

  const Vec* thetas[2] = {&st_.theta1, &st_.theta2};
  try {
    problem_->gradients(tok, std::span<const Vec* const>(thetas, grads_.size()), grads_);
    axpy(-gamma, grads_[0], st_.theta1);
    if (coupled_) axpy(-gamma, grads_[1], st_.theta2);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NumericOverflow) throw;
    diverged_ = true;
    failure_ = "non-finite iterate at k = " + std::to_string(k);
  }
  if (problem_->kind() == ProblemKind::Lsa) st_.chain_state = problem_->next_chain_state(tok);
  st_.k = k;
  if (!diverged_) {
    const bool finite = all_finite(st_.theta1.span()) &&
                        (!coupled_ || all_finite(st_.theta2.span()));
    if (!finite || norm_sq(st_.theta1) > opts_.divergence_threshold ||
        (coupled_ && norm_sq(st_.theta2) > opts_.divergence_threshold)) {
      diverged_ = true;
      failure_ = "iterate norm exceeded the divergence threshold at k = " + std::to_string(k);
    }
  }
  if (diverged_) return false;
  if (coupled_) push_history();
  if (params_.average) {
    const double w = 1.0 / static_cast<double>(k);
    for (std::size_t j = 0; j < st_.avg1.size(); ++j)
      st_.avg1[j] += (st_.theta1[j] - st_.avg1[j]) * w;
  }

  Decision dec;
  switch (params_.kind) {
    case ControllerKind::CouplingStatic:
    case ControllerKind::CouplingAdaptive:
      dec = coupling_observe(ctl_, params_, st_.theta1, st_.theta2, k);
      break;
    case ControllerKind::Pflug:
      if (!st_.g_prev.empty()) dec = pflug_observe(ctl_, params_, st_.g_prev, grads_[0], k);
      break;
    case ControllerKind::DistanceBased:
      dec = distance_observe(ctl_, params_, st_.theta1, k);
      break;
    case ControllerKind::FixedSchedule:
      break;
  }
  if (params_.kind == ControllerKind::Pflug) st_.g_prev = grads_[0];
  if (dec.decay) {
    restart_pending_ = true;
    if (dec.reinit_auxiliary) {
      reinit_auxiliary();
      rearm_d0(ctl_, params_, st_.D0_sq);
    } else if (coupled_) {
      st_.D0_sq = dist_sq(st_.theta1, st_.theta2);
    }
    if (params_.kind == ControllerKind::Pflug) st_.g_prev = Vec();
  }
  return true;
}

TraceRecord CoupledRun::snapshot() const {
  TraceRecord r;
  r.k = st_.k;
  r.gamma = st_.k == 0 ? step_size(ctl_, params_, 1) : gamma_last_;
  r.statistic = params_.kind == ControllerKind::FixedSchedule ? kNaN : ctl_.last_statistic;
  const Vec& ts = problem_->reference().theta_star;
  r.err = dist_sq(st_.theta1, ts);
  r.err_avg = kNaN;
  r.gap_avg = kNaN;
  if (params_.average) {
    r.err_avg = dist_sq(st_.avg1, ts);
    if (auto g = problem_->objective_gap(st_.avg1)) r.gap_avg = *g;
  }
  r.dist = coupled_ ? dist_sq(st_.theta1, st_.theta2) : kNaN;
  r.restart = restart_pending_;
  return r;
}

RunTrace CoupledRun::run() {
  RunTrace trace;
  trace.initial = snapshot();
  trace.initial.restart = false;
  const std::uint64_t stride =
      opts_.trace_stride > 0 ? opts_.trace_stride : std::max<std::uint64_t>(1, opts_.n_iters / 100);
  restart_pending_ = false;
  while (st_.k < opts_.n_iters) {
    if (!step()) break;
    if (st_.k % stride == 0 || st_.k == opts_.n_iters) {
      trace.records.push_back(snapshot());
      restart_pending_ = false;
    }
  }
  if (diverged_) {
    trace.diverged = true;
    trace.failure = failure_;
    TraceRecord r;
    r.k = st_.k;
    r.gamma = gamma_last_;
    r.statistic = kNaN;
    r.err = std::numeric_limits<double>::infinity();
    r.err_avg = kNaN;
    r.gap_avg = kNaN;
    r.dist = kNaN;
    r.restart = restart_pending_;
    trace.records.push_back(r);
  }
  trace.restarts = ctl_.restart_log;
  trace.final_k = st_.k;
  trace.final_theta = st_.theta1;
  trace.final_avg = st_.avg1;
  return trace;
}

RunTrace run_engine(ProblemPtr problem, const ControllerParams& params, const EngineOptions& opts,
                    const RunStreams& streams) {
  CoupledRun run(std::move(problem), params, opts, streams);
  return run.run();
}

}  // namespace csgd
