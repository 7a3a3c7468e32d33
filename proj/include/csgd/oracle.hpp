#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csgd/numkit.hpp"
#include "csgd/problems.hpp"

namespace csgd {

// Per-step contraction 1 - 2 gamma mu (1 - gamma L / 2); needs gamma in (0, 2/L).
double contraction_rate(double gamma, double mu, double L);

// Lower-bound factor 1 - 2 gamma L + gamma^2 mu^2 on the coupled distance.
double varrho(double gamma, double L, double mu);

// gamma0 = min{1/(4L), 2L/mu} and k0 = 4L/mu.
double lemma1_gamma0(double L, double mu);
double lemma1_k0(double L, double mu);

// D0^T (I - gamma H)^{2k} D0 by k matvecs; gamma must lie in (0, 1/L).
double dk_closed_form(const Mat& H, double gamma, const Vec& D0, std::uint64_t k);

struct Lemma1Report {
  double gamma0 = 0.0;
  double k0 = 0.0;
  double worst_margin = 0.0;  // min over the grid of RHS - LHS
  double worst_gamma = 0.0;
  bool pass = false;
};

// (1 - gamma mu)^{k0} <= 1 - 2 gamma L + gamma^2 mu on a uniform grid of
// grid_size points over [0, gamma0]; passes iff every margin >= -1e-12.
Lemma1Report lemma1_check(double L, double mu, std::size_t grid_size);

// varrho^k; gamma must lie in (0, gamma0].
double theorem1_floor(double gamma, double L, double mu, std::uint64_t k);

struct StationaryEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  double ci_lo = 0.0;  // mean -/+ 3 standard errors
  double ci_hi = 0.0;
  std::vector<double> rep_means;
};

// Mean of |theta - theta*|^2 over the last tail_frac of `horizon` constant-
// gamma iterations, averaged over reps independent chains from the default
// start. Requires mu > 0 and rho^{horizon (1 - tail_frac)} < 1e-3.
StationaryEstimate stationary_error_estimate(const ProblemPtr& problem, double gamma,
                                             std::uint64_t horizon, double tail_frac = 0.2,
                                             std::size_t reps = 10, std::uint64_t seed = 7);

// dk_closed_form / (D0^T q)^2 with q the top eigenvector of I - gamma H.
double proximity_ratio_quadratic(const Mat& H, double gamma, const Vec& D0, std::uint64_t k);

// Closed-form stationary |theta - theta*|^2 of the isotropic AR(1) recursion.
double ar1_stationary_error(std::size_t d, double gamma, double h, double c);

// Self-check suite behind the verify command.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // JSON object text with the measured quantities
  double seconds = 0.0;
};

std::vector<std::string> verify_check_names();
// Runs the checks whose names are listed (all when `only` is empty); calls
// `sink` after each so results can stream. Throws InvalidArgument for an
// unknown name.
std::vector<CheckResult> run_verify(const std::vector<std::string>& only,
                                    const std::function<void(const CheckResult&)>& sink = {});

}  // namespace csgd
