#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "csgd/numkit.hpp"

namespace csgd {

enum class ProblemKind { Logistic, LeastSquares, Svm, Lasso, UniformlyConvex, Quadratic, Lsa };

std::string_view to_string(ProblemKind kind);
std::optional<ProblemKind> parse_problem_kind(std::string_view name);

struct ProblemConstants {
  double L = 0.0;         // smoothness (local, for kinds where only that exists)
  double mu = 0.0;        // strong convexity, 0 when absent
  double sigma_sq = 0.0;  // E|eps(theta*)|^2
  double r_sq = 0.0;      // trace of the input covariance, 0 without inputs
  bool smooth = true;     // false for subgradient kinds and LSA
};

struct ReferenceSolution {
  enum class Provenance { ClosedForm, HighAccuracySolve };
  Vec theta_star;
  double f_star = 0.0;
  Provenance provenance = Provenance::ClosedForm;
};

// Identifies the randomness behind one stochastic gradient: re-creating the
// stream at (seed, stream, counter) replays the minibatch or noise draw.
struct BatchToken {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t counter = 0;
  std::uint32_t chain_state = 0;  // LSA only

  RngStream replay() const { return RngStream(seed, stream, counter); }
};

struct GradientSample {
  Vec g;
  BatchToken token;
};

struct QuadraticParams {
  Mat H;
  Vec a;
  double c = 0.0;
  Vec noise_var;  // diagonal of C
};

struct GlmParams {
  Vec h_diag;
  Vec theta_planted;
  double sigma_noise = 1.0;
};

struct SvmParams {
  double lambda = 0.1;
  double sigma_input = 1.0;
};

struct LassoParams {
  double lambda = 1e-4;
  std::size_t sparsity = 60;
  double sigma_noise = 1.0;
  Vec theta_sparse;
  Vec h_diag;
};

struct UniformConvexParams {
  double p_exp = 2.5;
  double tau_exp = 0.2;
  double noise_scale = 1.0;
  double start_radius = 0.0;
};

struct LsaParams {
  std::size_t n_states = 8;
  Mat P;
  std::vector<Mat> A;
  std::vector<Vec> b;
  Vec pi;
  Mat A_bar;
  Vec b_bar;
};

using ProblemParams = std::variant<std::monostate, QuadraticParams, GlmParams, SvmParams,
                                   LassoParams, UniformConvexParams, LsaParams>;

// Row-major samples; y may be empty for kinds without outputs.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::span<const double> row(std::size_t i) const { return {x.data() + i * d, d}; }
};

// Kind-specific knobs. Unset values take the documented defaults.
struct ProblemOptions {
  ProblemKind kind = ProblemKind::LeastSquares;
  std::size_t d = 5;
  std::size_t n = 0;  // 0 = streaming
  std::uint64_t seed = 1;
  std::size_t batch_size = 1;

  std::optional<Vec> h_diag;          // logistic, least squares, lasso
  std::optional<double> sigma_noise;  // least squares, lasso
  std::optional<double> lambda;       // svm, lasso
  std::optional<double> sigma_input;  // svm
  std::optional<std::size_t> sparsity;
  std::optional<double> p_exp;        // uniformly convex
  std::optional<double> noise_scale;  // uniformly convex, quadratic
  std::optional<double> start_radius; // uniformly convex
  std::optional<double> h_min;        // quadratic spectrum
  std::optional<double> h_max;
  std::optional<double> isotropic_h;  // quadratic: H = h I when set
  std::optional<bool> zero_linear;    // quadratic: a = 0
  std::optional<std::size_t> n_states;  // lsa
  std::optional<double> m_min;
  std::optional<double> m_max;
  std::optional<double> perturbation;
};

// An immutable stochastic objective with its oracle. Safe to share read-only.
class Problem {
 public:
  ProblemKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t batch_size() const noexcept { return batch_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const ProblemConstants& constants() const noexcept { return constants_; }
  const ReferenceSolution& reference() const noexcept { return reference_; }
  const ProblemParams& params() const noexcept { return params_; }
  const Dataset& dataset() const noexcept { return data_; }

  // Raw 64-bit draws one batch token consumes from the data stream.
  std::uint64_t draws_per_batch() const noexcept;

  // Stochastic gradients at every theta using the same token (same samples,
  // same noise). out[i] is resized to dim().
  void gradients(const BatchToken& token, std::span<const Vec* const> thetas,
                 std::span<Vec> out) const;
  GradientSample gradient(const Vec& theta, const BatchToken& token) const;

  // Next chain state drawn from row P[token.chain_state] (LSA only).
  std::uint32_t next_chain_state(const BatchToken& token) const;
  std::uint32_t initial_chain_state(RngStream& rng) const;

  // Full-batch (finite n) or population gradient. nullopt where no closed form
  // exists (streaming logistic away from the planted parameter).
  std::optional<Vec> full_gradient(const Vec& theta) const;
  // Objective value, nullopt for LSA and streaming logistic.
  std::optional<double> objective(const Vec& theta) const;
  // f(theta) - f*, computed without cancellation where a quadratic form exists.
  std::optional<double> objective_gap(const Vec& theta) const;

  Vec initial_point() const;

  // Kind-specific default initial stepsize (4/R^2, 1/(2R^2), 1/(4L), ...).
  double default_gamma0() const;

 private:
  friend std::shared_ptr<const Problem> make_problem(const ProblemOptions& opts);
  friend ReferenceSolution solve_reference(const Problem& problem);

  void sample_gradients(RngStream& rng, std::span<const Vec* const> thetas,
                        std::span<Vec> out) const;

  ProblemKind kind_ = ProblemKind::LeastSquares;
  std::size_t d_ = 0;
  std::size_t n_ = 0;
  std::size_t batch_ = 1;
  std::uint64_t seed_ = 0;
  ProblemConstants constants_;
  ReferenceSolution reference_;
  ProblemParams params_;
  Dataset data_;
  Mat gram_;    // X^T X / n, finite-n GLM kinds
  Vec xty_;     // X^T y / n
  double yy_ = 0.0;  // y^T y / n
};

using ProblemPtr = std::shared_ptr<const Problem>;

ProblemPtr make_problem(const ProblemOptions& opts);

// Reference solution: closed form (least squares, quadratic, LSA, uniformly
// convex) or a deterministic high-accuracy solve (logistic: damped Newton;
// SVM: dual coordinate ascent to a 1e-10 duality gap; lasso: proximal
// gradient with backtracking). Throws NonConvergence when a solver stalls.
ReferenceSolution solve_reference(const Problem& problem);

// Per-sample oracles, exposed for direct testing. Each returns the average
// over the rows of xs (row-major, d columns).
Vec logistic_grad(std::span<const double> xs, std::span<const double> ys, const Vec& theta);
Vec least_squares_grad(std::span<const double> xs, std::span<const double> ys, const Vec& theta);
Vec svm_subgrad(std::span<const double> xs, std::span<const double> ys, const Vec& theta,
                double lambda);
Vec lasso_subgrad(std::span<const double> xs, std::span<const double> ys, const Vec& theta,
                  double lambda);
Vec uniform_convex_grad(const Vec& theta, double p_exp, const Vec& noise);
Vec quadratic_grad(const QuadraticParams& q, const Vec& theta, const Vec& noise);

// A(x) theta + b(x) and the next Markov state sampled from row P[x].
std::pair<Vec, std::uint32_t> lsa_direction(const Problem& problem, const Vec& theta,
                                            std::uint32_t chain_state, RngStream& rng);

// Stable log(1 + exp(-z)) and 1 / (1 + exp(z)).
double log1p_exp_neg(double z);
double sigmoid_neg(double z);

// Little-endian dump: "CSGD", u32 version, u64 d, u64 n, x rows as f64, y as f64.
inline constexpr std::uint32_t kDatasetVersion = 1;
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace csgd
