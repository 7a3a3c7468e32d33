#include "csgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace csgd {

namespace {

// Problem-owned streams live in the upper half of the stream-id space so they
// can never collide with per-run streams handed out by the harness.
constexpr std::uint64_t kDataStream = 0x8000000000000001ull;
constexpr std::uint64_t kStructStream = 0x8000000000000002ull;
constexpr std::uint64_t kCertStream = 0x8000000000000003ull;

Vec default_spectrum(std::size_t d) {
  Vec h(d);
  for (std::size_t j = 0; j < d; ++j) h[j] = 1.0 / static_cast<double>(j + 1);
  return h;
}

Vec resolve_h_diag(const ProblemOptions& o) {
  Vec h = o.h_diag ? *o.h_diag : default_spectrum(o.d);
  if (h.size() != o.d) fail(ErrorCode::Config, "h_diag length must equal d");
  for (double v : h)
    if (!(v > 0.0)) fail(ErrorCode::Config, "h_diag entries must be positive");
  return h;
}

double sum(const Vec& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
Mat random_orthogonal(std::size_t d, RngStream& rng) {
  std::vector<Vec> cols;
  while (cols.size() < d) {
    Vec v = gaussian(rng, d, Isotropic{1.0});
    for (const Vec& q : cols) axpy(-dot(q, v), q, v);
    for (const Vec& q : cols) axpy(-dot(q, v), q, v);
    const double nv = norm(v);
    if (nv < 1e-8) continue;
    for (double& x : v) x /= nv;
    cols.push_back(std::move(v));
  }
  Mat q(d, d);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < d; ++i) q(i, j) = cols[j][i];
  return q;
}

Mat spd_with_spectrum(const Vec& eigs, RngStream& rng) {
  const std::size_t d = eigs.size();
  const Mat q = random_orthogonal(d, rng);
  Mat h(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += q(i, k) * eigs[k] * q(j, k);
      h(i, j) = s;
    }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double s = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = s;
      h(j, i) = s;
    }
  return h;
}

Vec linspace(double lo, double hi, std::size_t n) {
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

void gram_from(const Dataset& data, Mat& gram, Vec& xty, double& yy) {
  const std::size_t d = data.d;
  gram = Mat(d, d);
  xty = Vec(d);
  yy = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto x = data.row(i);
    const double y = data.y[i];
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = x[a];
      xty[a] += xa * y;
      double* g = &gram(a, 0);
      for (std::size_t b = a; b < d; ++b) g[b] += xa * x[b];
    }
    yy += y * y;
  }
  const double inv = 1.0 / static_cast<double>(data.n);
  for (std::size_t a = 0; a < d; ++a) {
    xty[a] *= inv;
    for (std::size_t b = a; b < d; ++b) {
      gram(a, b) *= inv;
      gram(b, a) = gram(a, b);
    }
  }
  yy *= inv;
}

double quad_form(const Mat& m, const Vec& v) { return dot(v, matvec(m, v)); }

std::uint32_t sample_categorical(std::span<const double> probs, double u) {
  double cum = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    cum += probs[j];
    if (u <= cum) return static_cast<std::uint32_t>(j);
  }
  return static_cast<std::uint32_t>(probs.size() - 1);
}

// Second moment of the per-sample gradient noise at theta over the dataset.
double dataset_noise_at(const Problem& p, const Vec& theta) {
  const Dataset& data = p.dataset();
  const std::size_t d = p.dim();
  Vec mean(d);
  double second = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto x = data.row(i);
    const double y = data.y[i];
    Vec g;
    switch (p.kind()) {
      case ProblemKind::LeastSquares:
        g = least_squares_grad(x, {&y, 1}, theta);
        break;
      case ProblemKind::Logistic:
        g = logistic_grad(x, {&y, 1}, theta);
        break;
      case ProblemKind::Svm:
        g = svm_subgrad(x, {&y, 1}, theta, std::get<SvmParams>(p.params()).lambda);
        break;
      case ProblemKind::Lasso:
        g = lasso_subgrad(x, {&y, 1}, theta, std::get<LassoParams>(p.params()).lambda);
        break;
      default:
        fail(ErrorCode::InvalidArgument, "dataset noise needs a dataset kind");
    }
    second += norm_sq(g);
    mean += g;
  }
  const double inv = 1.0 / static_cast<double>(data.n);
  for (double& m : mean) m *= inv;
  return std::max(0.0, second * inv - norm_sq(mean));
}

}  // namespace

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Logistic: return "logistic";
    case ProblemKind::LeastSquares: return "least_squares";
    case ProblemKind::Svm: return "svm";
    case ProblemKind::Lasso: return "lasso";
    case ProblemKind::UniformlyConvex: return "uniformly_convex";
    case ProblemKind::Quadratic: return "quadratic";
    case ProblemKind::Lsa: return "lsa";
  }
  return "unknown";
}

std::optional<ProblemKind> parse_problem_kind(std::string_view name) {
  for (ProblemKind k : {ProblemKind::Logistic, ProblemKind::LeastSquares, ProblemKind::Svm,
                        ProblemKind::Lasso, ProblemKind::UniformlyConvex, ProblemKind::Quadratic,
                        ProblemKind::Lsa})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::uint64_t Problem::draws_per_batch() const noexcept {
  const std::uint64_t b = batch_;
  if (n_ > 0) return b;
  switch (kind_) {
    case ProblemKind::LeastSquares: return b * (RngStream::normal_draws(d_) + 2);
    case ProblemKind::Logistic: return b * (RngStream::normal_draws(d_) + 1);
    case ProblemKind::Quadratic:
    case ProblemKind::UniformlyConvex: return b * RngStream::normal_draws(d_);
    case ProblemKind::Lsa: return 1;
    default: return b;
  }
}

void Problem::gradients(const BatchToken& token, std::span<const Vec* const> thetas,
                        std::span<Vec> out) const {
  if (thetas.size() != out.size()) fail(ErrorCode::DimensionMismatch, "gradients: output count");
  for (const Vec* t : thetas)
    if (t->size() != d_) fail(ErrorCode::DimensionMismatch, "gradients: theta length");
  RngStream rng = token.replay();
  if (kind_ == ProblemKind::Lsa) {
    const auto& p = std::get<LsaParams>(params_);
    if (token.chain_state >= p.n_states) fail(ErrorCode::InvalidArgument, "invalid chain state");
    const Mat& a = p.A[token.chain_state];
    const Vec& b = p.b[token.chain_state];
    for (std::size_t t = 0; t < thetas.size(); ++t) {
      Vec g = matvec(a, *thetas[t]);
      for (std::size_t j = 0; j < d_; ++j) g[j] = -(g[j] + b[j]);
      out[t] = std::move(g);
    }
    return;
  }
  sample_gradients(rng, thetas, out);
}

void Problem::sample_gradients(RngStream& rng, std::span<const Vec* const> thetas,
                               std::span<Vec> out) const {
  const std::size_t m = thetas.size();
  for (Vec& g : out) g = Vec(d_);
  const double inv_b = 1.0 / static_cast<double>(batch_);

  if (kind_ == ProblemKind::Quadratic || kind_ == ProblemKind::UniformlyConvex) {
    Vec noise(d_);
    for (std::size_t s = 0; s < batch_; ++s) {
      Vec xi;
      if (kind_ == ProblemKind::Quadratic) {
        xi = gaussian(rng, d_, std::get<QuadraticParams>(params_).noise_var);
      } else {
        const double sc = std::get<UniformConvexParams>(params_).noise_scale;
        xi = gaussian(rng, d_, Isotropic{sc * sc});
      }
      for (std::size_t j = 0; j < d_; ++j) noise[j] += xi[j];
    }
    for (double& v : noise) v *= inv_b;
    for (std::size_t t = 0; t < m; ++t) {
      if (kind_ == ProblemKind::Quadratic) {
        out[t] = quadratic_grad(std::get<QuadraticParams>(params_), *thetas[t], noise);
      } else {
        out[t] = uniform_convex_grad(*thetas[t], std::get<UniformConvexParams>(params_).p_exp,
                                     noise);
      }
    }
    return;
  }

  // Sample-based kinds: x and y come from the dataset or are drawn fresh.
  std::vector<double> xbuf(d_);
  const GlmParams* glm = std::get_if<GlmParams>(&params_);
  for (std::size_t s = 0; s < batch_; ++s) {
    std::span<const double> x;
    double y = 0.0;
    if (n_ > 0) {
      const std::size_t idx = rng.below(n_);
      x = data_.row(idx);
      y = data_.y[idx];
    } else {
      rng.normals(xbuf);
      for (std::size_t j = 0; j < d_; ++j) xbuf[j] *= std::sqrt(glm->h_diag[j]);
      x = xbuf;
      const double lin = dot(x, glm->theta_planted.span());
      if (kind_ == ProblemKind::LeastSquares) {
        y = lin + glm->sigma_noise * rng.normal();
      } else {
        y = rng.uniform() <= 1.0 / (1.0 + std::exp(-lin)) ? 1.0 : -1.0;
      }
    }
    for (std::size_t t = 0; t < m; ++t) {
      const double z = dot(x, thetas[t]->span());
      double w = 0.0;
      switch (kind_) {
        case ProblemKind::LeastSquares: w = -(y - z); break;
        case ProblemKind::Logistic: w = -y * sigmoid_neg(y * z); break;
        case ProblemKind::Svm: w = y * z >= 1.0 ? 0.0 : -y; break;
        case ProblemKind::Lasso: w = -2.0 * (y - z); break;
        default: break;
      }
      if (w == 0.0) continue;
      double* g = out[t].data();
      for (std::size_t j = 0; j < d_; ++j) g[j] += w * x[j];
    }
  }
  for (std::size_t t = 0; t < m; ++t) {
    Vec& g = out[t];
    const Vec& th = *thetas[t];
    for (std::size_t j = 0; j < d_; ++j) {
      g[j] *= inv_b;
      if (kind_ == ProblemKind::Svm) {
        g[j] += std::get<SvmParams>(params_).lambda * th[j];
      } else if (kind_ == ProblemKind::Lasso) {
        const double sign = th[j] > 0.0 ? 1.0 : (th[j] < 0.0 ? -1.0 : 0.0);
        g[j] += std::get<LassoParams>(params_).lambda * sign;
      }
    }
  }
}

GradientSample Problem::gradient(const Vec& theta, const BatchToken& token) const {
  GradientSample s;
  s.token = token;
  const Vec* th[] = {&theta};
  Vec out[1];
  gradients(token, th, out);
  s.g = std::move(out[0]);
  return s;
}

std::uint32_t Problem::next_chain_state(const BatchToken& token) const {
  const auto* p = std::get_if<LsaParams>(&params_);
  if (!p) fail(ErrorCode::InvalidArgument, "chain transitions exist only for LSA problems");
  if (token.chain_state >= p->n_states) fail(ErrorCode::InvalidArgument, "invalid chain state");
  RngStream rng = token.replay();
  return sample_categorical(p->P.row(token.chain_state), rng.uniform());
}

std::uint32_t Problem::initial_chain_state(RngStream& rng) const {
  const auto* p = std::get_if<LsaParams>(&params_);
  if (!p) return 0;
  return sample_categorical(p->pi.span(), rng.uniform());
}

std::pair<Vec, std::uint32_t> lsa_direction(const Problem& problem, const Vec& theta,
                                            std::uint32_t chain_state, RngStream& rng) {
  const auto* p = std::get_if<LsaParams>(&problem.params());
  if (!p) fail(ErrorCode::InvalidArgument, "lsa_direction needs an LSA problem");
  if (chain_state >= p->n_states) fail(ErrorCode::InvalidArgument, "invalid chain state");
  Vec dir = matvec(p->A[chain_state], theta);
  dir += p->b[chain_state];
  const std::uint32_t next = sample_categorical(p->P.row(chain_state), rng.uniform());
  return {std::move(dir), next};
}

std::optional<Vec> Problem::full_gradient(const Vec& theta) const {
  if (theta.size() != d_) fail(ErrorCode::DimensionMismatch, "full_gradient: theta length");
  switch (kind_) {
    case ProblemKind::LeastSquares: {
      if (n_ > 0) return matvec(gram_, theta) - xty_;
      const auto& g = std::get<GlmParams>(params_);
      Vec diff = theta - g.theta_planted;
      for (std::size_t j = 0; j < d_; ++j) diff[j] *= g.h_diag[j];
      return diff;
    }
    case ProblemKind::Logistic:
      if (n_ > 0) return logistic_grad(data_.x, data_.y, theta);
      if (theta == std::get<GlmParams>(params_).theta_planted) return Vec(d_);
      return std::nullopt;
    case ProblemKind::Svm:
      return svm_subgrad(data_.x, data_.y, theta, std::get<SvmParams>(params_).lambda);
    case ProblemKind::Lasso: {
      Vec g = 2.0 * (matvec(gram_, theta) - xty_);
      const double lambda = std::get<LassoParams>(params_).lambda;
      for (std::size_t j = 0; j < d_; ++j)
        g[j] += lambda * (theta[j] > 0.0 ? 1.0 : (theta[j] < 0.0 ? -1.0 : 0.0));
      return g;
    }
    case ProblemKind::UniformlyConvex:
      return uniform_convex_grad(theta, std::get<UniformConvexParams>(params_).p_exp, Vec(d_));
    case ProblemKind::Quadratic:
      return quadratic_grad(std::get<QuadraticParams>(params_), theta, Vec(d_));
    case ProblemKind::Lsa: {
      const auto& p = std::get<LsaParams>(params_);
      Vec g = matvec(p.A_bar, theta);
      for (std::size_t j = 0; j < d_; ++j) g[j] = -(g[j] + p.b_bar[j]);
      return g;
    }
  }
  return std::nullopt;
}

std::optional<double> Problem::objective(const Vec& theta) const {
  if (theta.size() != d_) fail(ErrorCode::DimensionMismatch, "objective: theta length");
  switch (kind_) {
    case ProblemKind::LeastSquares: {
      if (n_ == 0) {
        const auto& g = std::get<GlmParams>(params_);
        const Vec diff = theta - g.theta_planted;
        double s = 0.0;
        for (std::size_t j = 0; j < d_; ++j) s += g.h_diag[j] * diff[j] * diff[j];
        return 0.5 * s + 0.5 * g.sigma_noise * g.sigma_noise;
      }
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        const double r = data_.y[i] - dot(data_.row(i), theta.span());
        s += r * r;
      }
      return 0.5 * s / static_cast<double>(n_);
    }
    case ProblemKind::Logistic: {
      if (n_ == 0) return std::nullopt;
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i)
        s += log1p_exp_neg(data_.y[i] * dot(data_.row(i), theta.span()));
      return s / static_cast<double>(n_);
    }
    case ProblemKind::Svm: {
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i)
        s += std::max(0.0, 1.0 - data_.y[i] * dot(data_.row(i), theta.span()));
      return s / static_cast<double>(n_) +
             0.5 * std::get<SvmParams>(params_).lambda * norm_sq(theta);
    }
    case ProblemKind::Lasso: {
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        const double r = data_.y[i] - dot(data_.row(i), theta.span());
        s += r * r;
      }
      double l1 = 0.0;
      for (double t : theta) l1 += std::abs(t);
      return s / static_cast<double>(n_) + std::get<LassoParams>(params_).lambda * l1;
    }
    case ProblemKind::UniformlyConvex: {
      const double p = std::get<UniformConvexParams>(params_).p_exp;
      return std::pow(norm(theta), p) / p;
    }
    case ProblemKind::Quadratic: {
      const auto& q = std::get<QuadraticParams>(params_);
      return 0.5 * quad_form(q.H, theta) + dot(q.a, theta) + q.c;
    }
    case ProblemKind::Lsa: return std::nullopt;
  }
  return std::nullopt;
}

std::optional<double> Problem::objective_gap(const Vec& theta) const {
  const Vec& ts = reference_.theta_star;
  switch (kind_) {
    case ProblemKind::LeastSquares: {
      const Vec diff = theta - ts;
      if (n_ > 0) return 0.5 * quad_form(gram_, diff);
      const auto& g = std::get<GlmParams>(params_);
      double s = 0.0;
      for (std::size_t j = 0; j < d_; ++j) s += g.h_diag[j] * diff[j] * diff[j];
      return 0.5 * s;
    }
    case ProblemKind::Quadratic:
      return 0.5 * quad_form(std::get<QuadraticParams>(params_).H, theta - ts);
    case ProblemKind::Lasso: {
      const Vec diff = theta - ts;
      const double smooth = dot(diff, matvec(gram_, theta + ts)) - 2.0 * dot(diff, xty_);
      double l1 = 0.0;
      for (std::size_t j = 0; j < d_; ++j) l1 += std::abs(theta[j]) - std::abs(ts[j]);
      return smooth + std::get<LassoParams>(params_).lambda * l1;
    }
    default: {
      const auto f = objective(theta);
      if (!f) return std::nullopt;
      return *f - reference_.f_star;
    }
  }
}

Vec Problem::initial_point() const {
  if (const auto* uc = std::get_if<UniformConvexParams>(&params_))
    return Vec(d_, uc->start_radius / std::sqrt(static_cast<double>(d_)));
  return Vec(d_);
}

double Problem::default_gamma0() const {
  switch (kind_) {
    case ProblemKind::Logistic:
    case ProblemKind::Svm: return 4.0 / constants_.r_sq;
    case ProblemKind::LeastSquares:
    case ProblemKind::Lasso: return 1.0 / (2.0 * constants_.r_sq);
    case ProblemKind::UniformlyConvex:
    case ProblemKind::Lsa: return 1.0 / (4.0 * constants_.L);
    case ProblemKind::Quadratic: return 1.0 / (2.0 * constants_.L);
  }
  return 0.0;
}

namespace {

void build_glm(const ProblemOptions& o, Dataset& data, GlmParams& glm) {
  RngStream rng(o.seed, kDataStream);
  glm.h_diag = resolve_h_diag(o);
  glm.sigma_noise = o.sigma_noise.value_or(1.0);
  if (!(glm.sigma_noise >= 0.0)) fail(ErrorCode::Config, "sigma_noise must be non-negative");
  glm.theta_planted = gaussian(rng, o.d, Isotropic{1.0});
  if (o.n == 0) return;
  data.n = o.n;
  data.d = o.d;
  data.x.resize(o.n * o.d);
  data.y.resize(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    const Vec x = gaussian(rng, o.d, glm.h_diag);
    std::copy(x.begin(), x.end(), data.x.begin() + static_cast<std::ptrdiff_t>(i * o.d));
    const double lin = dot(x, glm.theta_planted);
    if (o.kind == ProblemKind::LeastSquares) {
      data.y[i] = lin + glm.sigma_noise * rng.normal();
    } else {
      data.y[i] = rng.uniform() <= 1.0 / (1.0 + std::exp(-lin)) ? 1.0 : -1.0;
    }
  }
}

// Hessian of the logistic loss at theta averaged over the given rows.
Mat logistic_hessian(const Dataset& data, std::size_t rows, const Vec& theta) {
  const std::size_t d = data.d;
  Mat h(d, d);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto x = data.row(i);
    const double s = sigmoid_neg(dot(x, theta.span()));
    const double w = s * (1.0 - s);
    for (std::size_t a = 0; a < d; ++a) {
      const double wa = w * x[a];
      for (std::size_t b = a; b < d; ++b) h(a, b) += wa * x[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      h(a, b) /= static_cast<double>(rows);
      h(b, a) = h(a, b);
    }
  return h;
}

// Smallest Hessian eigenvalue over probe points on the sphere of radius
// 2|theta0 - theta*| around theta*, with a 0.9 safety factor.
double certify_logistic_mu(const Problem& p, const Dataset& probe_data) {
  const std::size_t d = p.dim();
  const Vec& ts = p.reference().theta_star;
  double radius = 2.0 * norm(p.initial_point() - ts);
  if (radius == 0.0) radius = 1.0;
  const std::size_t budget = static_cast<std::size_t>(5e7 / static_cast<double>(d * d * 13));
  const std::size_t rows = std::min(probe_data.n, std::clamp<std::size_t>(budget, 2000, 20000));
  std::vector<Vec> points{ts};
  for (std::size_t j = 0; j < std::min<std::size_t>(d, 4); ++j) {
    points.push_back(ts + radius * Vec::unit(d, j));
    points.push_back(ts - radius * Vec::unit(d, j));
  }
  RngStream rng(p.seed(), kCertStream, 1u << 20);
  for (int k = 0; k < 2; ++k) {
    Vec u = gaussian(rng, d, Isotropic{1.0});
    u *= radius / norm(u);
    points.push_back(ts + u);
    points.push_back(ts - u);
  }
  double mu = std::numeric_limits<double>::infinity();
  for (const Vec& pt : points)
    mu = std::min(mu, power_iteration_extreme_eigs(logistic_hessian(probe_data, rows, pt))
                          .lambda_min);
  return 0.9 * std::max(mu, 0.0);
}

Dataset streaming_probe(const Problem& p, const GlmParams& glm, std::size_t rows) {
  RngStream rng(p.seed(), kCertStream);
  Dataset data;
  data.n = rows;
  data.d = p.dim();
  data.x.resize(rows * data.d);
  data.y.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const Vec x = gaussian(rng, data.d, glm.h_diag);
    std::copy(x.begin(), x.end(), data.x.begin() + static_cast<std::ptrdiff_t>(i * data.d));
    const double lin = dot(x, glm.theta_planted);
    if (p.kind() == ProblemKind::LeastSquares) {
      data.y[i] = lin + glm.sigma_noise * rng.normal();
    } else {
      data.y[i] = rng.uniform() <= 1.0 / (1.0 + std::exp(-lin)) ? 1.0 : -1.0;
    }
  }
  return data;
}

}  // namespace

ProblemPtr make_problem(const ProblemOptions& o) {
  if (o.d == 0) fail(ErrorCode::Config, "dimension d must be positive");
  if (o.batch_size == 0) fail(ErrorCode::Config, "batch_size must be positive");
  auto p = std::make_shared<Problem>();
  p->kind_ = o.kind;
  p->d_ = o.d;
  p->n_ = o.n;
  p->batch_ = o.batch_size;
  p->seed_ = o.seed;
  ProblemConstants& k = p->constants_;

  const bool streaming_only = o.kind == ProblemKind::UniformlyConvex ||
                              o.kind == ProblemKind::Quadratic || o.kind == ProblemKind::Lsa;
  if (streaming_only && o.n != 0)
    fail(ErrorCode::Config, std::string(to_string(o.kind)) + " is a streaming kind; set n = 0");
  if ((o.kind == ProblemKind::Svm || o.kind == ProblemKind::Lasso) && o.n == 0)
    fail(ErrorCode::Config, std::string(to_string(o.kind)) + " needs a finite dataset (n > 0)");

  switch (o.kind) {
    case ProblemKind::LeastSquares:
    case ProblemKind::Logistic: {
      GlmParams glm;
      build_glm(o, p->data_, glm);
      k.r_sq = sum(glm.h_diag);
      const double hmax = *std::max_element(glm.h_diag.begin(), glm.h_diag.end());
      const double hmin = *std::min_element(glm.h_diag.begin(), glm.h_diag.end());
      const bool ls = o.kind == ProblemKind::LeastSquares;
      if (o.n > 0) {
        gram_from(p->data_, p->gram_, p->xty_, p->yy_);
        const auto e = power_iteration_extreme_eigs(p->gram_);
        k.L = ls ? e.lambda_max : 0.25 * e.lambda_max;
        k.mu = ls ? e.lambda_min : 0.0;
      } else {
        k.L = ls ? hmax : 0.25 * hmax;
        k.mu = ls ? hmin : 0.0;
      }
      p->params_ = std::move(glm);
      p->reference_ = solve_reference(*p);
      const auto& g = std::get<GlmParams>(p->params_);
      if (ls) {
        k.sigma_sq = o.n > 0 ? dataset_noise_at(*p, p->reference_.theta_star)
                             : g.sigma_noise * g.sigma_noise * k.r_sq;
      } else {
        const Dataset probe = o.n > 0 ? Dataset{} : streaming_probe(*p, g, 20000);
        const Dataset& pd = o.n > 0 ? p->data_ : probe;
        k.mu = certify_logistic_mu(*p, pd);
        if (o.n > 0) {
          k.sigma_sq = dataset_noise_at(*p, p->reference_.theta_star);
        } else {
          double s = 0.0;
          for (std::size_t i = 0; i < pd.n; ++i) {
            const double y = pd.y[i];
            s += norm_sq(logistic_grad(pd.row(i), {&y, 1}, g.theta_planted));
          }
          k.sigma_sq = s / static_cast<double>(pd.n);
        }
      }
      break;
    }
    case ProblemKind::Svm: {
      SvmParams svm;
      svm.lambda = o.lambda.value_or(0.1);
      svm.sigma_input = o.sigma_input.value_or(1.0);
      if (!(svm.lambda > 0.0)) fail(ErrorCode::Config, "svm lambda must be positive");
      if (!(svm.sigma_input > 0.0)) fail(ErrorCode::Config, "svm sigma_input must be positive");
      RngStream rng(o.seed, kDataStream);
      Dataset& data = p->data_;
      data.n = o.n;
      data.d = o.d;
      data.x.resize(o.n * o.d);
      data.y.resize(o.n);
      const double var = svm.sigma_input * svm.sigma_input;
      for (std::size_t i = 0; i < o.n; ++i) {
        const Vec x = gaussian(rng, o.d, Isotropic{var});
        std::copy(x.begin(), x.end(), data.x.begin() + static_cast<std::ptrdiff_t>(i * o.d));
        const double z = svm.sigma_input * rng.normal();
        data.y[i] = x[0] + z >= 0.0 ? 1.0 : -1.0;
      }
      k.r_sq = static_cast<double>(o.d) * var;
      k.mu = svm.lambda;
      k.L = svm.lambda + k.r_sq;
      k.smooth = false;
      p->params_ = svm;
      p->reference_ = solve_reference(*p);
      k.sigma_sq = dataset_noise_at(*p, p->reference_.theta_star);
      break;
    }
    case ProblemKind::Lasso: {
      LassoParams lasso;
      lasso.lambda = o.lambda.value_or(1e-4);
      lasso.sparsity = o.sparsity.value_or(std::min<std::size_t>(60, o.d));
      lasso.sigma_noise = o.sigma_noise.value_or(1.0);
      lasso.h_diag = resolve_h_diag(o);
      if (lasso.sparsity > o.d)
        fail(ErrorCode::Config, "lasso sparsity s = " + std::to_string(lasso.sparsity) +
                                    " exceeds d = " + std::to_string(o.d));
      if (!(lasso.lambda >= 0.0)) fail(ErrorCode::Config, "lasso lambda must be non-negative");
      RngStream rng(o.seed, kDataStream);
      std::vector<std::size_t> idx(o.d);
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < lasso.sparsity; ++i)
        std::swap(idx[i], idx[i + rng.below(o.d - i)]);
      lasso.theta_sparse = Vec(o.d);
      for (std::size_t i = 0; i < lasso.sparsity; ++i) {
        double v = 0.0;
        while (v == 0.0) v = rng.normal();
        lasso.theta_sparse[idx[i]] = v;
      }
      Dataset& data = p->data_;
      data.n = o.n;
      data.d = o.d;
      data.x.resize(o.n * o.d);
      data.y.resize(o.n);
      for (std::size_t i = 0; i < o.n; ++i) {
        const Vec x = gaussian(rng, o.d, lasso.h_diag);
        std::copy(x.begin(), x.end(), data.x.begin() + static_cast<std::ptrdiff_t>(i * o.d));
        data.y[i] = dot(x, lasso.theta_sparse) + lasso.sigma_noise * rng.normal();
      }
      gram_from(data, p->gram_, p->xty_, p->yy_);
      const auto e = power_iteration_extreme_eigs(p->gram_);
      k.L = 2.0 * e.lambda_max;
      k.mu = 2.0 * e.lambda_min;
      k.r_sq = sum(lasso.h_diag);
      k.smooth = false;
      p->params_ = std::move(lasso);
      p->reference_ = solve_reference(*p);
      k.sigma_sq = dataset_noise_at(*p, p->reference_.theta_star);
      break;
    }
    case ProblemKind::UniformlyConvex: {
      UniformConvexParams uc;
      uc.p_exp = o.p_exp.value_or(2.5);
      if (!(uc.p_exp > 2.0)) fail(ErrorCode::Config, "p_exp must exceed 2");
      uc.tau_exp = 1.0 - 2.0 / uc.p_exp;
      uc.noise_scale = o.noise_scale.value_or(1.0);
      uc.start_radius = o.start_radius.value_or(std::sqrt(static_cast<double>(o.d)));
      if (!(uc.noise_scale >= 0.0)) fail(ErrorCode::Config, "noise_scale must be non-negative");
      if (!(uc.start_radius > 0.0)) fail(ErrorCode::Config, "start_radius must be positive");
      k.L = (uc.p_exp - 1.0) * std::pow(uc.start_radius, uc.p_exp - 2.0);
      k.mu = 0.0;
      k.sigma_sq = uc.noise_scale * uc.noise_scale * static_cast<double>(o.d);
      p->params_ = uc;
      p->reference_ = solve_reference(*p);
      break;
    }
    case ProblemKind::Quadratic: {
      QuadraticParams q;
      RngStream rng(o.seed, kStructStream);
      if (o.isotropic_h) {
        if (!(*o.isotropic_h > 0.0)) fail(ErrorCode::Config, "isotropic_h must be positive");
        q.H = *o.isotropic_h * Mat::identity(o.d);
      } else {
        const double lo = o.h_min.value_or(0.1);
        const double hi = o.h_max.value_or(1.0);
        if (!(lo > 0.0) || !(hi >= lo)) fail(ErrorCode::Config, "need 0 < h_min <= h_max");
        q.H = spd_with_spectrum(linspace(lo, hi, o.d), rng);
      }
      if (!certify_spd(q.H)) fail(ErrorCode::Config, "quadratic H is not SPD");
      q.a = o.zero_linear.value_or(false) ? Vec(o.d) : gaussian(rng, o.d, Isotropic{1.0});
      const double ns = o.noise_scale.value_or(1.0);
      if (!(ns >= 0.0)) fail(ErrorCode::Config, "noise_scale must be non-negative");
      q.noise_var = Vec(o.d, ns * ns);
      const auto e = power_iteration_extreme_eigs(q.H);
      k.L = e.lambda_max;
      k.mu = e.lambda_min;
      k.sigma_sq = sum(q.noise_var);
      p->params_ = std::move(q);
      p->reference_ = solve_reference(*p);
      break;
    }
    case ProblemKind::Lsa: {
      if (o.batch_size != 1) fail(ErrorCode::Config, "lsa runs with batch_size 1");
      LsaParams l;
      l.n_states = o.n_states.value_or(8);
      if (l.n_states == 0) fail(ErrorCode::Config, "lsa needs at least one chain state");
      const double mmin = o.m_min.value_or(0.5);
      const double mmax = o.m_max.value_or(2.0);
      const double pert = o.perturbation.value_or(0.5);
      if (!(mmin > 0.0) || !(mmax >= mmin)) fail(ErrorCode::Config, "need 0 < m_min <= m_max");
      RngStream rng(o.seed, kStructStream);
      const std::size_t N = l.n_states;
      l.P = Mat(N, N);
      for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
          l.P(i, j) = -std::log(rng.uniform()) + 1e-300;
          s += l.P(i, j);
        }
        for (std::size_t j = 0; j < N; ++j) l.P(i, j) /= s;
      }
      // Stationary law: (P^T - I) pi = 0 with the last row replaced by sum(pi) = 1.
      Mat sys = l.P.transpose();
      for (std::size_t i = 0; i < N; ++i) sys(i, i) -= 1.0;
      for (std::size_t j = 0; j < N; ++j) sys(N - 1, j) = 1.0;
      Vec rhs(N);
      rhs[N - 1] = 1.0;
      l.pi = lu_solve(sys, rhs);
      Mat M = spd_with_spectrum(linspace(mmin, mmax, o.d), rng);
      std::vector<Mat> G(N, Mat(o.d, o.d));
      const double gs = 1.0 / std::sqrt(static_cast<double>(o.d));
      for (auto& g : G)
        for (std::size_t i = 0; i < o.d; ++i)
          for (std::size_t j = 0; j < o.d; ++j) g(i, j) = gs * rng.normal();
      Mat Gbar(o.d, o.d);
      for (std::size_t x = 0; x < N; ++x) Gbar = Gbar + l.pi[x] * G[x];
      for (std::size_t x = 0; x < N; ++x) l.b.push_back(gaussian(rng, o.d, Isotropic{1.0}));
      for (int attempt = 0;; ++attempt) {
        l.A.clear();
        l.A_bar = Mat(o.d, o.d);
        l.b_bar = Vec(o.d);
        for (std::size_t x = 0; x < N; ++x) {
          Mat s = G[x] + (-1.0) * Gbar;
          l.A.push_back((-1.0) * (M + pert * s));
          l.A_bar = l.A_bar + l.pi[x] * l.A.back();
          axpy(l.pi[x], l.b[x], l.b_bar);
        }
        Mat sym = 0.5 * (l.A_bar + l.A_bar.transpose());
        if (power_iteration_extreme_eigs(sym).lambda_max < -0.1) break;
        if (attempt > 60) fail(ErrorCode::Config, "could not make sym(A_bar) negative definite");
        M = 2.0 * M;
      }
      k.L = 0.0;
      for (const Mat& a : l.A)
        k.L = std::max(k.L, std::sqrt(power_iteration_extreme_eigs(matmul(a.transpose(), a))
                                          .lambda_max));
      k.mu = -power_iteration_extreme_eigs(0.5 * (l.A_bar + l.A_bar.transpose())).lambda_max;
      k.smooth = false;
      p->params_ = std::move(l);
      p->reference_ = solve_reference(*p);
      const auto& lp = std::get<LsaParams>(p->params_);
      for (std::size_t x = 0; x < N; ++x) {
        Vec r = matvec(lp.A[x], p->reference_.theta_star);
        r += lp.b[x];
        k.sigma_sq += lp.pi[x] * norm_sq(r);
      }
      break;
    }
  }
  return p;
}

}  // namespace csgd
