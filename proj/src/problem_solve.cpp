#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "csgd/problems.hpp"

namespace csgd {

namespace {

constexpr double kGradTol = 1e-10;

Mat logistic_full_hessian(const Dataset& data, const Vec& theta) {
  const std::size_t d = data.d;
  Mat h(d, d);
  for (std::size_t i = 0; i < data.n; ++i) {
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
      h(a, b) /= static_cast<double>(data.n);
      h(b, a) = h(a, b);
    }
  return h;
}

double logistic_loss(const Dataset& data, const Vec& theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.n; ++i)
    s += log1p_exp_neg(data.y[i] * dot(data.row(i), theta.span()));
  return s / static_cast<double>(data.n);
}

// Damped Newton with Armijo backtracking.
Vec solve_logistic(const Dataset& data) {
  const std::size_t d = data.d;
  Vec theta(d);
  double f = logistic_loss(data, theta);
  for (int it = 0; it < 200; ++it) {
    const Vec g = logistic_grad(data.x, data.y, theta);
    if (norm(g) <= kGradTol) return theta;
    Mat h = logistic_full_hessian(data, theta);
    auto lower = cholesky(h);
    for (double ridge = 1e-12; !lower; ridge *= 10.0) {
      for (std::size_t j = 0; j < d; ++j) h(j, j) += ridge;
      lower = cholesky(h);
      if (ridge > 1.0) fail(ErrorCode::NonConvergence, "logistic Hessian is singular");
    }
    const Vec step = cholesky_solve(*lower, g);
    const double decrement = dot(g, step);
    double t = 1.0;
    Vec next = theta - step;
    double fn = logistic_loss(data, next);
    while (fn > f - 1e-4 * t * decrement && t > 1e-12) {
      t *= 0.5;
      next = theta - t * step;
      fn = logistic_loss(data, next);
    }
    if (next == theta) {
      // Step fell below double resolution; the gradient is as small as it gets.
      if (norm(g) <= 1e-8) return theta;
      break;
    }
    theta = std::move(next);
    f = fn;
  }
  fail(ErrorCode::NonConvergence, "logistic Newton solve did not reach |grad| <= 1e-10");
}

// Dual coordinate descent for min (1/n) sum hinge + (lambda/2)|w|^2, which is
// lambda times the C-form objective with C = 1/(lambda n).
Vec solve_svm(const Dataset& data, double lambda) {
  const std::size_t n = data.n;
  const std::size_t d = data.d;
  const double C = 1.0 / (lambda * static_cast<double>(n));
  std::vector<double> alpha(n, 0.0);
  std::vector<double> qii(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    qii[i] = dot(x, x);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(0x5356u, 0);
  Vec w(d);
  for (int pass = 0; pass < 5000; ++pass) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i : order) {
      if (qii[i] == 0.0) continue;
      const auto x = data.row(i);
      const double y = data.y[i];
      const double grad = y * dot(x, w.span()) - 1.0;
      const double next = std::clamp(alpha[i] - grad / qii[i], 0.0, C);
      const double delta = next - alpha[i];
      if (delta == 0.0) continue;
      alpha[i] = next;
      for (std::size_t j = 0; j < d; ++j) w[j] += delta * y * x[j];
    }
    // Recompute w exactly so rounding drift does not accumulate.
    w = Vec(d);
    double sum_alpha = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == 0.0) continue;
      const auto x = data.row(i);
      for (std::size_t j = 0; j < d; ++j) w[j] += alpha[i] * data.y[i] * x[j];
      sum_alpha += alpha[i];
    }
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      hinge += std::max(0.0, 1.0 - data.y[i] * dot(data.row(i), w.span()));
    const double ww = norm_sq(w);
    const double primal = 0.5 * ww + C * hinge;
    const double dual = sum_alpha - 0.5 * ww;
    const double f = lambda * primal;
    if (lambda * (primal - dual) <= 1e-10 * std::max(1.0, std::abs(f))) return w;
  }
  fail(ErrorCode::NonConvergence, "svm dual coordinate descent did not close the duality gap");
}

double soft(double v, double t) {
  return v > t ? v - t : (v < -t ? v + t : 0.0);
}

// Proximal gradient on theta^T G theta - 2 theta.xty + lambda |theta|_1.
Vec solve_lasso(const Mat& gram, const Vec& xty, double lambda, double L0) {
  const std::size_t d = xty.size();
  Vec theta(d);
  double L = L0 > 0.0 ? L0 : 1.0;
  for (int it = 0; it < 2000000; ++it) {
    const Vec g = 2.0 * (matvec(gram, theta) - xty);
    Vec next(d);
    for (;;) {
      for (std::size_t j = 0; j < d; ++j) next[j] = soft(theta[j] - g[j] / L, lambda / L);
      const Vec diff = next - theta;
      // s(next) - s(theta) without forming either value.
      const double ds = dot(diff, matvec(gram, next + theta)) - 2.0 * dot(diff, xty);
      if (ds <= dot(g, diff) + 0.5 * L * norm_sq(diff) + 1e-15 * std::abs(ds)) break;
      L *= 2.0;
    }
    const double mapping = L * std::sqrt(dist_sq(next, theta));
    theta = std::move(next);
    if (mapping <= kGradTol) return theta;
  }
  fail(ErrorCode::NonConvergence, "lasso proximal gradient did not converge");
}

}  // namespace

ReferenceSolution solve_reference(const Problem& p) {
  ReferenceSolution ref;
  const std::size_t d = p.dim();
  switch (p.kind()) {
    case ProblemKind::LeastSquares: {
      if (p.n() == 0) {
        ref.theta_star = std::get<GlmParams>(p.params()).theta_planted;
      } else {
        const auto lower = cholesky(p.gram_);
        if (!lower) fail(ErrorCode::NonConvergence, "least-squares Gram matrix is singular");
        ref.theta_star = cholesky_solve(*lower, p.xty_);
      }
      ref.provenance = ReferenceSolution::Provenance::ClosedForm;
      break;
    }
    case ProblemKind::Logistic:
      if (p.n() == 0) {
        ref.theta_star = std::get<GlmParams>(p.params()).theta_planted;
        ref.provenance = ReferenceSolution::Provenance::ClosedForm;
      } else {
        ref.theta_star = solve_logistic(p.dataset());
        ref.provenance = ReferenceSolution::Provenance::HighAccuracySolve;
      }
      break;
    case ProblemKind::Svm:
      ref.theta_star = solve_svm(p.dataset(), std::get<SvmParams>(p.params()).lambda);
      ref.provenance = ReferenceSolution::Provenance::HighAccuracySolve;
      break;
    case ProblemKind::Lasso:
      ref.theta_star = solve_lasso(p.gram_, p.xty_, std::get<LassoParams>(p.params()).lambda,
                                   p.constants().L);
      ref.provenance = ReferenceSolution::Provenance::HighAccuracySolve;
      break;
    case ProblemKind::UniformlyConvex:
      ref.theta_star = Vec(d);
      break;
    case ProblemKind::Quadratic: {
      const auto& q = std::get<QuadraticParams>(p.params());
      const auto lower = cholesky(q.H);
      if (!lower) fail(ErrorCode::InvalidArgument, "quadratic H is not positive definite");
      ref.theta_star = -1.0 * cholesky_solve(*lower, q.a);
      break;
    }
    case ProblemKind::Lsa: {
      const auto& l = std::get<LsaParams>(p.params());
      ref.theta_star = -1.0 * lu_solve(l.A_bar, l.b_bar);
      break;
    }
  }
  if (p.kind() == ProblemKind::Quadratic) {
    const auto& q = std::get<QuadraticParams>(p.params());
    ref.f_star = q.c + 0.5 * dot(q.a, ref.theta_star);
  } else if (auto f = p.objective(ref.theta_star)) {
    ref.f_star = *f;
  }
  return ref;
}

}  // namespace csgd
