#include "lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace phc::detail {

namespace {

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Parameters held at a bound by a gradient that points outward.
std::vector<bool> pinned(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  std::vector<bool> out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out[i] = (x(i) <= lo(i) && g(i) > 0.0) || (x(i) >= hi(i) && g(i) < 0.0);
  return out;
}

double free_norm(const Eigen::VectorXd& g, const std::vector<bool>& pin) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (!pin[i]) s += g(i) * g(i);
  return std::sqrt(s);
}

}  // namespace

LmOutcome minimize(const Objective& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                   const Eigen::VectorXd& upper, const LmOptions& options) {
  const Eigen::Index n = x0.size();
  LmOutcome out;
  out.x = clamp(x0, lower, upper);
  Eigen::VectorXd g(n);
  Eigen::MatrixXd h(n, n);
  out.objective = objective(out.x, &g, &h);
  double lambda = 1e-3;

  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    const auto pin = pinned(out.x, g, lower, upper);
    out.gradient_norm = free_norm(g, pin);
    if (out.gradient_norm < options.gradient_tolerance) {
      out.converged = true;
      return out;
    }

    Eigen::MatrixXd a = h;
    Eigen::VectorXd rhs = -g;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = std::max(h(i, i), 1e-12 * std::max(h.diagonal().maxCoeff(), 1e-300));
      a(i, i) = h(i, i) + lambda * d;
      if (pin[i]) {
        a.row(i).setZero();
        a.col(i).setZero();
        a(i, i) = 1.0;
        rhs(i) = 0.0;
      }
    }
    const Eigen::VectorXd step = a.ldlt().solve(rhs);
    const Eigen::VectorXd trial = clamp(out.x + step, lower, upper);
    const Eigen::VectorXd delta = trial - out.x;

    double rel = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      rel = std::max(rel, std::abs(delta(i)) / std::max(std::abs(out.x(i)), 1.0));

    Eigen::VectorXd g_new(n);
    Eigen::MatrixXd h_new(n, n);
    const double f_new = step.allFinite() ? objective(trial, &g_new, &h_new)
                                          : std::numeric_limits<double>::infinity();
    if (std::isfinite(f_new) && f_new <= out.objective) {
      out.x = trial;
      out.objective = f_new;
      g = g_new;
      h = h_new;
      lambda = std::max(lambda / 3.0, 1e-12);
      if (rel < options.relative_step_tolerance) {
        out.converged = true;
        out.gradient_norm = free_norm(g, pinned(out.x, g, lower, upper));
        ++out.iterations;
        return out;
      }
    } else {
      lambda *= 4.0;
      // Heavily damped and still no descent for a vanishing step: the iterate
      // is a minimum to working precision.
      if ((lambda > 1e6 && rel < options.relative_step_tolerance) || lambda > 1e16) {
        out.converged = true;
        ++out.iterations;
        return out;
      }
    }
  }
  out.gradient_norm = free_norm(g, pinned(out.x, g, lower, upper));
  out.converged = out.gradient_norm < options.gradient_tolerance;
  return out;
}

Eigen::MatrixXd covariance_from_information(const Eigen::MatrixXd& information) {
  const Eigen::Index n = information.rows();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd scale(n);
  for (Eigen::Index i = 0; i < n; ++i)
    scale(i) = information(i, i) > 0.0 ? 1.0 / std::sqrt(information(i, i)) : 0.0;
  const Eigen::MatrixXd corr = scale.asDiagonal() * information * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  const double cutoff = 1e-14 * std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k)
    if (es.eigenvalues()(k) > cutoff)
      inv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / es.eigenvalues()(k);
  Eigen::MatrixXd cov = scale.asDiagonal() * inv * scale.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (scale(i) == 0.0) {
      cov.row(i).setZero();
      cov.col(i).setZero();
      cov(i, i) = inf;
    }
  }
  return cov;
}

}  // namespace phc::detail
