#pragma once

#include <functional>

#include <Eigen/Core>

namespace phc::detail {

// Objective with its gradient and a positive semidefinite curvature
// approximation (Gauss-Newton or Fisher information).
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* gradient, Eigen::MatrixXd* curvature)>;

struct LmOptions {
  int max_iterations = 200;
  double relative_step_tolerance = 1e-8;
  double gradient_tolerance = 1e-10;
};

struct LmOutcome {
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // gradient restricted to parameters not held by a bound
};

// Box-constrained Levenberg-Marquardt: steps are projected onto
// [lower, upper], and parameters pinned at a bound by the gradient are
// frozen for that iteration.
LmOutcome minimize(const Objective& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                   const Eigen::VectorXd& upper, const LmOptions& options);

// Covariance from a curvature (information) matrix, inverted in correlation
// form so parameters on very different scales do not swamp each other.
// Directions with no information get an infinite variance.
Eigen::MatrixXd covariance_from_information(const Eigen::MatrixXd& information);

}  // namespace phc::detail
