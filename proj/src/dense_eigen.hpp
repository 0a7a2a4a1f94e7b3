#pragma once

#include <Eigen/Core>

namespace phc::detail {

struct EigenPairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXcd vectors; // columns, empty when not requested
};

// Dense Hermitian eigensolves backed by LAPACK zheevr. Eigenvectors are
// checked against their residual. `what` tags the SolverError raised on
// failure.
EigenPairs smallest_eigenpairs(const Eigen::MatrixXcd& h, int count, bool want_vectors,
                               const char* what);
EigenPairs eigenpairs_in_range(const Eigen::MatrixXcd& h, double lower, double upper,
                               bool want_vectors, const char* what);

}  // namespace phc::detail
