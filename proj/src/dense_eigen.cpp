#include "dense_eigen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <lapacke.h>

#include "phc/errors.hpp"

namespace phc::detail {

namespace {

// range: 'I' uses il/iu (1-based), 'V' uses the half-open interval (vl, vu].
EigenPairs solve(const Eigen::MatrixXcd& h, char range, double vl, double vu, int il, int iu,
                 bool want_vectors, const char* what) {
  const lapack_int n = static_cast<lapack_int>(h.rows());
  const char jobz = want_vectors ? 'V' : 'N';
  lapack_int found = 0;
  std::vector<double> w(n);
  std::vector<lapack_int> support(2 * std::max<lapack_int>(n, 1));
  const lapack_int ncols = range == 'I' ? std::max(iu - il + 1, 0) : n;
  lapack_int info = 0;
  EigenPairs out;

  // Complex driver only: the real symmetric drivers of some optimized BLAS
  // builds return corrupted eigenvectors for large matrices.
  Eigen::MatrixXcd a = h;
  Eigen::MatrixXcd z(want_vectors ? n : 1, want_vectors ? ncols : 1);
  info = LAPACKE_zheevr(LAPACK_COL_MAJOR, jobz, range, 'L', n,
                        reinterpret_cast<lapack_complex_double*>(a.data()), n, vl, vu, il, iu, 0.0,
                        &found, w.data(), reinterpret_cast<lapack_complex_double*>(z.data()),
                        std::max<lapack_int>(z.rows(), 1), support.data());
  if (want_vectors && info == 0) out.vectors = z.leftCols(found);
  if (info != 0)
    throw SolverError(std::string(what) + ": LAPACK eigensolver failed (info=" +
                      std::to_string(info) + ")");
  out.values = Eigen::Map<Eigen::VectorXd>(w.data(), found);
  if (want_vectors && found > 0) {
    const double scale = std::max(h.cwiseAbs().maxCoeff(), 1e-300) * std::sqrt(static_cast<double>(n));
    const Eigen::MatrixXcd r = h * out.vectors - out.vectors * out.values.asDiagonal();
    const double worst = r.colwise().norm().maxCoeff();
    if (!(worst <= 1e-9 * scale))
      throw SolverError(std::string(what) + ": eigenvector residual " + std::to_string(worst) +
                        " exceeds tolerance; the LAPACK library is returning inaccurate vectors");
  }
  return out;
}

}  // namespace

EigenPairs smallest_eigenpairs(const Eigen::MatrixXcd& h, int count, bool want_vectors,
                               const char* what) {
  const int n = static_cast<int>(h.rows());
  count = std::clamp(count, 0, n);
  if (count == 0) return {};
  return solve(h, 'I', 0.0, 0.0, 1, count, want_vectors, what);
}

EigenPairs eigenpairs_in_range(const Eigen::MatrixXcd& h, double lower, double upper,
                               bool want_vectors, const char* what) {
  if (!(upper > lower)) return {};
  return solve(h, 'V', lower, upper, 0, 0, want_vectors, what);
}

}  // namespace phc::detail
