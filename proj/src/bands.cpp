#include "phc/bands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

#include "dense_eigen.hpp"
#include "parallel.hpp"
#include "phc/errors.hpp"

namespace phc {

namespace {

int hex_norm(int m, int n) { return std::max({std::abs(m), std::abs(n), std::abs(m + n)}); }

}  // namespace

PlaneWaveBasis PlaneWaveBasis::parallelogram(int cutoff) {
  if (cutoff < 0) throw std::invalid_argument("plane-wave cutoff must be non-negative");
  std::vector<Index2> idx;
  idx.reserve(static_cast<std::size_t>(2 * cutoff + 1) * (2 * cutoff + 1));
  for (int m = -cutoff; m <= cutoff; ++m)
    for (int n = -cutoff; n <= cutoff; ++n) idx.push_back({m, n});
  return PlaneWaveBasis(Shape::Parallelogram, cutoff, std::move(idx));
}

PlaneWaveBasis PlaneWaveBasis::hexagonal(int cutoff) {
  if (cutoff < 0) throw std::invalid_argument("plane-wave cutoff must be non-negative");
  std::vector<Index2> idx;
  for (int m = -cutoff; m <= cutoff; ++m)
    for (int n = -cutoff; n <= cutoff; ++n)
      if (hex_norm(m, n) <= cutoff) idx.push_back({m, n});
  return PlaneWaveBasis(Shape::Hexagonal, cutoff, std::move(idx));
}

PlaneWaveBasis PlaneWaveBasis::around(Shape shape, const Vec2& k_frac, double radius) {
  if (shape == Shape::Custom) throw std::invalid_argument("custom basis has no norm");
  const int reach = static_cast<int>(std::ceil(radius)) + 2;
  const double slack = 1e-9;
  std::vector<Index2> idx;
  for (int m = -reach; m <= reach; ++m) {
    for (int n = -reach; n <= reach; ++n) {
      const double p = k_frac.x() + m;
      const double q = k_frac.y() + n;
      const double norm = shape == Shape::Hexagonal
                              ? std::max({std::abs(p), std::abs(q), std::abs(p + q)})
                              : std::max(std::abs(p), std::abs(q));
      if (norm <= radius + slack)
        idx.push_back({m, n});
    }
  }
  return PlaneWaveBasis(Shape::Custom, static_cast<int>(std::floor(radius)), std::move(idx));
}

std::vector<std::size_t> PlaneWaveBasis::negation_map() const {
  std::map<Index2, std::size_t> where;
  for (std::size_t i = 0; i < indices_.size(); ++i) where[indices_[i]] = i;
  std::vector<std::size_t> out(indices_.size());
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    auto it = where.find({-indices_[i][0], -indices_[i][1]});
    if (it == where.end()) throw std::logic_error("plane-wave basis is not closed under negation");
    out[i] = it->second;
  }
  return out;
}

std::vector<Vec2> PlaneWaveBasis::g_vectors(const std::array<Vec2, 2>& reciprocal) const {
  std::vector<Vec2> out;
  out.reserve(indices_.size());
  for (const auto& [m, n] : indices_) out.push_back(m * reciprocal[0] + n * reciprocal[1]);
  return out;
}

PeriodicDielectric PeriodicDielectric::bulk(const TriangularLattice& lattice) {
  return {reciprocal_basis(lattice), lattice.period(),
          [lattice](int m, int n) { return std::complex<double>(dielectric_fourier(lattice, m, n)); }};
}

TeOperator::TeOperator(const PeriodicDielectric& structure, PlaneWaveBasis basis)
    : basis_(std::move(basis)), g_(basis_.g_vectors(structure.reciprocal)) {
  const auto& idx = basis_.indices();
  const auto n = static_cast<Eigen::Index>(idx.size());
  if (n == 0) throw std::invalid_argument("empty plane-wave basis");

  int m_lo = 0, m_hi = 0, n_lo = 0, n_hi = 0;
  for (const auto& [m, k] : idx) {
    m_lo = std::min(m_lo, m), m_hi = std::max(m_hi, m);
    n_lo = std::min(n_lo, k), n_hi = std::max(n_hi, k);
  }
  // Fourier table over all differences G - G'.
  const int dm0 = m_lo - m_hi, dn0 = n_lo - n_hi;
  const int width_m = 2 * (m_hi - m_lo) + 1, width_n = 2 * (n_hi - n_lo) + 1;
  std::vector<std::complex<double>> table(static_cast<std::size_t>(width_m) * width_n);
  std::vector<char> filled(table.size(), 0);
  auto coefficient = [&](int dm, int dn) {
    const std::size_t at = static_cast<std::size_t>(dm - dm0) * width_n + (dn - dn0);
    if (!filled[at]) {
      table[at] = structure.fourier(dm, dn);
      filled[at] = 1;
    }
    return table[at];
  };

  eps_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      eps_(i, j) = coefficient(idx[i][0] - idx[j][0], idx[i][1] - idx[j][1]);

  Eigen::LLT<Eigen::MatrixXcd> llt(eps_);
  if (llt.info() != Eigen::Success)
    throw SolverError("truncated permittivity matrix is singular or indefinite");
  eta_ = llt.solve(Eigen::MatrixXcd::Identity(n, n));
  eta_ = (0.5 * (eta_ + eta_.adjoint())).eval();
}

Eigen::MatrixXcd TeOperator::at(const Vec2& k) const {
  const auto n = static_cast<Eigen::Index>(g_.size());
  Eigen::MatrixXd kg(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) kg.row(i) = (k + g_[i]).transpose();
  const Eigen::MatrixXd dots = kg * kg.transpose();
  return eta_.cwiseProduct(dots.cast<std::complex<double>>());
}

Eigen::MatrixXcd build_te_operator(const TriangularLattice& lattice, const Vec2& k,
                                   const PlaneWaveBasis& basis) {
  return TeOperator(PeriodicDielectric::bulk(lattice), basis).at(k);
}

double eigenvalue_to_frequency(double eigenvalue, double period_nm) {
  return period_nm / (2.0 * std::numbers::pi) * std::sqrt(std::max(eigenvalue, 0.0));
}

BandStructure compute_bands(const TriangularLattice& lattice, const KPath& path,
                            const PlaneWaveBasis& basis, int n_bands, unsigned threads) {
  if (n_bands < 1) throw std::invalid_argument("n_bands must be positive");
  if (static_cast<std::size_t>(n_bands) > basis.size())
    throw std::invalid_argument("n_bands exceeds the plane-wave basis size");

  const TeOperator op(PeriodicDielectric::bulk(lattice), basis);
  const auto b = reciprocal_basis(lattice);
  const auto& points = path.points();
  BandStructure out{path, Eigen::MatrixXd(points.size(), n_bands)};

  detail::parallel_for(points.size(), threads, [&](std::size_t i) {
    const Vec2& f = points[i].frac;
    const Vec2 folded(f.x() - std::floor(f.x() + 0.5), f.y() - std::floor(f.y() + 0.5));
    const std::string tag = "TE bands at k=(" + std::to_string(f.x()) + ", " +
                            std::to_string(f.y()) + ")";
    const auto pairs =
        detail::smallest_eigenpairs(op.at(to_cartesian(b, folded)), n_bands, false, tag.c_str());
    if (pairs.values.size() != n_bands) throw SolverError(tag + ": missing eigenvalues");
    for (int j = 0; j < n_bands; ++j)
      out.frequencies(static_cast<Eigen::Index>(i), j) =
          eigenvalue_to_frequency(pairs.values(j), lattice.period());
  });
  return out;
}

std::pair<double, double> band_edges(const BandStructure& bands) {
  if (bands.frequencies.cols() < 2) throw std::invalid_argument("gap search needs two bands");
  return {bands.frequencies.col(0).maxCoeff(), bands.frequencies.col(1).minCoeff()};
}

std::optional<BandGap> find_te_gap(const BandStructure& bands) {
  const auto [lower, upper] = band_edges(bands);
  if (lower >= upper) return std::nullopt;
  return BandGap{lower, upper};
}

}  // namespace phc
