#pragma once

// Plane-wave expansion of the TE (H out of plane) master equation
//   -div( eps^-1 grad H ) = (omega/c)^2 H
// on a 2D periodic dielectric. Frequencies are reported as a/lambda.

#include <array>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "phc/geometry.hpp"

namespace phc {

using Index2 = std::array<int, 2>;

/// Set of reciprocal-lattice vectors G = m b1 + n b2 kept in the expansion.
class PlaneWaveBasis {
 public:
  enum class Shape {
    Parallelogram,  // |m|, |n| <= N: (2N+1)^2 waves
    Hexagonal,      // max(|m|, |n|, |m+n|) <= N: 3N^2+3N+1 waves, C6v symmetric
    Custom,
  };

  static PlaneWaveBasis parallelogram(int cutoff);
  static PlaneWaveBasis hexagonal(int cutoff);
  /// All G whose k+G lies within `radius` of the origin in the norm of `shape`
  /// (fractional coordinates). Mirrors a supercell truncation in the bulk.
  static PlaneWaveBasis around(Shape shape, const Vec2& k_frac, double radius);

  Shape shape() const { return shape_; }
  int cutoff() const { return cutoff_; }
  std::size_t size() const { return indices_.size(); }
  const std::vector<Index2>& indices() const { return indices_; }

  /// Position of -G for every G; requires closure under negation.
  std::vector<std::size_t> negation_map() const;
  std::vector<Vec2> g_vectors(const std::array<Vec2, 2>& reciprocal) const;

 private:
  PlaneWaveBasis(Shape shape, int cutoff, std::vector<Index2> indices)
      : shape_(shape), cutoff_(cutoff), indices_(std::move(indices)) {}

  Shape shape_;
  int cutoff_;
  std::vector<Index2> indices_;
};

/// A 2D periodic permittivity described by its Fourier coefficients.
struct PeriodicDielectric {
  std::array<Vec2, 2> reciprocal;                       // 1/nm
  double period_nm = 0.0;                               // length used for a/lambda
  std::function<std::complex<double>(int, int)> fourier;  // eps(m b1 + n b2)

  static PeriodicDielectric bulk(const TriangularLattice& lattice);
};

/// TE operator for a fixed structure and basis. The inverse-permittivity table
/// (inverse of the truncated Toeplitz matrix eps(G - G')) is computed once.
class TeOperator {
 public:
  TeOperator(const PeriodicDielectric& structure, PlaneWaveBasis basis);

  /// Theta_{GG'} = eta(G, G') (k+G).(k+G'), k Cartesian in 1/nm.
  Eigen::MatrixXcd at(const Vec2& k) const;

  const PlaneWaveBasis& basis() const { return basis_; }
  const Eigen::MatrixXcd& permittivity() const { return eps_; }
  const Eigen::MatrixXcd& inverse_permittivity() const { return eta_; }
  const std::vector<Vec2>& g_vectors() const { return g_; }

 private:
  PlaneWaveBasis basis_;
  std::vector<Vec2> g_;
  Eigen::MatrixXcd eps_;
  Eigen::MatrixXcd eta_;
};

Eigen::MatrixXcd build_te_operator(const TriangularLattice& lattice, const Vec2& k,
                                   const PlaneWaveBasis& basis);

/// Eigenvalue of Theta (1/nm^2) to a/lambda. Small negative noise maps to 0.
double eigenvalue_to_frequency(double eigenvalue, double period_nm);

struct BandStructure {
  KPath path;
  Eigen::MatrixXd frequencies;  // rows: k-points, columns: bands, ascending a/lambda
};

struct BandGap {
  double lower_edge;  // max over k of the dielectric band
  double upper_edge;  // min over k of the air band
  double midgap() const { return 0.5 * (lower_edge + upper_edge); }
  double width() const { return upper_edge - lower_edge; }
  /// lambda = a / (a/lambda) at midgap.
  double midgap_wavelength(double period_nm) const { return period_nm / midgap(); }
};

/// Lowest n_bands TE bands along the path. k-points are folded into the cell
/// around Gamma before expansion, so bands are exactly periodic in k.
BandStructure compute_bands(const TriangularLattice& lattice, const KPath& path,
                            const PlaneWaveBasis& basis, int n_bands, unsigned threads = 1);

/// Gap between bands 1 and 2, or nullopt when they overlap.
std::optional<BandGap> find_te_gap(const BandStructure& bands);

/// Band-1 maximum and band-2 minimum regardless of overlap.
std::pair<double, double> band_edges(const BandStructure& bands);

}  // namespace phc
