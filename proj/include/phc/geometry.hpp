#pragma once

// Triangular-lattice photonic crystal slab: lattice geometry, reciprocal
// space, the analytic Fourier transform of a circular-hole dielectric and
// the slab effective index used to reduce the membrane to two dimensions.
//
// Lengths are in nm, wavevectors in 1/nm.

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace phc {

using Vec2 = Eigen::Vector2d;

/// Triangular lattice of circular holes in a uniform background.
class TriangularLattice {
 public:
  TriangularLattice(double period_nm, double hole_ratio, double eps_background,
                    double eps_hole = 1.0);

  double period() const { return period_; }
  double hole_ratio() const { return hole_ratio_; }
  double hole_radius() const { return hole_ratio_ * period_; }
  double eps_background() const { return eps_background_; }
  double eps_hole() const { return eps_hole_; }

  /// Area fraction occupied by holes, (2 pi / sqrt 3) (r/a)^2.
  double fill_fraction() const;
  double cell_area() const;

 private:
  double period_;
  double hole_ratio_;
  double eps_background_;
  double eps_hole_;
};

/// Symmetric dielectric slab (core between two identical claddings).
struct SlabWaveguide {
  double thickness_nm = 400.0;
  double n_core = 3.4;
  double n_clad = 1.0;

  void validate() const;
};

/// Real-space primitive vectors a1 = (a, 0), a2 = (-a/2, a sqrt3/2).
std::array<Vec2, 2> real_basis(const TriangularLattice& lattice);

/// Dual vectors with b_i . a_j = 2 pi delta_ij; |b| = 4 pi / (sqrt3 a) and
/// the two vectors are 60 degrees apart.
std::array<Vec2, 2> reciprocal_basis(const TriangularLattice& lattice);

/// Fractional reciprocal coordinates (k = f1 b1 + f2 b2) to Cartesian.
Vec2 to_cartesian(const std::array<Vec2, 2>& basis, const Vec2& frac);

/// Fourier coefficient of eps(r) at an integer reciprocal vector m b1 + n b2.
double dielectric_fourier(const TriangularLattice& lattice, int m, int n);

/// Same, for a Cartesian G. Throws std::invalid_argument when G is not on the
/// reciprocal lattice (tolerance 1e-9 |b1|).
double dielectric_fourier(const TriangularLattice& lattice, const Vec2& g);

/// Circular-hole form factor 2 J1(x)/x, with the x -> 0 limit of 1.
double airy_form_factor(double x);

struct KPoint {
  Vec2 frac;          // in units of (b1, b2)
  double arc_length;  // cumulative path length in units of 2 pi / a
  std::string label;  // vertex label, empty between vertices
};

class KPath {
 public:
  struct Vertex {
    std::string label;
    Vec2 frac;
  };

  KPath(std::vector<Vertex> vertices, int samples_per_segment);

  const std::vector<Vertex>& vertices() const { return vertices_; }
  int samples_per_segment() const { return samples_per_segment_; }

  /// Sampled path; shared segment endpoints appear once.
  const std::vector<KPoint>& points() const { return points_; }

 private:
  std::vector<Vertex> vertices_;
  int samples_per_segment_;
  std::vector<KPoint> points_;
};

/// Gamma -> M -> K -> Gamma with Gamma=(0,0), M=(1/2,0), K=(1/3,1/3).
KPath kpath_gamma_m_k(int samples_per_segment);

/// Effective index of the fundamental even TE guided mode of a symmetric
/// slab, from tan(kappa d / 2) = gamma / kappa.
double effective_index(const SlabWaveguide& slab, double wavelength_nm);

}  // namespace phc
