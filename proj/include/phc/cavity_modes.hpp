#pragma once

// H1 point-defect cavity: one missing hole at the origin of an S x S
// supercell of the triangular lattice, solved at the supercell Gamma point.

#include <optional>
#include <string>
#include <vector>

#include "phc/bands.hpp"
#include "phc/geometry.hpp"

namespace phc {

class H1Supercell {
 public:
  /// size must be odd and >= 5.
  H1Supercell(TriangularLattice lattice, int size);

  const TriangularLattice& lattice() const { return lattice_; }
  int size() const { return size_; }
  double cell_area() const;  // nm^2

  PeriodicDielectric dielectric() const;

  /// Point-sampled permittivity at fractional supercell coordinates (s, t),
  /// r = s S a1 + t S a2.
  double permittivity_at(double s, double t) const;

 private:
  TriangularLattice lattice_;
  int size_;
};

/// Irreducible representation of C6v identified from degeneracy and the
/// parity of H_z under a 180 degree rotation.
enum class ModeSymmetry {
  Dipole,      // odd doublet (E1)
  Quadrupole,  // even doublet (E2)
  Monopole,    // even singlet (A1, A2)
  Hexapole,    // odd singlet (B1, B2)
};

std::string to_string(ModeSymmetry symmetry);

struct CavityModeProfile {
  double frequency = 0.0;  // a/lambda
  ModeSymmetry symmetry = ModeSymmetry::Monopole;
  int doublet_partner = -1;  // index of the degenerate partner in the mode list

  // Uniform n x n grid over the supercell in fractional coordinates,
  // row-major with s varying slowest. Real H_z and in-plane eps|E|^2 share one
  // scale chosen so that max(energy_density) = 1.
  int grid_size = 0;
  std::array<Vec2, 2> cell_vectors{};  // supercell vectors, nm
  std::vector<double> h_field;
  std::vector<double> energy_density;
  std::vector<double> permittivity;

  double wavelength_nm(double period_nm) const { return period_nm / frequency; }
  double cell_area() const;
};

struct DefectModeOptions {
  int points_per_period = 64;
  int reference_samples = 12;           // per k-path segment for the bulk gap
  double degeneracy_tolerance = 1e-5;   // relative frequency difference
  unsigned threads = 1;
};

struct DefectModeSet {
  /// Bulk gap at the supercell's plane-wave resolution (see
  /// matched_reference_gap). nullopt means no gap, hence no modes.
  std::optional<BandGap> bulk_gap;
  std::vector<CavityModeProfile> modes;  // ascending frequency, all strictly in the gap

  bool empty() const { return modes.empty(); }
  std::vector<const CavityModeProfile*> of(ModeSymmetry symmetry) const;
};

/// Bulk TE gap computed with the plane waves that a hexagonal supercell
/// truncation of the given cutoff implies for each folded bulk k-point.
std::optional<BandGap> matched_reference_gap(const TriangularLattice& lattice, int supercell_size,
                                             int cutoff, int samples_per_segment,
                                             unsigned threads = 1);
std::optional<BandGap> matched_reference_gap(const TriangularLattice& lattice, int supercell_size,
                                             const PlaneWaveBasis& supercell_basis,
                                             int samples_per_segment, unsigned threads = 1);

/// In-gap eigenmodes of the H1 supercell. Degenerate doublets are rotated
/// into the pair that is even/odd under the y -> -y mirror.
DefectModeSet solve_h1_modes(const TriangularLattice& lattice, int supercell_size,
                             const PlaneWaveBasis& basis, const DefectModeOptions& options = {});

enum class PeakRegion {
  HighIndex,  // maximum of eps|E|^2 over the background material
  Anywhere,   // maximum over the full grid, including the holes
};

/// Effective mode volume in units of (wavelength / slab.n_core)^3:
///   V = height * integral(eps|E|^2 dA) / max(eps|E|^2).
/// Throws std::invalid_argument for a zero field.
double mode_volume(const CavityModeProfile& profile, const SlabWaveguide& slab,
                   double wavelength_nm, double vertical_height_nm,
                   PeakRegion peak = PeakRegion::HighIndex);

}  // namespace phc
