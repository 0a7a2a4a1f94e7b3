#include "phc/cavity_modes.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "dense_eigen.hpp"
#include "parallel.hpp"

namespace phc {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

int positive_mod(int value, int modulus) { return ((value % modulus) + modulus) % modulus; }

// Index of each G's mirror image under y -> -y, (m, n) -> (m, -m-n), or an
// empty vector when the basis is not closed under the mirror.
std::vector<std::size_t> mirror_map(const PlaneWaveBasis& basis) {
  std::map<Index2, std::size_t> where;
  const auto& idx = basis.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) where[idx[i]] = i;
  std::vector<std::size_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto it = where.find({idx[i][0], -idx[i][0] - idx[i][1]});
    if (it == where.end()) return {};
    out[i] = it->second;
  }
  return out;
}

Eigen::VectorXcd permute(const Eigen::VectorXcd& v, const std::vector<std::size_t>& map) {
  Eigen::VectorXcd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = v(static_cast<Eigen::Index>(map[i]));
  return out;
}

// Evaluates sum_G c_G exp(2 pi i (m s + n t)) on an n x n grid, separably.
class GridSynthesis {
 public:
  GridSynthesis(const PlaneWaveBasis& basis, int grid) : grid_(grid) {
    for (const auto& [m, n] : basis.indices()) reach_ = std::max({reach_, std::abs(m), std::abs(n)});
    const int width = 2 * reach_ + 1;
    twiddle_.resize(static_cast<std::size_t>(width) * grid);
    for (int m = -reach_; m <= reach_; ++m)
      for (int j = 0; j < grid; ++j)
        twiddle_[static_cast<std::size_t>(m + reach_) * grid + j] =
            std::polar(1.0, 2.0 * kPi * positive_mod(m * j, grid) / grid);
  }

  std::vector<cplx> operator()(const PlaneWaveBasis& basis, const Eigen::VectorXcd& coeff) const {
    const int width = 2 * reach_ + 1;
    // partial[m][t] = sum_n c_mn e^{2 pi i n t}
    std::vector<cplx> partial(static_cast<std::size_t>(width) * grid_, cplx(0.0));
    const auto& idx = basis.indices();
    for (std::size_t g = 0; g < idx.size(); ++g) {
      const cplx c = coeff(static_cast<Eigen::Index>(g));
      if (c == cplx(0.0)) continue;
      cplx* row = &partial[static_cast<std::size_t>(idx[g][0] + reach_) * grid_];
      const cplx* tw = &twiddle_[static_cast<std::size_t>(idx[g][1] + reach_) * grid_];
      for (int t = 0; t < grid_; ++t) row[t] += c * tw[t];
    }
    std::vector<cplx> out(static_cast<std::size_t>(grid_) * grid_, cplx(0.0));
    for (int m = -reach_; m <= reach_; ++m) {
      const cplx* row = &partial[static_cast<std::size_t>(m + reach_) * grid_];
      const cplx* tw = &twiddle_[static_cast<std::size_t>(m + reach_) * grid_];
      for (int s = 0; s < grid_; ++s) {
        cplx* dst = &out[static_cast<std::size_t>(s) * grid_];
        const cplx phase = tw[s];
        for (int t = 0; t < grid_; ++t) dst[t] += phase * row[t];
      }
    }
    return out;
  }

 private:
  int grid_;
  int reach_ = 0;
  std::vector<cplx> twiddle_;
};

CavityModeProfile make_profile(const H1Supercell& cell, const PlaneWaveBasis& basis,
                               const std::vector<Vec2>& g, const GridSynthesis& synth, int grid,
                               double frequency, const Eigen::VectorXcd& coeff) {
  CavityModeProfile p;
  p.frequency = frequency;
  p.grid_size = grid;
  const auto a = real_basis(cell.lattice());
  p.cell_vectors = {cell.size() * a[0], cell.size() * a[1]};

  const auto n = coeff.size();
  Eigen::VectorXcd dx(n), dy(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // D = curl(H z) = (dH/dy, -dH/dx)
    dx(i) = cplx(0.0, g[i].y()) * coeff(i);
    dy(i) = cplx(0.0, -g[i].x()) * coeff(i);
  }
  auto h = synth(basis, coeff);
  const auto ex = synth(basis, dx);
  const auto ey = synth(basis, dy);

  const std::size_t points = h.size();
  p.permittivity.resize(points);
  p.energy_density.resize(points);
  double peak = 0.0;
  std::size_t peak_h = 0;
  for (int s = 0; s < grid; ++s) {
    for (int t = 0; t < grid; ++t) {
      const std::size_t k = static_cast<std::size_t>(s) * grid + t;
      const double eps = cell.permittivity_at(static_cast<double>(s) / grid,
                                              static_cast<double>(t) / grid);
      p.permittivity[k] = eps;
      p.energy_density[k] = (std::norm(ex[k]) + std::norm(ey[k])) / eps;
      peak = std::max(peak, p.energy_density[k]);
      if (std::abs(h[k]) > std::abs(h[peak_h])) peak_h = k;
    }
  }
  const double scale = peak > 0.0 ? 1.0 / std::sqrt(peak) : 0.0;
  for (auto& u : p.energy_density) u *= scale * scale;

  // Remove the global phase so H_z is real.
  const cplx phase = std::abs(h[peak_h]) > 0.0 ? std::conj(h[peak_h]) / std::abs(h[peak_h]) : 1.0;
  p.h_field.resize(points);
  for (std::size_t k = 0; k < points; ++k) p.h_field[k] = (h[k] * phase).real() * scale;
  return p;
}

}  // namespace

H1Supercell::H1Supercell(TriangularLattice lattice, int size)
    : lattice_(std::move(lattice)), size_(size) {
  if (size < 5 || size % 2 == 0)
    throw std::invalid_argument("H1 supercell size must be odd and at least 5");
}

double H1Supercell::cell_area() const { return lattice_.cell_area() * size_ * size_; }

PeriodicDielectric H1Supercell::dielectric() const {
  const auto b = reciprocal_basis(lattice_);
  const double s = static_cast<double>(size_);
  const std::array<Vec2, 2> bs{b[0] / s, b[1] / s};
  const double per_hole = lattice_.fill_fraction() / (s * s);
  const double contrast = lattice_.eps_hole() - lattice_.eps_background();
  const double radius = lattice_.hole_radius();
  const int size = size_;
  const double eps_bg = lattice_.eps_background();
  return {bs, lattice_.period(), [=](int m, int n) {
            // Structure factor of every lattice site except the origin: S^2 on
            // bulk reciprocal vectors, 0 elsewhere, minus the missing hole.
            const bool bulk = m % size == 0 && n % size == 0;
            const double sites = (bulk ? s * s : 0.0) - 1.0;
            const double g = (m * bs[0] + n * bs[1]).norm();
            const double value = contrast * per_hole * airy_form_factor(g * radius) * sites;
            return cplx(m == 0 && n == 0 ? eps_bg + value : value);
          }};
}

double H1Supercell::permittivity_at(double s, double t) const {
  // Bulk fractional coordinates; the nearest site is a corner of the
  // containing rhombus.
  const double u = s * size_, v = t * size_;
  const auto a = real_basis(lattice_);
  const double fu = std::floor(u), fv = std::floor(v);
  const double r2 = lattice_.hole_radius() * lattice_.hole_radius();
  for (int du = 0; du <= 1; ++du) {
    for (int dv = 0; dv <= 1; ++dv) {
      const int i = static_cast<int>(fu) + du, j = static_cast<int>(fv) + dv;
      if (positive_mod(i, size_) == 0 && positive_mod(j, size_) == 0) continue;
      const Vec2 d = (u - i) * a[0] + (v - j) * a[1];
      if (d.squaredNorm() < r2) return lattice_.eps_hole();
    }
  }
  return lattice_.eps_background();
}

std::string to_string(ModeSymmetry symmetry) {
  switch (symmetry) {
    case ModeSymmetry::Dipole: return "dipole";
    case ModeSymmetry::Quadrupole: return "quadrupole";
    case ModeSymmetry::Monopole: return "monopole";
    case ModeSymmetry::Hexapole: return "hexapole";
  }
  return "unknown";
}

double CavityModeProfile::cell_area() const {
  return std::abs(cell_vectors[0].x() * cell_vectors[1].y() -
                  cell_vectors[0].y() * cell_vectors[1].x());
}

std::vector<const CavityModeProfile*> DefectModeSet::of(ModeSymmetry symmetry) const {
  std::vector<const CavityModeProfile*> out;
  for (const auto& m : modes)
    if (m.symmetry == symmetry) out.push_back(&m);
  return out;
}

std::optional<BandGap> matched_reference_gap(const TriangularLattice& lattice, int supercell_size,
                                             int cutoff, int samples_per_segment,
                                             unsigned threads) {
  return matched_reference_gap(lattice, supercell_size, PlaneWaveBasis::hexagonal(cutoff),
                               samples_per_segment, threads);
}

std::optional<BandGap> matched_reference_gap(const TriangularLattice& lattice, int supercell_size,
                                             const PlaneWaveBasis& supercell_basis,
                                             int samples_per_segment, unsigned threads) {
  if (supercell_basis.shape() == PlaneWaveBasis::Shape::Custom)
    throw std::invalid_argument("matched reference needs a parallelogram or hexagonal basis");
  const KPath path = kpath_gamma_m_k(samples_per_segment);
  const auto& points = path.points();
  const auto bulk = PeriodicDielectric::bulk(lattice);
  const auto b = reciprocal_basis(lattice);
  const double radius = static_cast<double>(supercell_basis.cutoff()) / supercell_size;

  BandStructure bands{path, Eigen::MatrixXd(points.size(), 2)};
  detail::parallel_for(points.size(), threads, [&](std::size_t i) {
    const Vec2& f = points[i].frac;
    TeOperator op(bulk, PlaneWaveBasis::around(supercell_basis.shape(), f, radius));
    const auto pairs = detail::smallest_eigenpairs(op.at(to_cartesian(b, f)), 2, false,
                                                   "matched bulk reference");
    for (Eigen::Index j = 0; j < 2; ++j)
      bands.frequencies(static_cast<Eigen::Index>(i), j) =
          j < pairs.values.size() ? eigenvalue_to_frequency(pairs.values(j), lattice.period())
                                  : 0.0;
  });
  return find_te_gap(bands);
}

DefectModeSet solve_h1_modes(const TriangularLattice& lattice, int supercell_size,
                             const PlaneWaveBasis& basis, const DefectModeOptions& options) {
  const H1Supercell cell(lattice, supercell_size);
  if (options.points_per_period < 1) throw std::invalid_argument("points_per_period must be >= 1");

  DefectModeSet out;
  out.bulk_gap = matched_reference_gap(lattice, supercell_size, basis, options.reference_samples,
                                       options.threads);
  if (!out.bulk_gap) return out;

  const TeOperator op(cell.dielectric(), basis);
  const double a = lattice.period();
  const double scale = 2.0 * kPi / a;
  const double lo = std::pow(scale * out.bulk_gap->lower_edge, 2);
  const double hi = std::pow(scale * out.bulk_gap->upper_edge, 2);
  auto pairs = detail::eigenpairs_in_range(op.at(Vec2::Zero()), lo, hi, true, "H1 supercell");

  std::vector<double> freq;
  std::vector<Eigen::VectorXcd> vecs;
  for (Eigen::Index i = 0; i < pairs.values.size(); ++i) {
    const double f = eigenvalue_to_frequency(pairs.values(i), a);
    if (f > out.bulk_gap->lower_edge && f < out.bulk_gap->upper_edge) {
      freq.push_back(f);
      vecs.push_back(pairs.vectors.col(i));
    }
  }

  const auto negation = basis.negation_map();
  const auto mirror = mirror_map(basis);
  const auto g = op.g_vectors();
  const int grid = options.points_per_period * supercell_size;
  const GridSynthesis synth(basis, grid);

  for (std::size_t i = 0; i < freq.size();) {
    const bool doublet = i + 1 < freq.size() &&
                         std::abs(freq[i + 1] - freq[i]) <= options.degeneracy_tolerance * freq[i];
    const std::size_t count = doublet ? 2 : 1;
    std::vector<Eigen::VectorXcd> group(vecs.begin() + i, vecs.begin() + i + count);

    if (doublet && !mirror.empty()) {
      Eigen::Matrix2cd sigma;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) sigma(r, c) = group[r].dot(permute(group[c], mirror));
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(0.5 * (sigma + sigma.adjoint()));
      const auto rot = es.eigenvectors();
      std::vector<Eigen::VectorXcd> rotated(2);
      for (int c = 0; c < 2; ++c) rotated[c] = rot(0, c) * group[0] + rot(1, c) * group[1];
      group = rotated;
    }

    const double parity = group[0].dot(permute(group[0], negation)).real();
    const bool odd = parity < 0.0;
    const ModeSymmetry sym = doublet ? (odd ? ModeSymmetry::Dipole : ModeSymmetry::Quadrupole)
                                     : (odd ? ModeSymmetry::Hexapole : ModeSymmetry::Monopole);
    for (std::size_t j = 0; j < count; ++j) {
      auto profile = make_profile(cell, basis, g, synth, grid, freq[i + j], group[j]);
      profile.symmetry = sym;
      if (doublet) profile.doublet_partner = static_cast<int>(out.modes.size() + (j == 0 ? 1 : -1));
      out.modes.push_back(std::move(profile));
    }
    i += count;
  }
  return out;
}

double mode_volume(const CavityModeProfile& profile, const SlabWaveguide& slab,
                   double wavelength_nm, double vertical_height_nm, PeakRegion peak) {
  slab.validate();
  if (!(wavelength_nm > 0.0) || !(vertical_height_nm > 0.0))
    throw std::invalid_argument("wavelength and mode height must be positive");
  if (profile.energy_density.empty() ||
      profile.energy_density.size() != profile.permittivity.size())
    throw std::invalid_argument("mode profile has no energy-density grid");

  const auto [eps_min, eps_max] =
      std::minmax_element(profile.permittivity.begin(), profile.permittivity.end());
  const double threshold = 0.5 * (*eps_min + *eps_max);
  double total = 0.0, maximum = 0.0;
  for (std::size_t i = 0; i < profile.energy_density.size(); ++i) {
    const double u = profile.energy_density[i];
    total += u;
    const bool counted = peak == PeakRegion::Anywhere || *eps_min == *eps_max ||
                         profile.permittivity[i] > threshold;
    if (counted) maximum = std::max(maximum, u);
  }
  if (!(maximum > 0.0)) throw std::invalid_argument("mode profile carries no field");

  const double area = profile.cell_area() / static_cast<double>(profile.energy_density.size());
  const double volume = total * area * vertical_height_nm / maximum;
  return volume / std::pow(wavelength_nm / slab.n_core, 3);
}

}  // namespace phc
