#include "phc/geometry.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include <boost/math/tools/roots.hpp>

#include "phc/errors.hpp"

namespace phc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt3 = std::numbers::sqrt3;
constexpr double kMembershipTolerance = 1e-9;

}  // namespace

TriangularLattice::TriangularLattice(double period_nm, double hole_ratio,
                                     double eps_background, double eps_hole)
    : period_(period_nm),
      hole_ratio_(hole_ratio),
      eps_background_(eps_background),
      eps_hole_(eps_hole) {
  if (!(period_nm > 0.0)) throw std::invalid_argument("lattice period must be positive");
  if (!(hole_ratio >= 0.0 && hole_ratio < 0.5))
    throw std::invalid_argument("hole ratio r/a must lie in [0, 0.5)");
  if (!(eps_hole >= 1.0)) throw std::invalid_argument("hole permittivity must be >= 1");
  if (!(eps_background > eps_hole))
    throw std::invalid_argument("background permittivity must exceed hole permittivity");
}

double TriangularLattice::fill_fraction() const {
  return 2.0 * kPi / kSqrt3 * hole_ratio_ * hole_ratio_;
}

double TriangularLattice::cell_area() const { return 0.5 * kSqrt3 * period_ * period_; }

void SlabWaveguide::validate() const {
  if (!(thickness_nm > 0.0)) throw std::invalid_argument("slab thickness must be positive");
  if (!(n_clad >= 1.0)) throw std::invalid_argument("cladding index must be >= 1");
  if (!(n_core > n_clad)) throw std::invalid_argument("core index must exceed cladding index");
}

std::array<Vec2, 2> real_basis(const TriangularLattice& lattice) {
  const double a = lattice.period();
  return {Vec2(a, 0.0), Vec2(-0.5 * a, 0.5 * kSqrt3 * a)};
}

std::array<Vec2, 2> reciprocal_basis(const TriangularLattice& lattice) {
  const double s = 2.0 * kPi / lattice.period();
  return {Vec2(s, s / kSqrt3), Vec2(0.0, 2.0 * s / kSqrt3)};
}

Vec2 to_cartesian(const std::array<Vec2, 2>& basis, const Vec2& frac) {
  return frac.x() * basis[0] + frac.y() * basis[1];
}

double airy_form_factor(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - x * x / 8.0;
  return 2.0 * std::cyl_bessel_j(1.0, x) / x;
}

double dielectric_fourier(const TriangularLattice& lattice, int m, int n) {
  const double f = lattice.fill_fraction();
  const double contrast = lattice.eps_hole() - lattice.eps_background();
  if (m == 0 && n == 0) return lattice.eps_background() + f * contrast;
  const auto b = reciprocal_basis(lattice);
  const double g = (m * b[0] + n * b[1]).norm();
  return contrast * f * airy_form_factor(g * lattice.hole_radius());
}

double dielectric_fourier(const TriangularLattice& lattice, const Vec2& g) {
  // Fractional coordinates follow from the real-space duality.
  const auto a = real_basis(lattice);
  const double fm = g.dot(a[0]) / (2.0 * kPi);
  const double fn = g.dot(a[1]) / (2.0 * kPi);
  const double m = std::round(fm);
  const double n = std::round(fn);
  const auto b = reciprocal_basis(lattice);
  const Vec2 nearest = m * b[0] + n * b[1];
  if ((g - nearest).norm() > kMembershipTolerance * b[0].norm())
    throw std::invalid_argument("wavevector is not on the reciprocal lattice");
  return dielectric_fourier(lattice, static_cast<int>(m), static_cast<int>(n));
}

KPath::KPath(std::vector<Vertex> vertices, int samples_per_segment)
    : vertices_(std::move(vertices)), samples_per_segment_(samples_per_segment) {
  if (vertices_.size() < 2) throw std::invalid_argument("k-path needs at least two vertices");
  if (samples_per_segment_ < 2) throw std::invalid_argument("samples per segment must be >= 2");
  for (const auto& v : vertices_) {
    if (std::abs(v.frac.x()) > 1.0 || std::abs(v.frac.y()) > 1.0)
      throw std::invalid_argument("k-path vertex outside [-1, 1]^2");
  }

  // Metric of the 60-degree reciprocal basis in units of 2 pi / a:
  // |b|^2 = 4/3, b1.b2 = 2/3.
  auto length = [](const Vec2& d) {
    return std::sqrt((4.0 * d.x() * d.x() + 4.0 * d.x() * d.y() + 4.0 * d.y() * d.y()) / 3.0);
  };

  double arc = 0.0;
  points_.push_back({vertices_.front().frac, 0.0, vertices_.front().label});
  for (std::size_t s = 0; s + 1 < vertices_.size(); ++s) {
    const Vec2& from = vertices_[s].frac;
    const Vec2& to = vertices_[s + 1].frac;
    const double step = length(to - from) / (samples_per_segment_ - 1);
    for (int i = 1; i < samples_per_segment_; ++i) {
      const double t = static_cast<double>(i) / (samples_per_segment_ - 1);
      arc += step;
      const bool last = i == samples_per_segment_ - 1;
      points_.push_back({last ? to : Vec2(from + t * (to - from)), arc,
                         last ? vertices_[s + 1].label : std::string()});
    }
  }
}

KPath kpath_gamma_m_k(int samples_per_segment) {
  return KPath({{"Gamma", Vec2(0.0, 0.0)},
                {"M", Vec2(0.5, 0.0)},
                {"K", Vec2(1.0 / 3.0, 1.0 / 3.0)},
                {"Gamma", Vec2(0.0, 0.0)}},
               samples_per_segment);
}

double effective_index(const SlabWaveguide& slab, double wavelength_nm) {
  slab.validate();
  if (!(wavelength_nm > 0.0)) throw std::invalid_argument("wavelength must be positive");

  const double k0 = 2.0 * kPi / wavelength_nm;
  const double half = 0.5 * slab.thickness_nm;
  const double nc2 = slab.n_core * slab.n_core;
  const double ncl2 = slab.n_clad * slab.n_clad;

  // kappa sin(kappa d/2) - gamma cos(kappa d/2): same roots as the tangent form
  // without its poles. Positive where kappa d/2 = pi/2, negative at n = n_core.
  auto dispersion = [&](double n) {
    const double kappa = k0 * std::sqrt(std::max(nc2 - n * n, 0.0));
    const double gamma = k0 * std::sqrt(std::max(n * n - ncl2, 0.0));
    return kappa * std::sin(kappa * half) - gamma * std::cos(kappa * half);
  };

  const double cutoff2 = nc2 - std::pow(kPi / (2.0 * k0 * half), 2);
  double lo = std::sqrt(std::max(cutoff2, ncl2));
  double hi = slab.n_core;
  if (!(dispersion(lo) > 0.0 && dispersion(hi) < 0.0))
    throw SolverError("slab supports no guided TE mode at this wavelength");

  std::uintmax_t max_iter = 200;
  auto [a, b] = boost::math::tools::toms748_solve(
      dispersion, lo, hi, dispersion(lo), dispersion(hi),
      boost::math::tools::eps_tolerance<double>(52), max_iter);
  const double n_eff = 0.5 * (a + b);
  if (!(n_eff > slab.n_clad && n_eff < slab.n_core))
    throw SolverError("effective index root left the guided range");
  return n_eff;
}

}  // namespace phc
