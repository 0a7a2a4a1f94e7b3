// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "phc/bands.hpp"
#include "phc/cavity_modes.hpp"
#include "phc/decay_fit.hpp"
#include "phc/errors.hpp"
#include "phc/geometry.hpp"
#include "phc/qed.hpp"
#include "phc/spectral_fit.hpp"
#include "phc/tcspc.hpp"

using namespace phc;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  std::printf("%s  %d. %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// Counts of `trials` calls of pred(i) that return true, spread over threads.
int count_parallel(int trials, const std::function<bool(int)>& pred) {
  const int workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<int>> jobs;
  for (int w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      int n = 0;
      for (int i = w; i < trials; i += workers) n += pred(i);
      return n;
    }));
  int total = 0;
  for (auto& j : jobs) total += j.get();
  return total;
}

TriangularLattice paper_lattice(double ratio) {
  const double n = effective_index(SlabWaveguide{400.0, 3.4, 1.0}, 1050.0);
  return TriangularLattice(300.0, ratio, n * n);
}

const InstrumentResponse kIrf{150.0, 1000.0};
const BinGrid kGrid{0.0, 12.0, 4096};

DecayModel with_counts(std::vector<DecayComponent> comps, double counts) {
  const auto unit = expected_curve(DecayModel{comps, 0.0}, kIrf, kGrid);
  const double mass = std::accumulate(unit.values.begin(), unit.values.end(), 0.0);
  for (auto& c : comps) c.amplitude *= counts / mass;
  return {comps, 0.0};
}

Outcome purcell() {
  const double fp = purcell_factor(2000.0, 1.5);
  const double direct = 3.0 * 2000.0 / (4.0 * kPi * kPi * 1.5);
  return {std::abs(fp - 101.32) <= 0.01 && std::abs(fp - direct) <= 1e-9,
          "F_p=" + fmt("%.4f", fp) + " (3Q/(4 pi^2 V)=" + fmt("%.4f", direct) + ")"};
}

Outcome beta() {
  const double b1 = coupling_efficiency(150.0, 1800.0), b2 = coupling_efficiency(50.0, 1800.0);
  return {std::abs(b1 - 0.9167) <= 1e-4 && std::abs(b2 - 0.9722) <= 1e-4 && b1 == 1 - 150.0 / 1800 && b2 == 1 - 50.0 / 1800,
          "beta=" + fmt("%.4f", b1) + ", " + fmt("%.4f", b2)};
}

Outcome ratio() {
  const double r = lifetime_ratio(56.0, EmitterCoupling{1.0, 1031.5, 0.47}, CavityMode(1031.5, 1950.0, 1.5));
  const double direct = 56.0 / 3.0 + 0.47;  // on resonance the Lorentzian is 1
  const double tau2 = enhanced_lifetime(840.0, r);
  return {std::abs(r - 19.1) <= 0.05 && std::abs(r - direct) <= 1e-12 && std::abs(tau2 - 44.0) <= 1.0,
          "tau0/tau=" + fmt("%.3f", r) + ", tau2=" + fmt("%.2f", tau2) + " ps"};
}

Outcome empty_lattice() {
  const TriangularLattice empty(300.0, 0.0, 10.5);
  const KPath path = kpath_gamma_m_k(11);
  const auto bands = compute_bands(empty, path, PlaneWaveBasis::parallelogram(7), 5);
  // free photons in a medium of eps 10.5: a/lambda = a |k + G| / (2 pi n)
  const double b = 4 * kPi / (std::sqrt(3.0) * 300.0);
  const Vec2 b1(b * std::sqrt(3.0) / 2, b / 2), b2(0.0, b);  // dual of a1=(a,0), a2=(-a/2, a sqrt3/2)
  double worst = 0;
  for (std::size_t i = 0; i < path.points().size(); ++i) {
    const Vec2 f = path.points()[i].frac;
    std::vector<double> w;
    for (int m = -5; m <= 5; ++m)
      for (int n = -5; n <= 5; ++n) w.push_back(300.0 * ((f.x() + m) * b1 + (f.y() + n) * b2).norm() / (2 * kPi * std::sqrt(10.5)));
    std::sort(w.begin(), w.end());
    for (int j = 0; j < 5; ++j) {
      const double got = bands.frequencies(Eigen::Index(i), j), want = w[std::size_t(j)];
      worst = std::max(worst, want > 0 ? std::abs(got - want) / want : std::abs(got));
    }
  }
  return {worst <= 1e-6 && path.points().size() >= 30,
          "max relative deviation " + fmt("%.1e", worst) + " at " + std::to_string(path.points().size()) + " k-points"};
}

Outcome gap_placement() {
  const auto bands = compute_bands(paper_lattice(0.37), kpath_gamma_m_k(16), PlaneWaveBasis::parallelogram(7), 8);
  const auto gap = find_te_gap(bands);
  if (!gap) return {false, "no TE gap"};
  const double lambda = gap->midgap_wavelength(300.0);
  return {std::abs(lambda - 1100.0) <= 75.0, "midgap " + fmt("%.1f", lambda) + " nm, target 1100+-75 nm"};
}

Outcome defect_modes() {
  DefectModeOptions opt;
  opt.points_per_period = 16;
  opt.threads = 0;
  auto solve = [&](double r) { return solve_h1_modes(paper_lattice(r), 7, PlaneWaveBasis::hexagonal(21), opt); };

  const auto ideal = solve(0.37);
  const auto dipoles = ideal.of(ModeSymmetry::Dipole);
  bool pass = dipoles.size() == 2;
  double split = 1;
  if (pass) split = std::abs(dipoles[0]->frequency - dipoles[1]->frequency) / dipoles[0]->frequency;
  pass = pass && split < 1e-3;
  std::string detail = std::to_string(dipoles.size()) + " dipole modes at r/a=0.37, splitting " + fmt("%.1e", split) + ";";

  double previous = 0;
  for (double r : {0.42, 0.39, 0.36, 0.33}) {
    const auto set = solve(r);
    const auto d = set.of(ModeSymmetry::Dipole);
    if (d.empty()) return {false, detail + " no dipole at r/a=" + fmt("%.2f", r)};
    const double lambda = d.front()->wavelength_nm(300.0);
    detail += " " + fmt("%.2f", r) + "->" + fmt("%.1f", lambda);
    pass = pass && lambda > previous;
    previous = lambda;
  }
  return {pass, detail + " nm"};
}

Outcome convolution() {
  const double tau = 800.0, sigma = kIrf.fwhm / (2 * std::sqrt(2 * std::log(2.0)));
  const BinGrid grid{0.0, 4.0, 2048};
  const auto curve = expected_curve(DecayModel{{{1.0, tau}}, 0.0}, kIrf, grid);
  // Simpson rule over the decay support in 0.1 ps steps
  auto reference = [&](double t) {
    const double h = 0.1, lo = std::max(kIrf.t0, t - 12 * sigma), hi = t + 12 * sigma;
    if (hi <= lo) return 0.0;
    const int n = 2 * int(std::ceil((hi - lo) / (2 * h)));
    const double step = (hi - lo) / n;
    auto g = [&](double s) {
      const double u = (t - s) / sigma;
      return std::exp(-(s - kIrf.t0) / tau) * std::exp(-0.5 * u * u) / (sigma * std::sqrt(2 * kPi));
    };
    double sum = g(lo) + g(hi);
    for (int i = 1; i < n; ++i) sum += (i % 2 ? 4 : 2) * g(lo + i * step);
    return sum * step / 3;
  };
  double worst = 0;
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double ref = reference(grid.center(i));
    if (ref > 1e-6) worst = std::max(worst, std::abs(curve.values[i] - ref) / ref);
  }
  return {worst <= 1e-4, "max relative deviation " + fmt("%.1e", worst)};
}

Outcome decay_fits() {
  const auto mono = with_counts({{1.0, 840.0}}, 1e5);
  const auto bi = with_counts({{18.0, 150.0}, {1.0, 1800.0}}, 1e5);
  const auto mono_curve = expected_curve(mono, kIrf, kGrid), bi_curve = expected_curve(bi, kIrf, kGrid);

  const double tau = fit_monoexponential(sample_histogram(mono_curve, 100000, 1)).value("lifetime_1");
  const auto fb = fit_biexponential(sample_histogram(bi_curve, 100000, 2));
  const double t1 = fb.value("lifetime_1"), t2 = fb.value("lifetime_2");
  const bool a = std::abs(tau / 840.0 - 1) <= 0.03;
  // slow lifetime within 5%, the fast one within 20%
  const bool b = std::abs(t2 / 1800.0 - 1) <= 0.05 && std::abs(t1 / 150.0 - 1) <= 0.20;

  auto picks = [](const ExpectedCurve& curve, DecayModelKind truth, std::uint64_t base) {
    return count_parallel(100, [&](int i) {
      try {
        return select_model(sample_histogram(curve, 100000, base + std::uint64_t(i))).chosen == truth;
      } catch (const FitError&) {
        return false;
      }
    });
  };
  const int m = picks(mono_curve, DecayModelKind::Mono, 10000), k = picks(bi_curve, DecayModelKind::Bi, 20000);
  return {a && b && m >= 95 && k >= 95,
          "(a) tau=" + fmt("%.1f", tau) + " ps; (b) fast " + fmt("%.1f", t1) + " ps, slow " + fmt("%.0f", t2) +
              " ps; (c) " + std::to_string(m) + "/100 mono, " + std::to_string(k) + "/100 bi"};
}

Outcome spectral_fit() {
  const std::vector<CavityMode> modes{CavityMode(1031.5, 1950.0, 1.5)};
  const std::vector<double> fp{56.0};
  const Tau0Reference tau0(840.0);
  const auto grid = wavelength_grid(1026.5, 1036.5, 81);
  const int good = count_parallel(50, [&](int i) {
    try {
      const auto scan = generate_spectral_scan(grid, modes, fp, 0.47, tau0, 0.05, 500 + std::uint64_t(i));
      const auto r = fit_spectral_model(scan, modes, tau0);
      return std::abs(r.fit.value("F_1") - 56.0) <= 10.0 && std::abs(r.max_ratio - 19.0) <= 4.0;
    } catch (const FitError&) {
      return false;
    }
  });
  return {good >= 45, std::to_string(good) + "/50 seeds with F within 56+-10 and tau0/tau2 within 19+-4"};
}

}  // namespace

int main() {
  report(1, "Purcell factor", purcell);
  report(2, "coupling efficiency", beta);
  report(3, "lifetime-ratio consistency", ratio);
  report(4, "empty-lattice bands", empty_lattice);
  report(5, "gap placement", gap_placement);
  report(6, "defect-mode structure", defect_modes);
  report(7, "convolution oracle", convolution);
  report(8, "decay-fit round trips", decay_fits);
  report(9, "spectral-fit round trip", spectral_fit);
  report(10, "raw-data substitution", [] {
    return Outcome{true, "no experimental transients; 6, 8 and 9 verify by symmetry, monotonicity and round trips"};
  });
  return failures == 0 ? 0 : 1;
}
