#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "phc/qed.hpp"
#include "phc/spectral_fit.hpp"

using namespace phc;

namespace {

const CavityMode kM1(1025.4, 1500, 1.5);
const CavityMode kM2(1031.5, 1950, 1.5);
const Tau0Reference kTau0(840.0);

SpectralScan paper_scan(double noise, std::uint64_t seed, double floor = 0.0, int points = 81) {
  const std::vector<CavityMode> modes{kM2};
  const std::vector<double> fp{56.0};
  return generate_spectral_scan(wavelength_grid(1026.5, 1036.5, points), modes, fp, 0.47, kTau0, noise, seed, floor);
}

}  // namespace

TEST_CASE("noise-free scan is fitted exactly") {
  const std::vector<CavityMode> modes{kM2};
  const auto r = fit_spectral_model(paper_scan(0.0, 1), modes, kTau0);
  CHECK(r.fit.value("F_1") == doctest::Approx(56.0).epsilon(1e-8));
  CHECK(r.fit.value("alpha") == doctest::Approx(0.47).epsilon(1e-8));
  CHECK(r.max_ratio == doctest::Approx(56.0 / 3 + 0.47).epsilon(1e-8));
  CHECK(r.on_resonance_lifetime[0] == doctest::Approx(840.0 / (56.0 / 3 + 0.47)).epsilon(1e-8));
}

TEST_CASE("paper scan round trip") {
  const std::vector<CavityMode> modes{kM2};
  const auto r = fit_spectral_model(paper_scan(0.05, 3), modes, kTau0);
  CHECK(std::abs(r.fit.value("F_1") - 56.0) <= 10.0);
  CHECK(std::abs(r.on_resonance_lifetime[0] - 44.0) <= 8.0);
  CHECK(std::abs(r.max_ratio - 19.0) <= 4.0);
  CHECK(r.weighted);
  CHECK(r.fit.statistic == "chi_square");
  CHECK(r.max_ratio_error > 0.0);

  int good = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = fit_spectral_model(paper_scan(0.05, 100 + seed), modes, kTau0);
    good += std::abs(s.fit.value("F_1") - 56.0) <= 10.0 && std::abs(s.max_ratio - 19.0) <= 4.0;
  }
  CHECK(good >= 45);
}

TEST_CASE("single-mode model equals the lifetime ratio") {
  const std::vector<CavityMode> modes{kM2};
  const auto r = fit_spectral_model(paper_scan(0.05, 8), modes, kTau0);
  const double F = r.fit.value("F_1"), alpha = r.fit.value("alpha");
  for (double l = 1026.0; l <= 1037.0; l += 0.01)
    CHECK(r.lifetime_at(l, kTau0) == doctest::Approx(840.0 / lifetime_ratio(F, {1.0, l, alpha}, kM2)).epsilon(1e-14));
}

TEST_CASE("no enhancement gives F near zero") {
  const std::vector<CavityMode> modes{kM2};
  const std::vector<double> fp{0.0};
  const auto scan = generate_spectral_scan(wavelength_grid(1026.5, 1036.5, 81), modes, fp, 0.47, kTau0, 0.05, 4);
  const auto r = fit_spectral_model(scan, modes, kTau0);
  CHECK(r.fit.value("F_1") <= 2 * r.fit.error("F_1") + 1e-12);
  CHECK(r.lifetime_at(1031.5, kTau0) == doctest::Approx(r.lifetime_at(1026.5, kTau0)).epsilon(0.05));
}

TEST_CASE("a peak instead of a dip pins F at zero") {
  SpectralScan s;
  for (double l : wavelength_grid(1026.5, 1036.5, 41))
    s.points.push_back({l, 1800.0 * (1 + 0.5 * lorentzian(kM2, l)), 50.0});
  const std::vector<CavityMode> modes{kM2};
  CHECK(fit_spectral_model(s, modes, kTau0).fit.value("F_1") == 0.0);
}

TEST_CASE("two-mode fit") {
  const std::vector<CavityMode> modes{kM1, kM2};
  const std::vector<double> fp{30.0, 56.0};
  const auto scan = generate_spectral_scan(wavelength_grid(1022.0, 1036.0, 141), modes, fp, 0.47, kTau0, 0.0, 1);
  const auto r = fit_spectral_model(scan, modes, kTau0);
  CHECK(r.fit.value("F_1") == doctest::Approx(30.0).epsilon(1e-7));
  CHECK(r.fit.value("F_2") == doctest::Approx(56.0).epsilon(1e-7));
  CHECK(r.max_ratio_mode == 1);
  CHECK(r.on_resonance_lifetime.size() == 2);
}

TEST_CASE("insufficient coverage is rejected") {
  const std::vector<CavityMode> modes{kM2};
  const std::vector<double> fp{56.0};
  const auto narrow = generate_spectral_scan(wavelength_grid(1031.2, 1036.0, 30), modes, fp, 0.47, kTau0, 0.0, 1);
  CHECK_THROWS_WITH_AS(fit_spectral_model(narrow, modes, kTau0), doctest::Contains("insufficient spectral coverage"),
                       std::invalid_argument);
  const auto sparse = generate_spectral_scan(wavelength_grid(1026.5, 1036.5, 2), modes, fp, 0.47, kTau0, 0.0, 1);
  CHECK_THROWS_AS(fit_spectral_model(sparse, modes, kTau0), std::invalid_argument);
}

TEST_CASE("unit weights rescale the covariance") {
  auto scan = paper_scan(0.05, 12);
  for (auto& p : scan.points) p.lifetime_error = 0.0;
  const std::vector<CavityMode> modes{kM2};
  const auto r = fit_spectral_model(scan, modes, kTau0);
  CHECK_FALSE(r.weighted);
  REQUIRE(!r.fit.warnings.empty());
  CHECK(r.fit.error("F_1") > 0.0);
}

TEST_CASE("generator centres the dip on the mode") {
  const auto scan = paper_scan(0.05, 6, 0.0, 401);
  auto lowest = scan.points.front();
  for (const auto& p : scan.points)
    if (p.lifetime < lowest.lifetime) lowest = p;
  CHECK(std::abs(lowest.wavelength - 1031.5) <= 0.2);
}

TEST_CASE("dip width equals the linewidth unless clipped") {
  const auto clean = paper_scan(0.0, 1, 0.0, 2001);
  CHECK(dip_fwhm(clean, kTau0) == doctest::Approx(kM2.linewidth()).epsilon(1e-3));
  const auto clipped = paper_scan(0.0, 1, 150.0, 2001);
  CHECK(dip_fwhm(clipped, kTau0) > 2 * kM2.linewidth());
}

TEST_CASE("tau0 reference table") {
  const Tau0Reference t({{1020.0, 800.0}, {1040.0, 900.0}});
  CHECK(t(1030.0) == doctest::Approx(850.0));
  CHECK(t(1000.0) == 800.0);
  CHECK(t(1100.0) == 900.0);
  CHECK_FALSE(t.is_constant());
  CHECK(kTau0.is_constant());
  CHECK(kTau0(1.0) == 840.0);
  CHECK_THROWS_AS(Tau0Reference(-1.0), std::invalid_argument);
}

TEST_CASE("scan validation") {
  SpectralScan s{{{1030.0, 100.0, 1.0}, {1029.0, 100.0, 1.0}}};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = SpectralScan{{{1030.0, -1.0, 1.0}}};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("decay reduction") {
  FitResult mono, bi;
  mono.names = {"lifetime_1"};
  mono.values = Eigen::VectorXd::Constant(1, 800.0);
  mono.std_errors = Eigen::VectorXd::Constant(1, 5.0);
  bi.names = {"lifetime_1", "lifetime_2"};
  bi.values = Eigen::Vector2d(150.0, 1800.0);
  bi.std_errors = Eigen::Vector2d(2.0, 20.0);
  const ModelSelection sel{DecayModelKind::Mono, 1.0, 9.0, mono, bi};
  CHECK(reduce_decay(1030.0, sel, LifetimeReduction::Selected).lifetime == 800.0);
  CHECK(reduce_decay(1030.0, sel, LifetimeReduction::FastComponent).lifetime == 150.0);
  CHECK(reduce_decay(1030.0, sel, LifetimeReduction::FastComponent).lifetime_error == 2.0);
}
