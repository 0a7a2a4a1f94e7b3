#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "phc/decay_fit.hpp"
#include "phc/errors.hpp"

using namespace phc;

namespace {

const InstrumentResponse kIrf{150.0, 1000.0};
const BinGrid kGrid{0.0, 12.0, 4096};

// Components scaled so that `counts` signal photons are expected.
DecayModel with_counts(std::vector<DecayComponent> comps, double counts, double background = 0.0) {
  const auto unit = expected_curve(DecayModel{comps, 0.0}, kIrf, kGrid);
  const double mass = std::accumulate(unit.values.begin(), unit.values.end(), 0.0);
  for (auto& c : comps) c.amplitude *= counts / mass;
  return {comps, background};
}

TransientHistogram draw(const DecayModel& m, std::uint64_t counts, std::uint64_t seed) {
  return sample_histogram(expected_curve(m, kIrf, kGrid), counts, seed);
}

const DecayModel kMono = with_counts({{1.0, 840.0}}, 1e5);
const DecayModel kSlow = with_counts({{1.0, 1800.0}}, 1e5);
// 18 * 150 : 1 * 1800 puts 60% of the photons in the fast component.
const DecayModel kBi = with_counts({{18.0, 150.0}, {1.0, 1800.0}}, 1e5);

}  // namespace

TEST_CASE("monoexponential round trip") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto fit = fit_monoexponential(draw(kMono, 100000, seed));
    CHECK(fit.converged);
    CHECK(fit.value("lifetime_1") == doctest::Approx(840.0).epsilon(0.03));
    CHECK(fit.statistic == "poisson_deviance");
    CHECK(fit.degrees_of_freedom == int(kGrid.bins) - 4);
  }
  CHECK(fit_monoexponential(draw(kSlow, 100000, 9)).value("lifetime_1") == doctest::Approx(1800.0).epsilon(0.03));
}

TEST_CASE("noise-free curves are recovered exactly") {
  const auto mono = fit_monoexponential(DecayData::from(expected_curve(kMono, kIrf, kGrid)));
  CHECK(mono.value("lifetime_1") == doctest::Approx(840.0).epsilon(1e-4));
  CHECK(mono.value("amplitude_1") == doctest::Approx(kMono.components[0].amplitude).epsilon(1e-4));
  CHECK(std::abs(mono.value("t0_shift")) < 1e-2);

  const auto bi = fit_biexponential(DecayData::from(expected_curve(kBi, kIrf, kGrid)));
  CHECK(bi.value("lifetime_1") == doctest::Approx(150.0).epsilon(1e-4));
  CHECK(bi.value("lifetime_2") == doctest::Approx(1800.0).epsilon(1e-4));
  CHECK(bi.value("amplitude_1") == doctest::Approx(kBi.components[0].amplitude).epsilon(1e-4));
}

TEST_CASE("biexponential round trip") {
  const auto fit = fit_biexponential(draw(kBi, 100000, 5));
  CHECK(fit.value("lifetime_1") == doctest::Approx(150.0).epsilon(0.20));
  CHECK(fit.value("lifetime_2") == doctest::Approx(1800.0).epsilon(0.05));
  CHECK(fit.identifiable);
  CHECK(fit.names == std::vector<std::string>{"amplitude_1", "lifetime_1", "amplitude_2", "lifetime_2", "background", "t0_shift"});
}

TEST_CASE("biexponential fit of a single decay collapses to it") {
  const auto hist = draw(kSlow, 100000, 11);
  const auto fit = fit_biexponential(hist);
  const auto mono = fit_monoexponential(hist);
  CHECK(fit.value("lifetime_2") == doctest::Approx(1800.0).epsilon(0.03));
  // either the fast amplitude vanishes or the two lifetimes merge
  const bool vanished = fit.value("amplitude_1") <= 2 * fit.error("amplitude_1") + 1e-9;
  const bool merged = std::abs(fit.value("lifetime_1") - fit.value("lifetime_2")) <= fit.error("lifetime_1");
  CHECK((vanished || merged));
  CHECK(fit.statistic_value == doctest::Approx(mono.statistic_value).epsilon(1e-3));
  if (merged)
    CHECK(fit.value("amplitude_1") + fit.value("amplitude_2") == doctest::Approx(mono.value("amplitude_1")).epsilon(1e-2));
}

TEST_CASE("a 44 ps component sits below the time resolution") {
  const auto m = with_counts({{840.0 / 44 * 1.5, 44.0}, {1.0, 1800.0}}, 1e5);
  const auto fit = fit_biexponential(draw(m, 100000, 21));
  CHECK(fit.value("lifetime_2") == doctest::Approx(1800.0).epsilon(0.05));
  CHECK(fit.value("lifetime_1") < 150.0);
  CHECK(fit.error("lifetime_1") / fit.value("lifetime_1") > fit.error("lifetime_2") / fit.value("lifetime_2"));
}

TEST_CASE("model selection picks the true model") {
  int mono = 0, bi = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    mono += select_model(draw(kMono, 100000, 1000 + seed)).chosen == DecayModelKind::Mono;
    bi += select_model(draw(kBi, 100000, 2000 + seed)).chosen == DecayModelKind::Bi;
  }
  CHECK(mono >= 95);
  CHECK(bi >= 95);
  CHECK(select_model(DecayData::from(expected_curve(kMono, kIrf, kGrid))).chosen == DecayModelKind::Mono);
}

TEST_CASE("lifetime error shrinks with counts") {
  std::vector<double> rms;
  for (double counts : {1e4, 1e5, 1e6}) {
    const auto m = with_counts({{1.0, 840.0}}, counts);
    double sum = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double tau = fit_monoexponential(draw(m, std::uint64_t(counts), 500 + seed)).value("lifetime_1");
      sum += (tau - 840) * (tau - 840);
    }
    rms.push_back(std::sqrt(sum / 20));
  }
  CHECK(rms[1] < rms[0]);
  CHECK(rms[2] < rms[1]);
  CHECK(rms[2] < 0.1 * rms[0] * 3);
}

TEST_CASE("one-sigma intervals cover the truth about 68% of the time") {
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto fit = fit_monoexponential(draw(kMono, 100000, 7000 + seed));
    covered += std::abs(fit.value("lifetime_1") - 840.0) <= fit.error("lifetime_1");
  }
  CHECK(covered >= 60);
  CHECK(covered <= 75);
}

TEST_CASE("deviance of the generating model follows chi-square") {
  const auto m = with_counts({{1.0, 840.0}}, 1e5, 20.0);
  const auto curve = expected_curve(m, kIrf, kGrid);
  const auto hist = sample_histogram(curve, 100000, 77);
  const std::vector<double> y(hist.counts.begin(), hist.counts.end());
  const double d = poisson_deviance(y, curve.values);
  CHECK(std::abs(d - double(kGrid.bins)) < 2 * std::sqrt(2.0 * kGrid.bins));
}

TEST_CASE("fitted curve reuses the simulator") {
  const auto data = DecayData::from(draw(kMono, 100000, 4));
  const auto fit = fit_monoexponential(data);
  const auto curve = fitted_curve(fit, data);
  InstrumentResponse shifted = kIrf;
  shifted.t0 += fit.value("t0_shift");
  const auto direct = expected_curve(
      DecayModel{{{fit.value("amplitude_1"), fit.value("lifetime_1")}}, fit.value("background")}, shifted, kGrid);
  CHECK(curve.values == direct.values);
}

TEST_CASE("deviance") {
  const std::vector<double> y{0, 3, 10}, mu{0.5, 3, 10};
  CHECK(poisson_deviance(y, mu) == doctest::Approx(2 * 0.5));
  CHECK(poisson_deviance(std::vector<double>{4, 4}, std::vector<double>{4, 4}) == 0.0);
  CHECK_THROWS_AS(poisson_deviance(y, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("non-convergence is reported") {
  DecayFitOptions opt;
  opt.max_iterations = 1;
  try {
    fit_biexponential(draw(kBi, 100000, 5), opt);
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(e.iterations() >= 1);
    CHECK(std::string(e.what()).find("lifetime") != std::string::npos);
  }
}

TEST_CASE("low statistics are flagged") {
  const auto m = with_counts({{1.0, 840.0}}, 500);
  const auto fit = fit_monoexponential(draw(m, 500, 3));
  REQUIRE(!fit.warnings.empty());
  CHECK(fit.warnings.front().find("low statistics") != std::string::npos);
}
