#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "phc/tcspc.hpp"

using namespace phc;

namespace {

// Midpoint Riemann sum of A exp(-s/tau) g(t - s) over s >= 0, step h.
double riemann_convolution(double t, double amplitude, double tau, double sigma, double h) {
  const double norm = 1 / (sigma * std::sqrt(2 * std::numbers::pi));
  double sum = 0;
  for (double s = 0.5 * h; s < 40 * tau; s += h) {
    const double u = (t - s) / sigma;
    if (u < -12) break;
    if (u > 12) continue;
    sum += amplitude * std::exp(-s / tau) * norm * std::exp(-0.5 * u * u) * h;
  }
  return sum;
}

}  // namespace

TEST_CASE("convolution matches a 0.1 ps Riemann sum") {
  const InstrumentResponse irf{150.0, 0.0};
  const BinGrid grid{-1000.0, 10.0, 800};
  const auto curve = expected_curve(DecayModel{{{1.0, 800.0}}, 0.0}, irf, grid);
  double worst = 0;
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double ref = riemann_convolution(grid.center(i), 1.0, 800.0, irf.sigma(), 0.1);
    if (ref > 1e-8) worst = std::max(worst, std::abs(curve.values[i] / ref - 1));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("narrow IRF reduces to the bare exponential") {
  const InstrumentResponse irf{1e-3, 1000.0};
  const BinGrid grid{1000.0, 8.0, 500};  // t0 on a bin edge
  const auto curve = expected_curve(DecayModel{{{3.0, 300.0}, {1.0, 1500.0}}, 0.0}, irf, grid);
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double t = grid.center(i) - 1000.0;
    const double bare = 3 * std::exp(-t / 300) + std::exp(-t / 1500);
    CHECK(curve.values[i] == doctest::Approx(bare).epsilon(1e-6));
  }
}

TEST_CASE("convolution conserves area") {
  for (double fwhm : {50.0, 150.0, 400.0}) {
    const InstrumentResponse irf{fwhm, 0.0};
    const double tau = 700.0;
    const BinGrid grid{-8 * irf.sigma(), 1.0, std::size_t(8 * irf.sigma() + 10 * tau) + 1};
    const auto curve = expected_curve(DecayModel{{{2.0, tau}}, 0.0}, irf, grid);
    const double area = std::accumulate(curve.values.begin(), curve.values.end(), 0.0) * grid.bin_width;
    CHECK(area == doctest::Approx(2.0 * tau).epsilon(1e-3));
  }
}

TEST_CASE("gradient agrees with central differences") {
  const double sigma = 150 / kFwhmPerSigma;
  for (double t : {-300.0, 0.0, 40.0, 900.0, 5000.0}) {
    const auto g = convolved_exponential_gradient(t, 2.5, 640.0, 10.0, sigma);
    CHECK(g.value == doctest::Approx(convolved_exponential(t, 2.5, 640.0, 10.0, sigma)).epsilon(1e-15));
    const double hA = 1e-6, hT = 1e-3, h0 = 1e-3;
    const double dA = (convolved_exponential(t, 2.5 + hA, 640, 10, sigma) - convolved_exponential(t, 2.5 - hA, 640, 10, sigma)) / (2 * hA);
    const double dT = (convolved_exponential(t, 2.5, 640 + hT, 10, sigma) - convolved_exponential(t, 2.5, 640 - hT, 10, sigma)) / (2 * hT);
    const double d0 = (convolved_exponential(t, 2.5, 640, 10 + h0, sigma) - convolved_exponential(t, 2.5, 640, 10 - h0, sigma)) / (2 * h0);
    CHECK(g.d_amplitude == doctest::Approx(dA).epsilon(1e-7).scale(1e-12));
    CHECK(g.d_lifetime == doctest::Approx(dT).epsilon(1e-6).scale(1e-12));
    CHECK(g.d_t0 == doctest::Approx(d0).epsilon(1e-6).scale(1e-12));
  }
}

TEST_CASE("curve never drops below background") {
  const auto curve = expected_curve(DecayModel{{{5.0, 150.0}, {0.3, 1800.0}}, 2.5}, InstrumentResponse{}, BinGrid{});
  for (double v : curve.values) CHECK(v >= 2.5);
  CHECK(curve.background == 2.5);
}

TEST_CASE("biexponential tail has the slow slope") {
  const InstrumentResponse irf{150.0, 1000.0};
  const BinGrid grid{0.0, 12.0, 4096};
  const auto curve = expected_curve(DecayModel{{{18.0, 150.0}, {1.0, 1800.0}}, 0.0}, irf, grid);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double t = grid.center(i) - irf.t0;
    if (t < 10 * 150 || t > 8000) continue;
    const double y = std::log(curve.values[i]);
    sx += t, sy += y, sxx += t * t, sxy += t * y, ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(-1 / slope == doctest::Approx(1800.0).epsilon(0.01));
}

TEST_CASE("sampling is deterministic and conserves counts") {
  const auto curve = expected_curve(DecayModel{{{1.0, 840.0}}, 0.0}, InstrumentResponse{}, BinGrid{});
  const auto a = sample_histogram(curve, 100000, 42), b = sample_histogram(curve, 100000, 42);
  const auto c = sample_histogram(curve, 100000, 43);
  CHECK(a.counts == b.counts);
  CHECK(a.counts != c.counts);
  CHECK(std::accumulate(a.counts.begin(), a.counts.end(), std::uint64_t{0}) == 100000);
  CHECK(a.total_counts == 100000);
  a.validate();
}

TEST_CASE("flat curve fills bins uniformly") {
  ExpectedCurve flat{BinGrid{0.0, 10.0, 10}, InstrumentResponse{}, std::vector<double>(10, 1.0), 0.0};
  int within = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto h = sample_histogram(flat, 1000000, seed);
    for (auto k : h.counts) within += std::abs(double(k) / 1e5 - 1) < 0.01, ++total;
  }
  CHECK(double(within) / total >= 0.99);
}

TEST_CASE("sample mean matches the expectation") {
  const BinGrid grid{0.0, 50.0, 200};
  const auto curve = expected_curve(DecayModel{{{1.0, 1500.0}}, 0.5}, InstrumentResponse{}, grid);
  const std::uint64_t total = 20000;
  const double mass = std::accumulate(curve.values.begin(), curve.values.end(), 0.0) - 0.5 * grid.bins;
  std::vector<double> sum(grid.bins, 0.0);
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    const auto h = sample_histogram(curve, total, 1000 + s);
    for (std::size_t i = 0; i < grid.bins; ++i) sum[i] += double(h.counts[i]);
  }
  int good = 0;
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double expected = (curve.values[i] - 0.5) / mass * total + 0.5;
    const double se = std::sqrt(expected / seeds);
    good += std::abs(sum[i] / seeds - expected) <= 3 * se;
  }
  CHECK(good >= 0.95 * grid.bins);
}

TEST_CASE("sampling rejects empty requests") {
  const auto curve = expected_curve(DecayModel{{{1.0, 840.0}}, 0.0}, InstrumentResponse{}, BinGrid{});
  CHECK_THROWS_AS(sample_histogram(curve, 0, 1), std::invalid_argument);
  ExpectedCurve zero{BinGrid{0.0, 10.0, 10}, InstrumentResponse{}, std::vector<double>(10, 0.0), 0.0};
  CHECK_THROWS_AS(sample_histogram(zero, 100, 1), std::invalid_argument);
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(expected_curve(DecayModel{{}, 0.0}, InstrumentResponse{}, BinGrid{}), std::invalid_argument);
  CHECK_THROWS_AS(expected_curve(DecayModel{{{1.0, -5.0}}, 0.0}, InstrumentResponse{}, BinGrid{}), std::invalid_argument);
  CHECK_THROWS_AS(expected_curve(DecayModel{{{1.0, 5.0}, {1.0, 5.0}}, 0.0}, InstrumentResponse{}, BinGrid{}), std::invalid_argument);
  CHECK_THROWS_AS(expected_curve(DecayModel{{{1.0, 5.0}}, 0.0}, InstrumentResponse{0.0, 0.0}, BinGrid{}), std::invalid_argument);
  CHECK_THROWS_AS(expected_curve(DecayModel{{{1.0, 5.0}}, 0.0}, InstrumentResponse{}, BinGrid{0.0, 1.0, 0}), std::invalid_argument);
}
