#include "phc/tcspc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace phc {

namespace {

// exp(z^2) erfc(z) for z >= 0.
double erfcx(double z) {
  if (z < 26.0) return std::exp(z * z) * std::erfc(z);
  const double inv2 = 1.0 / (z * z);
  return (1.0 - 0.5 * inv2 * (1.0 - 1.5 * inv2 * (1.0 - 2.5 * inv2))) /
         (z * std::sqrt(std::numbers::pi));
}

struct Shape {
  double value;  // unit amplitude
  double gauss;  // IRF density at t
};

Shape unit_shape(double t, double lifetime, double t0, double sigma) {
  const double u = t - t0;
  if (sigma <= 0.0) return {u >= 0.0 ? std::exp(-u / lifetime) : 0.0, 0.0};
  const double z = (sigma * sigma / lifetime - u) / (std::numbers::sqrt2 * sigma);
  const double g = std::exp(-0.5 * u * u / (sigma * sigma));
  double value;
  if (z > 0.0) {
    value = 0.5 * g * erfcx(z);
  } else {
    value = 0.5 * std::exp(0.5 * sigma * sigma / (lifetime * lifetime) - u / lifetime) *
            std::erfc(z);
  }
  return {value, g / (std::sqrt(2.0 * std::numbers::pi) * sigma)};
}

}  // namespace

void InstrumentResponse::validate() const {
  if (!(fwhm > 0.0)) throw std::invalid_argument("IRF FWHM must be positive");
  if (!std::isfinite(t0)) throw std::invalid_argument("IRF t0 must be finite");
}

void DecayModel::validate() const {
  if (components.empty()) throw std::invalid_argument("decay model needs at least one component");
  bool any = false;
  for (const auto& c : components) {
    if (!(c.amplitude >= 0.0)) throw std::invalid_argument("amplitudes must be non-negative");
    if (!(c.lifetime > 0.0)) throw std::invalid_argument("lifetimes must be positive");
    any = any || c.amplitude > 0.0;
  }
  if (!any) throw std::invalid_argument("amplitudes must not all be zero");
  for (std::size_t i = 0; i < components.size(); ++i)
    for (std::size_t j = i + 1; j < components.size(); ++j)
      if (components[i].lifetime == components[j].lifetime)
        throw std::invalid_argument("component lifetimes must be distinct");
  if (!(background >= 0.0)) throw std::invalid_argument("background must be non-negative");
}

void BinGrid::validate() const {
  if (!(bin_width > 0.0)) throw std::invalid_argument("bin width must be positive");
  if (bins == 0) throw std::invalid_argument("grid needs at least one bin");
}

void TransientHistogram::validate() const {
  grid.validate();
  if (counts.size() != grid.bins) throw std::invalid_argument("histogram size does not match grid");
  if (std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}) != total_counts)
    throw std::invalid_argument("total_counts does not equal the sum of counts");
}

double convolved_exponential(double t, double amplitude, double lifetime, double t0, double sigma) {
  return amplitude * unit_shape(t, lifetime, t0, sigma).value;
}

ConvolvedGradient convolved_exponential_gradient(double t, double amplitude, double lifetime,
                                                 double t0, double sigma) {
  const Shape s = unit_shape(t, lifetime, t0, sigma);
  const double f = amplitude * s.value;
  const double u = t - t0;
  const double ratio2 = sigma * sigma / (lifetime * lifetime);
  return {f, s.value,
          f * (u / (lifetime * lifetime) - ratio2 / lifetime) + amplitude * ratio2 * s.gauss,
          f / lifetime - amplitude * s.gauss};
}

ExpectedCurve expected_curve(const DecayModel& model, const InstrumentResponse& irf,
                             const BinGrid& grid) {
  model.validate();
  irf.validate();
  grid.validate();
  return expected_curve_unchecked(model, irf, grid);
}

ExpectedCurve expected_curve_unchecked(const DecayModel& model, const InstrumentResponse& irf,
                                       const BinGrid& grid) {
  ExpectedCurve curve{grid, irf, std::vector<double>(grid.bins, model.background), model.background};
  const double sigma = irf.sigma();
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double t = grid.center(i);
    for (const auto& c : model.components)
      curve.values[i] += convolved_exponential(t, c.amplitude, c.lifetime, irf.t0, sigma);
  }
  return curve;
}

TransientHistogram sample_histogram(const ExpectedCurve& curve, std::uint64_t total_counts,
                                    std::uint64_t seed) {
  if (total_counts == 0) throw std::invalid_argument("total_counts must be positive");
  std::vector<double> weight(curve.values.size());
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (!(curve.values[i] >= 0.0)) throw std::invalid_argument("expected curve must be non-negative");
    weight[i] = std::max(curve.values[i] - curve.background, 0.0);
  }
  double mass = std::accumulate(weight.begin(), weight.end(), 0.0);
  if (!(mass > 0.0)) throw std::invalid_argument("expected curve carries no signal");

  std::mt19937_64 rng(seed);
  TransientHistogram hist{curve.grid, curve.irf, std::vector<std::uint64_t>(weight.size(), 0), 0};

  std::size_t last = 0;
  for (std::size_t i = 0; i < weight.size(); ++i)
    if (weight[i] > 0.0) last = i;

  // Multinomial draw as a chain of conditional binomials.
  std::uint64_t remaining = total_counts;
  for (std::size_t i = 0; i < weight.size() && remaining > 0; ++i) {
    if (weight[i] <= 0.0) continue;
    if (i == last) {
      hist.counts[i] = remaining;
      remaining = 0;
      break;
    }
    const double p = std::clamp(weight[i] / mass, 0.0, 1.0);
    std::binomial_distribution<std::uint64_t> draw(remaining, p);
    const std::uint64_t k = draw(rng);
    hist.counts[i] = k;
    remaining -= k;
    mass -= weight[i];
    if (mass <= 0.0) mass = weight[last];
  }

  if (curve.background > 0.0) {
    std::poisson_distribution<std::uint64_t> noise(curve.background);
    for (auto& c : hist.counts) c += noise(rng);
  }
  hist.total_counts = std::accumulate(hist.counts.begin(), hist.counts.end(), std::uint64_t{0});
  return hist;
}

}  // namespace phc
