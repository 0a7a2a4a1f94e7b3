#pragma once

// Time-correlated single photon counting: multi-exponential decays
// reconvolved with a Gaussian instrument response, and seeded Monte Carlo
// sampling of histograms. Times in ps.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace phc {

/// FWHM of a Gaussian over its standard deviation, 2 sqrt(2 ln 2).
inline constexpr double kFwhmPerSigma = 2.3548200450309493;

struct InstrumentResponse {
  double fwhm = 150.0;  // ps
  double t0 = 1000.0;   // ps, peak position

  double sigma() const { return fwhm / kFwhmPerSigma; }
  void validate() const;
};

struct DecayComponent {
  double amplitude;  // value of the unconvolved decay at t = t0
  double lifetime;   // ps
};

struct DecayModel {
  std::vector<DecayComponent> components;
  double background = 0.0;  // per bin

  void validate() const;
};

struct BinGrid {
  double t_start = 0.0;     // ps, left edge of bin 0
  double bin_width = 12.0;  // ps
  std::size_t bins = 4096;

  double center(std::size_t i) const { return t_start + (static_cast<double>(i) + 0.5) * bin_width; }
  double t_end() const { return t_start + static_cast<double>(bins) * bin_width; }
  void validate() const;
};

/// Exponential decay A exp(-(t - t0)/tau) for t >= t0, convolved with a
/// unit-area Gaussian of width sigma centred on t0. sigma = 0 gives the bare
/// decay.
double convolved_exponential(double t, double amplitude, double lifetime, double t0, double sigma);

/// Partial derivatives of convolved_exponential with respect to
/// (amplitude, lifetime, t0).
struct ConvolvedGradient {
  double value, d_amplitude, d_lifetime, d_t0;
};
ConvolvedGradient convolved_exponential_gradient(double t, double amplitude, double lifetime,
                                                 double t0, double sigma);

struct ExpectedCurve {
  BinGrid grid;
  InstrumentResponse irf;
  std::vector<double> values;  // per-bin expectation including background
  double background = 0.0;
};

/// Model evaluated at bin centres: sum of convolved components + background.
ExpectedCurve expected_curve(const DecayModel& model, const InstrumentResponse& irf,
                             const BinGrid& grid);

/// expected_curve without input validation, for use inside optimizers.
ExpectedCurve expected_curve_unchecked(const DecayModel& model, const InstrumentResponse& irf,
                                       const BinGrid& grid);

struct TransientHistogram {
  BinGrid grid;
  InstrumentResponse irf;
  std::vector<std::uint64_t> counts;
  std::uint64_t total_counts = 0;

  void validate() const;
};

/// Draws `total_counts` signal photons multinomially from the background-free
/// curve, then adds Poisson background in every bin. Deterministic for a given
/// seed.
TransientHistogram sample_histogram(const ExpectedCurve& curve, std::uint64_t total_counts,
                                    std::uint64_t seed);

}  // namespace phc
