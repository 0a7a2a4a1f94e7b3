#pragma once

// Fits of lifetime against emission wavelength to the Lorentzian Purcell
// model tau(lambda) = tau0(lambda) / [sum_m (F_m/3) L_m(lambda) + alpha].

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "phc/decay_fit.hpp"
#include "phc/qed.hpp"

namespace phc {

struct SpectralPoint {
  double wavelength;            // nm
  double lifetime;              // ps
  double lifetime_error = 0.0;  // ps, 0 when unknown
};

struct SpectralScan {
  std::vector<SpectralPoint> points;

  /// Wavelengths strictly increasing, lifetimes positive, errors non-negative.
  void validate() const;
  /// True when every point carries a positive uncertainty.
  bool weighted() const;
};

/// Reference lifetime tau0(lambda) of an uncoupled emitter: a constant or a
/// table interpolated linearly and clamped at its ends.
class Tau0Reference {
 public:
  explicit Tau0Reference(double tau0_ps);
  explicit Tau0Reference(std::vector<std::pair<double, double>> table);  // (nm, ps)

  double operator()(double lambda_nm) const;
  bool is_constant() const { return table_.size() == 1; }
  const std::vector<std::pair<double, double>>& table() const { return table_; }

 private:
  std::vector<std::pair<double, double>> table_;
};

struct SpectralFitResult {
  /// Parameters F_1..F_M and alpha. statistic is "chi_square"; with unit
  /// weights the covariance is rescaled by the reduced chi-square.
  FitResult fit;
  bool weighted = false;
  std::vector<CavityMode> modes;

  // Per mode: tau2 = tau0(lambda_c) / (F_m/3 + alpha) and its delta-method error.
  std::vector<double> on_resonance_lifetime;
  std::vector<double> on_resonance_error;

  // Largest tau0/tau2 over the modes.
  double max_ratio = 0.0;
  double max_ratio_error = 0.0;
  int max_ratio_mode = 0;

  /// Model lifetime at a wavelength.
  double lifetime_at(double lambda_nm, const Tau0Reference& tau0) const;
};

struct SpectralFitOptions {
  int max_iterations = 200;
  double relative_step_tolerance = 1e-10;
  double gradient_tolerance = 1e-12;
  double coverage_linewidths = 1.5;  // required scan reach on each side of a mode
};

/// Mode wavelengths and linewidths are fixed; F_m >= 0 and alpha > 0 are free.
/// Throws std::invalid_argument when the scan does not reach
/// coverage_linewidths linewidths on both sides of every mode.
SpectralFitResult fit_spectral_model(const SpectralScan& scan, std::span<const CavityMode> modes,
                                     const Tau0Reference& tau0, const SpectralFitOptions& options = {});

/// Model lifetimes at the given wavelengths with Gaussian relative noise; each
/// point reports relative_noise * model as its error. Lifetimes below
/// resolution_floor are clipped to it, as a detection system would.
SpectralScan generate_spectral_scan(std::span<const double> wavelengths,
                                    std::span<const CavityMode> modes, std::span<const double> fp,
                                    double alpha, const Tau0Reference& tau0, double relative_noise,
                                    std::uint64_t seed, double resolution_floor = 0.0);

/// Evenly spaced wavelengths, both ends included.
std::vector<double> wavelength_grid(double first_nm, double last_nm, int count);

/// Full width at half depth of the dip in tau(lambda), read from the rate
/// tau0/tau with linear interpolation between points. Zero if no dip.
double dip_fwhm(const SpectralScan& scan, const Tau0Reference& tau0);

/// How a decay analysis is reduced to one lifetime per wavelength.
enum class LifetimeReduction {
  FastComponent,  // fast biexponential constant everywhere
  Selected,       // lifetime of the model chosen by select_model (fast one if bi)
};

SpectralPoint reduce_decay(double lambda_nm, const ModelSelection& selection,
                           LifetimeReduction reduction);

}  // namespace phc
