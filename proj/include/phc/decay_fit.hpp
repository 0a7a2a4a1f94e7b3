#pragma once

// Poisson maximum-likelihood reconvolution fits of TCSPC histograms.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "phc/tcspc.hpp"

namespace phc {

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::VectorXd std_errors;
  Eigen::MatrixXd covariance;

  std::string statistic;    // "poisson_deviance" or "chi_square"
  double statistic_value = 0.0;
  int degrees_of_freedom = 0;
  double reduced_statistic = 0.0;

  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  bool identifiable = true;
  std::vector<std::string> warnings;

  double value(std::string_view name) const;
  double error(std::string_view name) const;
  bool has(std::string_view name) const;
};

/// Histogram data with real-valued counts, so noise-free model curves can be
/// fitted directly.
struct DecayData {
  BinGrid grid;
  InstrumentResponse irf;
  std::vector<double> counts;

  static DecayData from(const TransientHistogram& hist);
  static DecayData from(const ExpectedCurve& curve);
  double total() const;
};

struct DecayFitOptions {
  int max_iterations = 200;
  double relative_step_tolerance = 1e-8;
  double gradient_tolerance = 1e-10;
  double min_lifetime_ratio = 1.2;  // below this a biexponential is unidentifiable
};

/// Fitted decay parameters: amplitude_i (counts per bin at t0), lifetime_i
/// (ps, lifetime_1 fastest), background (counts per bin), t0_shift (ps,
/// bounded to +-2 FWHM).
FitResult fit_monoexponential(const DecayData& data, const DecayFitOptions& options = {});
FitResult fit_monoexponential(const TransientHistogram& hist, const DecayFitOptions& options = {});
FitResult fit_biexponential(const DecayData& data, const DecayFitOptions& options = {});
FitResult fit_biexponential(const TransientHistogram& hist, const DecayFitOptions& options = {});

/// Model curve of a decay fit, through the same reconvolution used by the
/// simulator.
ExpectedCurve fitted_curve(const FitResult& fit, const DecayData& data);

/// Poisson deviance 2 sum[y ln(y/mu) - (y - mu)].
double poisson_deviance(std::span<const double> observed, std::span<const double> expected);

enum class DecayModelKind { Mono, Bi };

struct ModelSelection {
  DecayModelKind chosen;
  double delta_deviance;  // deviance(mono) - deviance(bi)
  double threshold;
  FitResult mono;
  FitResult bi;
};

/// Likelihood-ratio choice: biexponential only when the deviance drops by more
/// than `threshold`; ties go to the monoexponential.
ModelSelection select_model(const DecayData& data, double threshold = 9.0,
                            const DecayFitOptions& options = {});
ModelSelection select_model(const TransientHistogram& hist, double threshold = 9.0,
                            const DecayFitOptions& options = {});

std::string to_string(DecayModelKind kind);

}  // namespace phc
