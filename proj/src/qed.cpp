#include "phc/qed.hpp"

#include <numbers>
#include <stdexcept>

namespace phc {

CavityMode::CavityMode(double lambda_nm, double q_factor, double v_mode)
    : lambda_(lambda_nm), q_(q_factor), v_(v_mode) {
  if (!(lambda_nm > 0.0)) throw std::invalid_argument("cavity wavelength must be positive");
  if (!(q_factor > 1.0)) throw std::invalid_argument("cavity Q must exceed 1");
  if (!(v_mode > 0.0)) throw std::invalid_argument("mode volume must be positive");
}

void EmitterCoupling::validate() const {
  if (!(field_ratio >= 0.0 && field_ratio <= 1.0))
    throw std::invalid_argument("field ratio must lie in [0, 1]");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
}

double purcell_factor(double q_factor, double v_mode) {
  if (!(q_factor > 0.0) || !(v_mode > 0.0))
    throw std::invalid_argument("Q and mode volume must be positive");
  return 3.0 * q_factor / (4.0 * std::numbers::pi * std::numbers::pi * v_mode);
}

double mode_linewidth(double lambda_nm, double q_factor) {
  if (!(lambda_nm > 0.0) || !(q_factor > 0.0))
    throw std::invalid_argument("wavelength and Q must be positive");
  return lambda_nm / q_factor;
}

double photon_lifetime(double lambda_nm, double q_factor) {
  if (!(lambda_nm > 0.0) || !(q_factor > 0.0))
    throw std::invalid_argument("wavelength and Q must be positive");
  return q_factor * lambda_nm / (2.0 * std::numbers::pi * kSpeedOfLight);
}

double lorentzian(const CavityMode& cavity, double lambda_nm) {
  const double width2 = cavity.linewidth() * cavity.linewidth();
  const double detuning = cavity.wavelength() - lambda_nm;
  return width2 / (width2 + 4.0 * detuning * detuning);
}

double lifetime_ratio(double fp, const EmitterCoupling& coupling, const CavityMode& cavity) {
  const ModeTerm term{fp, coupling.field_ratio, &cavity};
  return lifetime_ratio(std::span(&term, 1), coupling.lambda_qd, coupling.alpha);
}

double lifetime_ratio(std::span<const ModeTerm> modes, double lambda_qd, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  double ratio = alpha;
  for (const auto& m : modes) {
    if (!(m.fp >= 0.0)) throw std::invalid_argument("Purcell factor must be non-negative");
    if (!(m.field_ratio >= 0.0 && m.field_ratio <= 1.0))
      throw std::invalid_argument("field ratio must lie in [0, 1]");
    ratio += m.fp / 3.0 * m.field_ratio * lorentzian(*m.cavity, lambda_qd);
  }
  return ratio;
}

double coupling_efficiency(double tau_fast, double tau_slow) {
  if (!(tau_fast > 0.0) || !(tau_fast <= tau_slow))
    throw std::invalid_argument("coupling efficiency needs 0 < tau_fast <= tau_slow");
  return 1.0 - tau_fast / tau_slow;
}

double enhanced_lifetime(double tau0, double ratio) {
  if (!(ratio > 0.0)) throw std::invalid_argument("lifetime ratio must be positive");
  return tau0 / ratio;
}

}  // namespace phc
