#pragma once

// Weak-coupling cavity QED in closed form. Wavelengths in nm, times in ps.

#include <span>

namespace phc {

/// Vacuum speed of light in nm/ps.
inline constexpr double kSpeedOfLight = 299792.458;

class CavityMode {
 public:
  CavityMode(double lambda_nm, double q_factor, double v_mode = 1.0);

  double wavelength() const { return lambda_; }
  double q_factor() const { return q_; }
  double mode_volume() const { return v_; }
  /// lambda / Q
  double linewidth() const { return lambda_ / q_; }

 private:
  double lambda_;
  double q_;
  double v_;
};

struct EmitterCoupling {
  double field_ratio = 1.0;  // |E(r)|^2 / |E_max|^2
  double lambda_qd = 0.0;    // nm
  double alpha = 0.0;        // emission into residual modes, in units of 1/tau0

  void validate() const;
};

/// F_p = 3 Q / (4 pi^2 V), V in (lambda/n)^3.
double purcell_factor(double q_factor, double v_mode);

double mode_linewidth(double lambda_nm, double q_factor);

/// Q lambda / (2 pi c), in ps.
double photon_lifetime(double lambda_nm, double q_factor);

/// Unit-peak Lorentzian dl^2 / (dl^2 + 4 (lambda_c - lambda)^2).
double lorentzian(const CavityMode& cavity, double lambda_nm);

/// tau0 / tau for an emitter coupled to one cavity mode:
///   (fp/3) field_ratio L(lambda_qd) + alpha.
double lifetime_ratio(double fp, const EmitterCoupling& coupling, const CavityMode& cavity);

/// One Purcell term per mode, each with its own Purcell factor, plus a
/// single residual-mode term.
struct ModeTerm {
  double fp;
  double field_ratio;
  const CavityMode* cavity;
};
double lifetime_ratio(std::span<const ModeTerm> modes, double lambda_qd, double alpha);

/// beta = 1 - tau_fast / tau_slow. Requires 0 < tau_fast <= tau_slow.
double coupling_efficiency(double tau_fast, double tau_slow);

/// tau0 / ratio.
double enhanced_lifetime(double tau0, double ratio);

}  // namespace phc
