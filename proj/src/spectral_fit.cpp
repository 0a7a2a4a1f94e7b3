#include "phc/spectral_fit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "lm.hpp"
#include "phc/errors.hpp"

namespace phc {

namespace {

constexpr double kAlphaFloor = 1e-9;

std::vector<ModeTerm> terms(std::span<const CavityMode> modes, const Eigen::VectorXd& x) {
  std::vector<ModeTerm> out;
  for (std::size_t m = 0; m < modes.size(); ++m)
    out.push_back({x(static_cast<Eigen::Index>(m)), 1.0, &modes[m]});
  return out;
}

double model_ratio(std::span<const CavityMode> modes, const Eigen::VectorXd& x, double lambda) {
  const auto t = terms(modes, x);
  return lifetime_ratio(t, lambda, x(x.size() - 1));
}

// d(ratio)/d(F_1..F_M, alpha) at one wavelength.
Eigen::VectorXd ratio_gradient(std::span<const CavityMode> modes, double lambda) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(modes.size()) + 1);
  for (std::size_t m = 0; m < modes.size(); ++m)
    g(static_cast<Eigen::Index>(m)) = lorentzian(modes[m], lambda) / 3.0;
  g(g.size() - 1) = 1.0;
  return g;
}

void check_coverage(const SpectralScan& scan, std::span<const CavityMode> modes, double reach) {
  const double lo = scan.points.front().wavelength;
  const double hi = scan.points.back().wavelength;
  for (const auto& mode : modes) {
    const double need = reach * mode.linewidth();
    if (lo > mode.wavelength() - need || hi < mode.wavelength() + need) {
      std::ostringstream os;
      os << "insufficient spectral coverage: scan [" << lo << ", " << hi << "] nm must reach "
         << reach << " linewidths (" << need << " nm) on both sides of the mode at "
         << mode.wavelength() << " nm";
      throw std::invalid_argument(os.str());
    }
  }
  if (scan.points.size() < modes.size() + 2)
    throw std::invalid_argument("insufficient spectral coverage: too few scan points for the model");
}

}  // namespace

void SpectralScan::validate() const {
  if (points.empty()) throw std::invalid_argument("spectral scan is empty");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.wavelength)) throw std::invalid_argument("scan wavelengths must be finite");
    if (i > 0 && !(p.wavelength > points[i - 1].wavelength))
      throw std::invalid_argument("scan wavelengths must be strictly increasing");
    if (!(p.lifetime > 0.0)) throw std::invalid_argument("scan lifetimes must be positive");
    if (!(p.lifetime_error >= 0.0)) throw std::invalid_argument("lifetime errors must be non-negative");
  }
}

bool SpectralScan::weighted() const {
  return !points.empty() &&
         std::all_of(points.begin(), points.end(), [](const auto& p) { return p.lifetime_error > 0.0; });
}

Tau0Reference::Tau0Reference(double tau0_ps) : table_{{0.0, tau0_ps}} {
  if (!(tau0_ps > 0.0)) throw std::invalid_argument("tau0 must be positive");
}

Tau0Reference::Tau0Reference(std::vector<std::pair<double, double>> table) : table_(std::move(table)) {
  if (table_.empty()) throw std::invalid_argument("tau0 table is empty");
  for (std::size_t i = 0; i < table_.size(); ++i) {
    if (!(table_[i].second > 0.0)) throw std::invalid_argument("tau0 values must be positive");
    if (i > 0 && !(table_[i].first > table_[i - 1].first))
      throw std::invalid_argument("tau0 table wavelengths must be strictly increasing");
  }
}

double Tau0Reference::operator()(double lambda_nm) const {
  if (table_.size() == 1 || lambda_nm <= table_.front().first) return table_.front().second;
  if (lambda_nm >= table_.back().first) return table_.back().second;
  const auto hi = std::upper_bound(table_.begin(), table_.end(), lambda_nm,
                                   [](double l, const auto& e) { return l < e.first; });
  const auto lo = hi - 1;
  const double w = (lambda_nm - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

double SpectralFitResult::lifetime_at(double lambda_nm, const Tau0Reference& tau0) const {
  return tau0(lambda_nm) / model_ratio(modes, fit.values, lambda_nm);
}

SpectralFitResult fit_spectral_model(const SpectralScan& scan, std::span<const CavityMode> modes,
                                     const Tau0Reference& tau0, const SpectralFitOptions& options) {
  scan.validate();
  if (modes.empty()) throw std::invalid_argument("spectral fit needs at least one cavity mode");
  check_coverage(scan, modes, options.coverage_linewidths);

  const auto n_pts = static_cast<Eigen::Index>(scan.points.size());
  const auto n_par = static_cast<Eigen::Index>(modes.size()) + 1;
  const bool weighted = scan.weighted();

  Eigen::VectorXd lambda(n_pts), tau(n_pts), ref(n_pts), sigma(n_pts);
  for (Eigen::Index i = 0; i < n_pts; ++i) {
    const auto& p = scan.points[static_cast<std::size_t>(i)];
    lambda(i) = p.wavelength;
    tau(i) = p.lifetime;
    ref(i) = tau0(p.wavelength);
    sigma(i) = weighted ? p.lifetime_error : 1.0;
  }

  // The rate tau0/tau is linear in the parameters; its weighted solution starts the fit.
  Eigen::MatrixXd design(n_pts, n_par);
  Eigen::VectorXd rate(n_pts);
  for (Eigen::Index i = 0; i < n_pts; ++i) {
    const double w = tau(i) / sigma(i);  // propagated weight of the rate
    design.row(i) = w * ratio_gradient(modes, lambda(i)).transpose();
    rate(i) = w * ref(i) / tau(i);
  }
  Eigen::VectorXd x0 = design.colPivHouseholderQr().solve(rate);
  for (Eigen::Index k = 0; k + 1 < n_par; ++k) x0(k) = std::max(x0(k), 0.0);
  x0(n_par - 1) = std::max(x0(n_par - 1), 1e-3);

  const Eigen::VectorXd lower = [&] {
    Eigen::VectorXd l = Eigen::VectorXd::Zero(n_par);
    l(n_par - 1) = kAlphaFloor;
    return l;
  }();
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(n_par, std::numeric_limits<double>::max());

  // Model jacobian d tau / d x.
  auto jacobian = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& j, Eigen::VectorXd& model) {
    j.resize(n_pts, n_par);
    model.resize(n_pts);
    for (Eigen::Index i = 0; i < n_pts; ++i) {
      const double d = model_ratio(modes, x, lambda(i));
      model(i) = ref(i) / d;
      j.row(i) = -(ref(i) / (d * d)) * ratio_gradient(modes, lambda(i)).transpose();
    }
  };

  const detail::Objective chi2 = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                                     Eigen::MatrixXd* curv) {
    Eigen::MatrixXd j;
    Eigen::VectorXd model;
    jacobian(x, j, model);
    const Eigen::VectorXd r = (tau - model).cwiseQuotient(sigma);
    if (grad) {
      const Eigen::MatrixXd jw = sigma.cwiseInverse().asDiagonal() * j;
      *grad = -2.0 * jw.transpose() * r;
      *curv = 2.0 * jw.transpose() * jw;
    }
    return r.squaredNorm();
  };

  const auto run = detail::minimize(
      chi2, x0, lower, upper,
      {options.max_iterations, options.relative_step_tolerance, options.gradient_tolerance});
  if (!run.converged) {
    std::ostringstream os;
    os << "spectral fit did not converge after " << run.iterations << " iterations; last iterate:";
    for (Eigen::Index k = 0; k < n_par; ++k) os << ' ' << run.x(k);
    throw FitError(os.str(), run.iterations);
  }

  SpectralFitResult out;
  out.weighted = weighted;
  out.modes.assign(modes.begin(), modes.end());
  FitResult& r = out.fit;
  for (std::size_t m = 0; m < modes.size(); ++m) r.names.push_back("F_" + std::to_string(m + 1));
  r.names.push_back("alpha");
  r.values = run.x;

  Eigen::MatrixXd j;
  Eigen::VectorXd model;
  jacobian(run.x, j, model);
  const Eigen::MatrixXd jw = sigma.cwiseInverse().asDiagonal() * j;
  r.covariance = detail::covariance_from_information(jw.transpose() * jw);
  r.statistic = "chi_square";
  r.statistic_value = run.objective;
  r.degrees_of_freedom = static_cast<int>(n_pts - n_par);
  r.reduced_statistic = r.degrees_of_freedom > 0 ? run.objective / r.degrees_of_freedom : 0.0;
  if (!weighted) {
    r.covariance *= r.reduced_statistic;
    r.warnings.push_back("no lifetime uncertainties: unit weights, errors scaled by reduced chi-square");
  }
  r.std_errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.iterations = run.iterations;
  r.converged = run.converged;
  r.gradient_norm = run.gradient_norm;

  const double alpha = run.x(n_par - 1);
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const auto k = static_cast<Eigen::Index>(m);
    const double ratio = run.x(k) / 3.0 + alpha;
    const double t0 = tau0(modes[m].wavelength());
    // Gradient of the ratio in (F_m, alpha).
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_par);
    g(k) = 1.0 / 3.0;
    g(n_par - 1) = 1.0;
    const double ratio_var = std::max(g.dot(r.covariance * g), 0.0);
    out.on_resonance_lifetime.push_back(t0 / ratio);
    out.on_resonance_error.push_back(t0 / (ratio * ratio) * std::sqrt(ratio_var));
    if (m == 0 || ratio > out.max_ratio) {
      out.max_ratio = ratio;
      out.max_ratio_error = std::sqrt(ratio_var);
      out.max_ratio_mode = static_cast<int>(m);
    }
  }
  return out;
}

SpectralScan generate_spectral_scan(std::span<const double> wavelengths,
                                    std::span<const CavityMode> modes, std::span<const double> fp,
                                    double alpha, const Tau0Reference& tau0, double relative_noise,
                                    std::uint64_t seed, double resolution_floor) {
  if (fp.size() != modes.size()) throw std::invalid_argument("one Purcell factor per mode is required");
  if (!(relative_noise >= 0.0)) throw std::invalid_argument("relative noise must be non-negative");
  std::vector<ModeTerm> t;
  for (std::size_t m = 0; m < modes.size(); ++m) t.push_back({fp[m], 1.0, &modes[m]});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  SpectralScan scan;
  for (const double l : wavelengths) {
    const double clean = std::max(tau0(l) / lifetime_ratio(t, l, alpha), resolution_floor);
    double value = clean * (1.0 + relative_noise * noise(rng));
    value = std::max(value, 1e-3 * clean);
    scan.points.push_back({l, value, relative_noise * clean});
  }
  scan.validate();
  return scan;
}

std::vector<double> wavelength_grid(double first_nm, double last_nm, int count) {
  if (count < 2 || !(last_nm > first_nm))
    throw std::invalid_argument("wavelength grid needs count >= 2 and last > first");
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = first_nm + (last_nm - first_nm) * i / (count - 1);
  return out;
}

double dip_fwhm(const SpectralScan& scan, const Tau0Reference& tau0) {
  scan.validate();
  std::vector<double> rate;
  for (const auto& p : scan.points) rate.push_back(tau0(p.wavelength) / p.lifetime);
  const auto peak = std::max_element(rate.begin(), rate.end());
  const double base = *std::min_element(rate.begin(), rate.end());
  if (!(*peak > base)) return 0.0;
  const double half = 0.5 * (*peak + base);
  const auto ip = static_cast<std::size_t>(peak - rate.begin());

  auto crossing = [&](std::size_t i, std::size_t j) {
    const double w = (half - rate[i]) / (rate[j] - rate[i]);
    return scan.points[i].wavelength + w * (scan.points[j].wavelength - scan.points[i].wavelength);
  };
  std::size_t l = ip;
  while (l > 0 && rate[l - 1] >= half) --l;
  std::size_t h = ip;
  while (h + 1 < rate.size() && rate[h + 1] >= half) ++h;
  const double left = l > 0 ? crossing(l - 1, l) : scan.points.front().wavelength;
  const double right = h + 1 < rate.size() ? crossing(h, h + 1) : scan.points.back().wavelength;
  return right - left;
}

SpectralPoint reduce_decay(double lambda_nm, const ModelSelection& selection,
                           LifetimeReduction reduction) {
  const FitResult& fit = reduction == LifetimeReduction::FastComponent ||
                                 selection.chosen == DecayModelKind::Bi
                             ? selection.bi
                             : selection.mono;
  return {lambda_nm, fit.value("lifetime_1"), fit.error("lifetime_1")};
}

}  // namespace phc
