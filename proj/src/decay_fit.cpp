#include "phc/decay_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "lm.hpp"
#include "phc/errors.hpp"

namespace phc {

namespace {

constexpr double kMuFloor = 1e-300;
// Bins with a vanishing expectation would otherwise dominate the Fisher curvature.
constexpr double kCurvatureFloor = 1e-6;

struct Component {
  double amplitude;
  double lifetime;
};

struct Start {
  std::vector<Component> components;
  double background;
};

// Internal layout: [A_1, log tau_1, ..., A_K, log tau_K, background, t0 shift].
// Amplitudes stay linear so a vanished component sits exactly on its zero bound.
struct Layout {
  int components;
  int size() const { return 2 * components + 2; }
  int background() const { return 2 * components; }
  int shift() const { return 2 * components + 1; }
};

DecayModel model_from(const Eigen::VectorXd& x, const Layout& layout) {
  DecayModel model;
  for (int c = 0; c < layout.components; ++c)
    model.components.push_back({x(2 * c), std::exp(x(2 * c + 1))});
  model.background = x(layout.background());
  return model;
}

InstrumentResponse shifted(const InstrumentResponse& irf, double shift) {
  return {irf.fwhm, irf.t0 + shift};
}

// Natural-parameter Jacobian row for bin j: d mu / d(A_c, tau_c, ..., bg, shift).
void natural_row(const DecayModel& model, const InstrumentResponse& irf, double t,
                 Eigen::Ref<Eigen::VectorXd> row) {
  const double sigma = irf.sigma();
  const int k = static_cast<int>(model.components.size());
  row.setZero();
  for (int c = 0; c < k; ++c) {
    const auto& comp = model.components[c];
    const auto d = convolved_exponential_gradient(t, comp.amplitude, comp.lifetime, irf.t0, sigma);
    row(2 * c) = d.d_amplitude;
    row(2 * c + 1) = d.d_lifetime;
    row(2 * k + 1) += d.d_t0;
  }
  row(2 * k) = 1.0;
}

class DevianceObjective {
 public:
  DevianceObjective(const DecayData& data, Layout layout) : data_(data), layout_(layout) {}

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* curv) const {
    const DecayModel model = model_from(x, layout_);
    const InstrumentResponse irf = shifted(data_.irf, x(layout_.shift()));
    const ExpectedCurve mu = expected_curve_unchecked(model, irf, data_.grid);
    const auto& y = data_.counts;
    const double dev = poisson_deviance(y, mu.values);
    if (!grad) return dev;

    const int n = layout_.size();
    grad->setZero(n);
    curv->setZero(n, n);
    Eigen::VectorXd row(n);
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double m = std::max(mu.values[j], kMuFloor);
      natural_row(model, irf, data_.grid.center(j), row);
      // Chain rule to log lifetime.
      for (int c = 0; c < layout_.components; ++c) row(2 * c + 1) *= model.components[c].lifetime;
      *grad += 2.0 * (1.0 - y[j] / m) * row;
      curv->selfadjointView<Eigen::Lower>().rankUpdate(row, 2.0 / std::max(m, kCurvatureFloor));
    }
    *curv = curv->selfadjointView<Eigen::Lower>();
    return dev;
  }

 private:
  const DecayData& data_;
  Layout layout_;
};

// Weighted log-linear regression of (y - bg) over bins [from, to); returns the
// decay constant or nullopt when the segment is too short or not decaying.
std::optional<double> log_linear_lifetime(const DecayData& d, double bg, std::size_t from,
                                          std::size_t to) {
  double sw = 0, st = 0, sl = 0, stt = 0, stl = 0;
  int used = 0;
  const double floor = 3.0 * std::sqrt(std::max(bg, 1.0));
  for (std::size_t j = from; j < std::min(to, d.counts.size()); ++j) {
    const double s = d.counts[j] - bg;
    if (s <= floor) continue;
    const double t = d.grid.center(j), l = std::log(s), w = s;
    sw += w, st += w * t, sl += w * l, stt += w * t * t, stl += w * t * l;
    ++used;
  }
  if (used < 3) return std::nullopt;
  const double slope = (sw * stl - st * sl) / (sw * stt - st * st);
  if (!(slope < 0.0)) return std::nullopt;
  return -1.0 / slope;
}

double estimate_background(const DecayData& d) {
  const double cut = d.irf.t0 - 3.0 * d.irf.fwhm;
  double sum = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < d.counts.size() && d.grid.center(j) < cut; ++j) sum += d.counts[j], ++n;
  if (n >= 10) return sum / n;
  const std::size_t tail = std::max<std::size_t>(d.counts.size() / 20, 1);
  sum = 0.0;
  for (std::size_t j = d.counts.size() - tail; j < d.counts.size(); ++j) sum += d.counts[j];
  return sum / static_cast<double>(tail);
}

// Non-negative amplitudes for fixed lifetimes by weighted linear least squares.
std::vector<Component> fill_amplitudes(const DecayData& d, std::vector<double> lifetimes, double bg) {
  const int k = static_cast<int>(lifetimes.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd s(k);
  for (std::size_t j = 0; j < d.counts.size(); ++j) {
    for (int c = 0; c < k; ++c)
      s(c) = convolved_exponential(d.grid.center(j), 1.0, lifetimes[c], d.irf.t0, d.irf.sigma());
    const double w = 1.0 / std::max(d.counts[j], 1.0);
    a += w * s * s.transpose();
    b += w * (d.counts[j] - bg) * s;
  }
  Eigen::VectorXd amp = a.ldlt().solve(b);
  const double peak = *std::max_element(d.counts.begin(), d.counts.end());
  std::vector<Component> out;
  for (int c = 0; c < k; ++c)
    out.push_back({std::isfinite(amp(c)) ? std::max(amp(c), 1e-3 * std::max(peak, 1.0)) : peak,
                   lifetimes[c]});
  return out;
}

struct Bounds {
  Eigen::VectorXd lower, upper;
};

Bounds make_bounds(const DecayData& d, const Layout& layout) {
  const double peak = std::max(*std::max_element(d.counts.begin(), d.counts.end()), 1.0);
  const double span = d.grid.t_end() - d.grid.t_start;
  Bounds b{Eigen::VectorXd(layout.size()), Eigen::VectorXd(layout.size())};
  for (int c = 0; c < layout.components; ++c) {
    b.lower(2 * c) = 0.0;
    b.upper(2 * c) = 1e4 * peak;
    // Far below the IRF width a component is only a scaled IRF; pin it there.
    b.lower(2 * c + 1) = std::log(std::max(0.05 * d.grid.bin_width, 0.1 * d.irf.sigma()));
    b.upper(2 * c + 1) = std::log(20.0 * span);
  }
  b.lower(layout.background()) = 0.0;
  b.upper(layout.background()) = peak + 10.0;
  b.lower(layout.shift()) = -2.0 * d.irf.fwhm;
  b.upper(layout.shift()) = 2.0 * d.irf.fwhm;
  return b;
}

Eigen::VectorXd pack(const Start& s, const Layout& layout, const Bounds& bounds) {
  Eigen::VectorXd x(layout.size());
  for (int c = 0; c < layout.components; ++c) {
    x(2 * c) = s.components[c].amplitude;
    x(2 * c + 1) = std::log(s.components[c].lifetime);
  }
  x(layout.background()) = s.background;
  x(layout.shift()) = 0.0;
  return x.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
}

std::string describe(const Eigen::VectorXd& x, const Layout& layout) {
  std::ostringstream os;
  for (int c = 0; c < layout.components; ++c)
    os << "amplitude_" << c + 1 << '=' << x(2 * c) << ", lifetime_" << c + 1 << '='
       << std::exp(x(2 * c + 1)) << " ps, ";
  os << "background=" << x(layout.background()) << ", t0_shift=" << x(layout.shift()) << " ps";
  return os.str();
}

FitResult finish(const DecayData& d, const Layout& layout, const detail::LmOutcome& run,
                 const DecayFitOptions& options) {
  // Order components fastest first.
  std::vector<int> order(layout.components);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return run.x(2 * a + 1) < run.x(2 * b + 1); });
  Eigen::VectorXd x = run.x;
  for (int c = 0; c < layout.components; ++c) {
    x(2 * c) = run.x(2 * order[c]);
    x(2 * c + 1) = run.x(2 * order[c] + 1);
  }

  const DecayModel model = model_from(x, layout);
  const InstrumentResponse irf = shifted(d.irf, x(layout.shift()));
  const ExpectedCurve mu = expected_curve_unchecked(model, irf, d.grid);

  const int n = layout.size();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd row(n);
  for (std::size_t j = 0; j < d.counts.size(); ++j) {
    natural_row(model, irf, d.grid.center(j), row);
    info.selfadjointView<Eigen::Lower>().rankUpdate(row, 1.0 / std::max(mu.values[j], kCurvatureFloor));
  }
  info = info.selfadjointView<Eigen::Lower>();

  FitResult r;
  r.values.resize(n);
  for (int c = 0; c < layout.components; ++c) {
    r.names.push_back("amplitude_" + std::to_string(c + 1));
    r.names.push_back("lifetime_" + std::to_string(c + 1));
    r.values(2 * c) = model.components[c].amplitude;
    r.values(2 * c + 1) = model.components[c].lifetime;
  }
  r.names.push_back("background");
  r.names.push_back("t0_shift");
  r.values(layout.background()) = x(layout.background());
  r.values(layout.shift()) = x(layout.shift());
  r.covariance = detail::covariance_from_information(info);
  r.std_errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();

  r.statistic = "poisson_deviance";
  r.statistic_value = run.objective;
  r.degrees_of_freedom = static_cast<int>(d.counts.size()) - n;
  r.reduced_statistic = r.degrees_of_freedom > 0 ? run.objective / r.degrees_of_freedom : 0.0;
  r.iterations = run.iterations;
  r.converged = run.converged;
  r.gradient_norm = run.gradient_norm;
  if (layout.components == 2 &&
      model.components[1].lifetime < options.min_lifetime_ratio * model.components[0].lifetime)
    r.identifiable = false;
  if (d.total() < 1000.0) r.warnings.push_back("low statistics: fewer than 1000 counts");
  return r;
}

detail::LmOutcome run_fit(const DecayData& d, const Layout& layout, const Start& start,
                          const DecayFitOptions& options) {
  const Bounds bounds = make_bounds(d, layout);
  const DevianceObjective objective(d, layout);
  return detail::minimize(
      [&](const Eigen::VectorXd& x, Eigen::VectorXd* g, Eigen::MatrixXd* h) { return objective(x, g, h); },
      pack(start, layout, bounds), bounds.lower, bounds.upper,
      {options.max_iterations, options.relative_step_tolerance, options.gradient_tolerance});
}

void check_data(const DecayData& d) {
  d.grid.validate();
  d.irf.validate();
  if (d.counts.size() != d.grid.bins) throw std::invalid_argument("counts do not match the grid");
  if (!(d.total() > 0.0)) throw std::invalid_argument("histogram is empty");
}

std::size_t peak_bin(const DecayData& d) {
  return static_cast<std::size_t>(std::max_element(d.counts.begin(), d.counts.end()) - d.counts.begin());
}

}  // namespace

double FitResult::value(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values(static_cast<Eigen::Index>(i));
  throw std::out_of_range("no fit parameter named " + std::string(name));
}

double FitResult::error(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return std_errors(static_cast<Eigen::Index>(i));
  throw std::out_of_range("no fit parameter named " + std::string(name));
}

bool FitResult::has(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

DecayData DecayData::from(const TransientHistogram& hist) {
  return {hist.grid, hist.irf, std::vector<double>(hist.counts.begin(), hist.counts.end())};
}

DecayData DecayData::from(const ExpectedCurve& curve) {
  return {curve.grid, curve.irf, curve.values};
}

double DecayData::total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

double poisson_deviance(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size()) throw std::invalid_argument("size mismatch");
  double dev = 0.0;
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const double y = observed[j];
    const double m = std::max(expected[j], kMuFloor);
    dev += y > 0.0 ? y * std::log(y / m) - (y - m) : m;
  }
  return 2.0 * dev;
}

FitResult fit_monoexponential(const DecayData& data, const DecayFitOptions& options) {
  check_data(data);
  const Layout layout{1};
  const double bg = estimate_background(data);
  const std::size_t from = peak_bin(data) + static_cast<std::size_t>(
                                                std::ceil(2.0 * data.irf.sigma() / data.grid.bin_width));
  const double tau = log_linear_lifetime(data, bg, from, data.counts.size())
                         .value_or(std::max(5.0 * data.irf.sigma(), 2.0 * data.grid.bin_width));
  const Start start{fill_amplitudes(data, {tau}, bg), bg};
  const auto run = run_fit(data, layout, start, options);
  if (!run.converged)
    throw FitError("monoexponential fit did not converge after " + std::to_string(run.iterations) +
                       " iterations; last iterate: " + describe(run.x, layout),
                   run.iterations);
  return finish(data, layout, run, options);
}

FitResult fit_monoexponential(const TransientHistogram& hist, const DecayFitOptions& options) {
  return fit_monoexponential(DecayData::from(hist), options);
}

FitResult fit_biexponential(const DecayData& data, const DecayFitOptions& options) {
  check_data(data);
  const Layout layout{2};
  const double bg = estimate_background(data);
  const std::size_t peak = peak_bin(data);
  const double fallback = std::max(5.0 * data.irf.sigma(), 2.0 * data.grid.bin_width);

  // Cumulative background-subtracted counts locate the 30% split.
  std::vector<double> cumulative(data.counts.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < data.counts.size(); ++j)
    cumulative[j] = acc += std::max(data.counts[j] - bg, 0.0);
  auto crossing = [&](double fraction) {
    return static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), fraction * acc) - cumulative.begin());
  };
  const std::size_t split = std::max(crossing(0.3), peak + 3);

  std::vector<Start> starts;
  auto add = [&](double fast, double slow) {
    if (!(slow > fast)) std::swap(fast, slow);
    if (slow < 2.0 * fast) fast = slow / 4.0;
    starts.push_back({fill_amplitudes(data, {fast, slow}, bg), bg});
  };

  const double early = log_linear_lifetime(data, bg, peak, split).value_or(fallback);
  const double late = log_linear_lifetime(data, bg, split, data.counts.size()).value_or(4.0 * early);
  add(early, late);
  const double far = log_linear_lifetime(data, bg, crossing(0.8), data.counts.size()).value_or(late);
  add(far / 10.0, far);

  // Nested start: the monoexponential optimum with an empty fast component.
  std::optional<FitResult> mono;
  try {
    mono = fit_monoexponential(data, options);
  } catch (const FitError&) {
  }
  if (mono) {
    const double tau = mono->value("lifetime_1");
    add(tau / 4.0, 1.5 * tau);
    Start nested{{{0.0, tau / 5.0},
                  {mono->value("amplitude_1"), tau}},
                 mono->value("background")};
    starts.push_back(nested);
  }

  std::optional<detail::LmOutcome> best;
  int last_iterations = 0;
  Eigen::VectorXd last_x;
  for (const auto& s : starts) {
    const auto run = run_fit(data, layout, s, options);
    last_iterations = run.iterations;
    last_x = run.x;
    if (run.converged && (!best || run.objective < best->objective)) best = run;
  }
  if (!best)
    throw FitError("biexponential fit did not converge after " + std::to_string(last_iterations) +
                       " iterations; last iterate: " + describe(last_x, layout),
                   last_iterations);
  return finish(data, layout, *best, options);
}

FitResult fit_biexponential(const TransientHistogram& hist, const DecayFitOptions& options) {
  return fit_biexponential(DecayData::from(hist), options);
}

ExpectedCurve fitted_curve(const FitResult& fit, const DecayData& data) {
  DecayModel model;
  for (int c = 1; fit.has("lifetime_" + std::to_string(c)); ++c)
    model.components.push_back(
        {fit.value("amplitude_" + std::to_string(c)), fit.value("lifetime_" + std::to_string(c))});
  model.background = fit.value("background");
  return expected_curve_unchecked(model, shifted(data.irf, fit.value("t0_shift")), data.grid);
}

ModelSelection select_model(const DecayData& data, double threshold,
                            const DecayFitOptions& options) {
  FitResult mono = fit_monoexponential(data, options);
  FitResult bi = fit_biexponential(data, options);
  const double delta = mono.statistic_value - bi.statistic_value;
  const DecayModelKind chosen = delta > threshold ? DecayModelKind::Bi : DecayModelKind::Mono;
  return {chosen, delta, threshold, std::move(mono), std::move(bi)};
}

ModelSelection select_model(const TransientHistogram& hist, double threshold,
                            const DecayFitOptions& options) {
  return select_model(DecayData::from(hist), threshold, options);
}

std::string to_string(DecayModelKind kind) { return kind == DecayModelKind::Mono ? "mono" : "bi"; }

}  // namespace phc
