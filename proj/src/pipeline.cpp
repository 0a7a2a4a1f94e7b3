#include "phc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>

#include <json.hpp>

#include "parallel.hpp"
#include "phc/bands.hpp"
#include "phc/cavity_modes.hpp"
#include "phc/decay_fit.hpp"
#include "phc/errors.hpp"
#include "phc/io.hpp"
#include "phc/qed.hpp"
#include "phc/spectral_fit.hpp"
#include "phc/tcspc.hpp"

namespace phc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string ratio_label(double r) { return "ra_" + io::format_double(r); }

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent stream `stream`, draw `index`, of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(splitmix(seed ^ splitmix(stream)) + index);
}

std::uint64_t name_stream(const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ull;
  return h;
}

class Run {
 public:
  Run(const ExperimentConfig& config, std::string command) : config_(config) {
    bundle_.command = std::move(command);
    bundle_.config_hash = config_hash(config);
    bundle_.run_id = bundle_.command + "-" + bundle_.config_hash;
    bundle_.directory = config.output_dir;
  }

  const ExperimentConfig& config() const { return config_; }
  ResultBundle& bundle() { return bundle_; }

  fs::path file(const fs::path& relative) {
    bundle_.files.push_back(relative);
    return bundle_.directory / relative;
  }
  // Sidecar written by an io writer next to `relative`.
  void note_sidecar(const fs::path& relative) { bundle_.files.push_back(io::sidecar_path(relative)); }

  void say(std::string line) { bundle_.summary.push_back(std::move(line)); }

  template <class F>
  auto stage(const std::string& name, F&& body) {
    try {
      return body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, std::current_exception(), e.what());
    }
  }

  ResultBundle finish() {
    const fs::path summary = bundle_.command + ".summary.txt";
    const fs::path manifest = bundle_.command + ".bundle.json";
    bundle_.files.push_back(summary);
    bundle_.files.push_back(manifest);

    std::string text = "run " + bundle_.run_id + "\n";
    for (const auto& line : bundle_.summary) text += line + "\n";
    if (!bundle_.criteria.empty()) {
      text += "\nacceptance criteria\n";
      for (const auto& c : bundle_.criteria)
        text += std::string(c.pass ? "PASS" : "FAIL") + "  " + std::to_string(c.id) + ". " + c.name + ": " + c.detail + "\n";
    }
    io::write_text(bundle_.directory / summary, text);

    json files = json::array();
    for (const auto& f : bundle_.files) files.push_back(f.generic_string());
    json criteria = json::array();
    for (const auto& c : bundle_.criteria)
      criteria.push_back({{"id", c.id}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    json j{{"schema_version", io::kSchemaVersion},
           {"command", bundle_.command},
           {"run_id", bundle_.run_id},
           {"config_hash", bundle_.config_hash},
           {"config", json::parse(canonical_json(config_))},
           {"files", files},
           {"summary", bundle_.summary},
           {"criteria", criteria}};
    io::write_text(bundle_.directory / manifest, j.dump(2) + "\n");
    return bundle_;
  }

 private:
  const ExperimentConfig& config_;
  ResultBundle bundle_;
};

// ---------------------------------------------------------------- bands

struct BandsOutcome {
  std::vector<double> ratios;
  std::vector<std::optional<BandGap>> gaps;
};

BandsOutcome run_bands(Run& run) {
  const ExperimentConfig& c = run.config();
  BandsOutcome out{c.crystal.hole_ratios, std::vector<std::optional<BandGap>>(c.crystal.hole_ratios.size())};
  const KPath path = kpath_gamma_m_k(c.bands.samples_per_segment);
  const PlaneWaveBasis basis = PlaneWaveBasis::parallelogram(c.bands.cutoff);

  std::string table = "hole_ratio,lower_edge,upper_edge,midgap,width,gap_to_midgap,midgap_wavelength_nm\n";
  for (std::size_t i = 0; i < out.ratios.size(); ++i) {
    const double r = out.ratios[i];
    const BandStructure bands = compute_bands(c.crystal.lattice(r), path, basis, c.bands.bands, c.threads);
    out.gaps[i] = find_te_gap(bands);

    const fs::path csv = fs::path("bands") / (ratio_label(r) + "_bands.csv");
    io::write_bands(run.file(csv), bands);
    run.note_sidecar(csv);
    io::write_gap(run.file(fs::path("bands") / (ratio_label(r) + "_gap.json")),
                  io::GapRecord{out.gaps[i], c.crystal.period_nm, r});

    table += io::format_double(r);
    if (const auto& g = out.gaps[i]) {
      for (double v : {g->lower_edge, g->upper_edge, g->midgap(), g->width(), g->width() / g->midgap(),
                       g->midgap_wavelength(c.crystal.period_nm)})
        table += "," + io::format_double(v);
      run.say("bands r/a=" + io::format_double(r) + ": TE gap " + fmt("%.5f", g->lower_edge) + "-" +
              fmt("%.5f", g->upper_edge) + " a/lambda, midgap " +
              fmt("%.1f", g->midgap_wavelength(c.crystal.period_nm)) + " nm");
    } else {
      table += ",,,,,,";
      run.say("bands r/a=" + io::format_double(r) + ": no gap");
    }
    table += "\n";
  }
  io::write_text(run.file("bands/gap_table.csv"), table);
  return out;
}

// ---------------------------------------------------------------- modes

struct ModesAtRatio {
  double ratio;
  DefectModeSet set;
  std::vector<double> volumes;
};

struct ModesOutcome {
  std::vector<ModesAtRatio> results;
};

SlabWaveguide volume_slab(const ExperimentConfig& c) {
  SlabWaveguide slab = c.crystal.slab;
  if (c.cavity.volume_index == VolumeIndex::Effective) slab.n_core = std::sqrt(c.crystal.background_permittivity());
  return slab;
}

// Lowest in-gap dipole doublet, as the index of its first member.
std::optional<std::size_t> first_dipole(const DefectModeSet& set) {
  for (std::size_t i = 0; i < set.modes.size(); ++i)
    if (set.modes[i].symmetry == ModeSymmetry::Dipole) return i;
  return std::nullopt;
}

int dipole_doublets(const DefectModeSet& set) {
  int n = 0;
  for (std::size_t i = 0; i < set.modes.size(); ++i) {
    const auto& m = set.modes[i];
    if (m.symmetry == ModeSymmetry::Dipole && m.doublet_partner > static_cast<int>(i)) ++n;
  }
  return n;
}

ModesOutcome run_modes(Run& run) {
  const ExperimentConfig& c = run.config();
  const PlaneWaveBasis basis = PlaneWaveBasis::hexagonal(c.cavity.effective_cutoff());
  DefectModeOptions options;
  options.points_per_period = c.cavity.points_per_period;
  options.reference_samples = c.cavity.reference_samples;
  options.threads = c.threads;
  const SlabWaveguide slab = volume_slab(c);
  const double a = c.crystal.period_nm;

  ModesOutcome out;
  std::string table = "hole_ratio,mode_index,frequency,wavelength_nm,symmetry,doublet_partner,gap_position,v_mode\n";
  for (double r : c.crystal.hole_ratios) {
    ModesAtRatio m{r, solve_h1_modes(c.crystal.lattice(r), c.cavity.supercell, basis, options), {}};
    const fs::path dir = fs::path("modes") / ratio_label(r);

    json modes = json::array();
    for (std::size_t i = 0; i < m.set.modes.size(); ++i) {
      const CavityModeProfile& p = m.set.modes[i];
      const double lambda = p.wavelength_nm(a);
      const double v = mode_volume(p, slab, lambda, c.cavity.mode_height_nm, c.cavity.peak_region);
      m.volumes.push_back(v);
      const BandGap& g = *m.set.bulk_gap;
      const double position = (p.frequency - g.lower_edge) / g.width();
      json entry{{"index", i},
                 {"frequency", p.frequency},
                 {"wavelength_nm", lambda},
                 {"symmetry", to_string(p.symmetry)},
                 {"doublet_partner", p.doublet_partner},
                 {"gap_position", position},
                 {"v_mode", v}};
      if (c.cavity.write_profiles) {
        const fs::path profile = dir / ("mode_" + std::to_string(i) + ".json");
        io::write_mode_profile(run.file(profile), p);
        entry["profile"] = profile.filename().generic_string();
      }
      modes.push_back(entry);
      table += io::format_double(r) + "," + std::to_string(i) + "," + io::format_double(p.frequency) + "," +
               io::format_double(lambda) + "," + to_string(p.symmetry) + "," + std::to_string(p.doublet_partner) +
               "," + io::format_double(position) + "," + io::format_double(v) + "\n";
    }

    json gap = m.set.bulk_gap ? json{{"lower_edge", m.set.bulk_gap->lower_edge}, {"upper_edge", m.set.bulk_gap->upper_edge}}
                              : json("no gap");
    json doc{{"schema_version", io::kSchemaVersion},
             {"units", {{"frequency", "a/lambda"}, {"wavelength", "nm"}, {"v_mode", c.cavity.volume_index == VolumeIndex::Core ? "(lambda/n_core)^3" : "(lambda/n_eff)^3"}}},
             {"hole_ratio", r},
             {"period_nm", a},
             {"supercell", c.cavity.supercell},
             {"cutoff", c.cavity.effective_cutoff()},
             {"reference_gap", gap},
             {"outcome", m.set.empty() ? "no in-gap modes" : "modes found"},
             {"modes", modes}};
    io::write_text(run.file(dir / "modes.json"), doc.dump(2) + "\n");

    std::string line = "modes r/a=" + io::format_double(r) + ": ";
    if (m.set.empty()) {
      line += "no in-gap modes";
    } else {
      line += std::to_string(m.set.modes.size()) + " in-gap, " + std::to_string(dipole_doublets(m.set)) + " dipole doublet(s)";
      if (const auto d = first_dipole(m.set)) {
        const auto& p = m.set.modes[*d];
        line += "; dipole at " + fmt("%.1f", p.wavelength_nm(a)) + " nm, V=" + fmt("%.3f", m.volumes[*d]);
      }
    }
    run.say(line);
    out.results.push_back(std::move(m));
  }
  io::write_text(run.file("modes/mode_table.csv"), table);
  return out;
}

// ------------------------------------------------------------- simulate

struct SimulateOutcome {
  std::vector<std::pair<std::string, fs::path>> histograms;  // name, absolute path
  std::optional<fs::path> scan;
};

std::uint64_t require_seed(const ExperimentConfig& c) {
  if (!c.seed) throw ConfigError("seed", "required for stochastic steps (set it in the config or pass --seed)");
  return *c.seed;
}

// Scales relative component amplitudes so `counts` signal photons are expected.
DecayModel scaled_model(const HistogramSpec& h, const InstrumentResponse& irf, const BinGrid& grid) {
  DecayModel unit{h.components, 0.0};
  const ExpectedCurve curve = expected_curve(unit, irf, grid);
  double mass = 0.0;
  for (double v : curve.values) mass += v;
  if (!(mass > 0.0)) throw std::invalid_argument("histogram '" + h.name + "' carries no signal inside the time window");
  const double scale = static_cast<double>(h.counts) / mass;
  DecayModel model{h.components, h.background};
  for (auto& comp : model.components) comp.amplitude *= scale;
  return model;
}

SimulateOutcome run_simulate(Run& run) {
  const ExperimentConfig& c = run.config();
  const std::uint64_t seed = require_seed(c);
  const SimulateConfig& s = c.simulate;
  s.irf.validate();
  s.grid.validate();
  if (s.histograms.empty() && !s.scan) throw ConfigError("simulate", "nothing to simulate: no histograms and no spectral_scan");

  SimulateOutcome out;
  for (const auto& h : s.histograms) {
    if (h.counts == 0) throw ConfigError("simulate.histograms", "'" + h.name + "' requests zero counts");
    const DecayModel model = scaled_model(h, s.irf, s.grid);
    const std::uint64_t hseed = derive_seed(seed, name_stream(h.name), 0);
    io::HistogramFile file{sample_histogram(expected_curve(model, s.irf, s.grid), h.counts, hseed), hseed, model};
    const fs::path csv = fs::path("simulate") / (h.name + ".csv");
    io::write_histogram(run.file(csv), file);
    run.note_sidecar(csv);
    out.histograms.emplace_back(h.name, run.bundle().directory / csv);

    std::string comps;
    for (const auto& comp : h.components) comps += (comps.empty() ? "" : " + ") + io::format_double(comp.lifetime) + " ps";
    run.say("simulate " + h.name + ": " + comps + ", " + std::to_string(file.histogram.total_counts) + " counts, seed " + std::to_string(hseed));
  }

  if (const auto& spec = s.scan) {
    std::vector<CavityMode> modes;
    for (const auto& m : c.modes) modes.push_back(m.mode());
    const std::uint64_t sseed = derive_seed(seed, name_stream("spectral_scan"), 0);
    const auto grid = wavelength_grid(spec->start_nm, spec->stop_nm, spec->points);
    io::ScanFile file{generate_spectral_scan(grid, modes, spec->fp, spec->alpha, Tau0Reference(spec->tau0_ps),
                                             spec->relative_noise, sseed, spec->resolution_floor_ps),
                      {modes, spec->tau0_ps, spec->fp, spec->alpha, spec->relative_noise, sseed}};
    const fs::path csv = "simulate/spectral_scan.csv";
    io::write_scan(run.file(csv), file);
    run.note_sidecar(csv);
    out.scan = run.bundle().directory / csv;

    // Dip position as a generator self-check.
    const auto& pts = file.scan.points;
    const auto lowest = std::min_element(pts.begin(), pts.end(), [](const auto& x, const auto& y) { return x.lifetime < y.lifetime; });
    run.say("simulate spectral_scan: " + std::to_string(pts.size()) + " points " + fmt("%.2f", spec->start_nm) + "-" +
            fmt("%.2f", spec->stop_nm) + " nm, shortest lifetime " + fmt("%.1f", lowest->lifetime) + " ps at " +
            fmt("%.2f", lowest->wavelength) + " nm");
  }
  return out;
}

// ------------------------------------------------------------------ fit

struct HistogramFitOutcome {
  std::string stem;
  std::optional<FitResult> mono, bi;
  std::optional<DecayModelKind> chosen;
  double delta_deviance = 0.0;
  std::optional<double> beta;
};

struct ScanFitOutcome {
  std::string stem;
  SpectralFitResult result;
  double tau0_ps;
  double beta;
};

struct FitOutcome {
  std::vector<HistogramFitOutcome> histograms;
  std::vector<ScanFitOutcome> scans;
  std::vector<std::string> failures;
};

std::string first_line(const fs::path& path) {
  const std::string text = io::read_text(path);
  std::string line = text.substr(0, text.find('\n'));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

json fit_summary_json(const FitResult& f) {
  json p = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i)
    p[f.names[i]] = {{"value", f.values(static_cast<Eigen::Index>(i))}, {"std_error", f.std_errors(static_cast<Eigen::Index>(i))}};
  return p;
}

HistogramFitOutcome fit_histogram_file(Run& run, const fs::path& input) {
  const ExperimentConfig& c = run.config();
  const io::HistogramFile file = io::read_histogram(input);
  const DecayData data = DecayData::from(file.histogram);
  HistogramFitOutcome out{input.stem().string(), {}, {}, {}, 0.0, {}};
  const fs::path dir = "fit";
  std::vector<std::string> notes;

  std::optional<FitError> failure;
  auto attempt = [&](auto&& fit) -> std::optional<FitResult> {
    try {
      return fit(data, c.fit.options);
    } catch (const FitError& e) {
      notes.push_back(e.what());
      if (!failure) failure = e;
      return std::nullopt;
    }
  };
  if (c.fit.model != FitModel::Bi) out.mono = attempt([](const DecayData& d, const DecayFitOptions& o) { return fit_monoexponential(d, o); });
  if (c.fit.model != FitModel::Mono) out.bi = attempt([](const DecayData& d, const DecayFitOptions& o) { return fit_biexponential(d, o); });

  if (c.fit.model == FitModel::Auto && out.mono && out.bi) {
    out.delta_deviance = out.mono->statistic_value - out.bi->statistic_value;
    out.chosen = out.delta_deviance > c.fit.threshold ? DecayModelKind::Bi : DecayModelKind::Mono;
  } else if (c.fit.model == FitModel::Auto && (out.mono || out.bi)) {
    out.chosen = out.mono ? DecayModelKind::Mono : DecayModelKind::Bi;
    notes.push_back("model chosen without comparison: the other fit did not converge");
  } else if (c.fit.model == FitModel::Mono && out.mono) {
    out.chosen = DecayModelKind::Mono;
  } else if (c.fit.model == FitModel::Bi && out.bi) {
    out.chosen = DecayModelKind::Bi;
  }
  if (!out.chosen) throw *failure;

  if (out.bi && out.bi->identifiable && out.chosen == DecayModelKind::Bi)
    out.beta = coupling_efficiency(out.bi->value("lifetime_1"), out.bi->value("lifetime_2"));

  if (out.mono) io::write_fit(run.file(dir / (out.stem + "_mono.json")), *out.mono);
  if (out.bi) io::write_fit(run.file(dir / (out.stem + "_bi.json")), *out.bi);

  json sel{{"schema_version", io::kSchemaVersion},
           {"input", input.filename().generic_string()},
           {"model_setting", c.fit.model == FitModel::Auto ? "auto" : c.fit.model == FitModel::Mono ? "mono" : "bi"},
           {"chosen", to_string(*out.chosen)},
           {"threshold", c.fit.threshold},
           {"delta_deviance", out.mono && out.bi ? json(out.delta_deviance) : json(nullptr)},
           {"beta", out.beta ? json(*out.beta) : json(nullptr)},
           {"parameters", fit_summary_json(out.chosen == DecayModelKind::Bi ? *out.bi : *out.mono)},
           {"notes", notes},
           {"units", {{"lifetime", "ps"}, {"delta_deviance", "dimensionless"}}}};
  io::write_text(run.file(dir / (out.stem + "_selection.json")), sel.dump(2) + "\n");

  // Plot data: counts with the fitted curves.
  std::vector<double> mono_curve, bi_curve;
  if (out.mono) mono_curve = fitted_curve(*out.mono, data).values;
  if (out.bi) bi_curve = fitted_curve(*out.bi, data).values;
  std::string csv = "time_ps,counts,model_mono,model_bi\n";
  for (std::size_t i = 0; i < data.counts.size(); ++i)
    csv += io::format_double(data.grid.center(i)) + "," + io::format_double(data.counts[i]) + "," +
           (out.mono ? io::format_double(mono_curve[i]) : "") + "," + (out.bi ? io::format_double(bi_curve[i]) : "") + "\n";
  io::write_text(run.file(dir / (out.stem + "_curves.csv")), csv);

  std::string line = "fit " + out.stem + ": " + to_string(*out.chosen);
  if (out.chosen == DecayModelKind::Mono)
    line += ", tau=" + fmt("%.1f", out.mono->value("lifetime_1")) + "+-" + fmt("%.1f", out.mono->error("lifetime_1")) + " ps";
  else
    line += ", tau_fast=" + fmt("%.1f", out.bi->value("lifetime_1")) + "+-" + fmt("%.1f", out.bi->error("lifetime_1")) +
            " ps, tau_slow=" + fmt("%.1f", out.bi->value("lifetime_2")) + "+-" + fmt("%.1f", out.bi->error("lifetime_2")) + " ps";
  if (out.mono && out.bi) line += ", delta deviance " + fmt("%.1f", out.delta_deviance);
  if (out.beta) line += ", beta=" + fmt("%.3f", *out.beta);
  run.say(line);
  return out;
}

ScanFitOutcome fit_scan_file(Run& run, const fs::path& input) {
  const ExperimentConfig& c = run.config();
  const io::ScanFile file = io::read_scan_file(input);
  std::vector<CavityMode> modes = file.metadata.modes;
  if (modes.empty())
    for (const auto& m : c.modes) modes.push_back(m.mode());
  if (modes.empty())
    throw ConfigError("modes", "fitting a spectral scan needs the cavity modes (config modes or the scan sidecar)");
  const double tau0 = file.metadata.tau0_ps.value_or(c.fit.tau0_ps);
  const Tau0Reference reference(tau0);

  SpectralFitOptions options;
  options.coverage_linewidths = c.fit.coverage_linewidths;
  ScanFitOutcome out{input.stem().string(), fit_spectral_model(file.scan, modes, reference, options), tau0, 0.0};
  const SpectralFitResult& r = out.result;
  const double alpha = r.fit.value("alpha");
  const double tau_off = tau0 / alpha;
  const double tau2 = r.on_resonance_lifetime[static_cast<std::size_t>(r.max_ratio_mode)];
  out.beta = coupling_efficiency(std::min(tau2, tau_off), tau_off);

  const fs::path dir = "fit";
  io::write_spectral_fit(run.file(dir / (out.stem + "_spectral.json")), r);
  json derived{{"schema_version", io::kSchemaVersion},
               {"input", input.filename().generic_string()},
               {"tau0_ps", tau0},
               {"off_resonance_lifetime_ps", tau_off},
               {"on_resonance_lifetime_ps", tau2},
               {"max_ratio", r.max_ratio},
               {"max_ratio_error", r.max_ratio_error},
               {"beta", out.beta},
               {"mode_count", modes.size()},
               {"units", {{"lifetime", "ps"}, {"ratio", "tau0/tau2"}}}};
  io::write_text(run.file(dir / (out.stem + "_derived.json")), derived.dump(2) + "\n");

  std::string csv = "wavelength_nm,lifetime_ps,lifetime_err_ps,model_ps\n";
  for (const auto& p : file.scan.points)
    csv += io::format_double(p.wavelength) + "," + io::format_double(p.lifetime) + "," + io::format_double(p.lifetime_error) +
           "," + io::format_double(r.lifetime_at(p.wavelength, reference)) + "\n";
  io::write_text(run.file(dir / (out.stem + "_curve.csv")), csv);

  std::string fps;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const std::string name = "F_" + std::to_string(m + 1);
    fps += name + "=" + fmt("%.1f", r.fit.value(name)) + "+-" + fmt("%.1f", r.fit.error(name)) + ", ";
  }
  run.say("fit " + out.stem + ": " + fps + "alpha=" + fmt("%.3f", alpha) + "+-" + fmt("%.3f", r.fit.error("alpha")) +
          ", tau2=" + fmt("%.1f", tau2) + " ps, tau0/tau2=" + fmt("%.1f", r.max_ratio) + "+-" +
          fmt("%.1f", r.max_ratio_error) + ", beta=" + fmt("%.3f", out.beta));
  return out;
}

FitOutcome run_fit(Run& run, const std::vector<fs::path>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("fit needs at least one histogram or scan file");
  FitOutcome out;
  for (const auto& input : inputs) {
    const std::string header = first_line(input);
    try {
      if (header == "time_ps,counts")
        out.histograms.push_back(fit_histogram_file(run, input));
      else if (header == "wavelength_nm,lifetime_ps,lifetime_err_ps")
        out.scans.push_back(fit_scan_file(run, input));
      else
        throw ParseError(input.string(), 1, "unrecognised CSV header '" + header + "'");
    } catch (const FitError& e) {
      out.failures.push_back(input.filename().string() + ": " + e.what());
      run.say("fit " + input.stem().string() + ": FAILED (" + e.what() + ")");
    }
  }
  return out;
}

// ------------------------------------------------------ paper comparison


CriterionOutcome criterion(int id, std::string name, bool pass, std::string detail) {
  return {id, std::move(name), pass, std::move(detail)};
}

// Analytic empty-lattice bands: a|k+G| / (2 pi n), lowest `count` values.
std::vector<double> free_photon_bands(const TriangularLattice& lattice, const Vec2& k_frac, int count) {
  const auto b = reciprocal_basis(lattice);
  std::vector<double> f;
  for (int m = -6; m <= 6; ++m)
    for (int n = -6; n <= 6; ++n) {
      const Vec2 q = to_cartesian(b, k_frac + Vec2(m, n));
      f.push_back(lattice.period() * q.norm() / (2.0 * std::numbers::pi * std::sqrt(lattice.eps_background())));
    }
  std::sort(f.begin(), f.end());
  f.resize(static_cast<std::size_t>(count));
  return f;
}

// Midpoint-rule convolution of a one-sided exponential with a Gaussian.
double quadrature_convolution(double t, double tau, double t0, double sigma, double step) {
  double sum = 0.0;
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  for (double s = t0 + 0.5 * step; s < t0 + 40.0 * tau; s += step) {
    const double u = (t - s) / sigma;
    if (std::abs(u) > 12.0) continue;
    sum += std::exp(-(s - t0) / tau) * norm * std::exp(-0.5 * u * u) * step;
  }
  return sum;
}

std::optional<std::size_t> index_of(const std::vector<double>& v, double x) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i] - x) < 1e-12) return i;
  return std::nullopt;
}

const HistogramFitOutcome* find_fit(const FitOutcome& f, const std::string& stem) {
  for (const auto& h : f.histograms)
    if (h.stem == stem) return &h;
  return nullptr;
}

const HistogramSpec* find_spec(const ExperimentConfig& c, const std::string& name) {
  for (const auto& h : c.simulate.histograms)
    if (h.name == name) return &h;
  return nullptr;
}

// Fraction of `trials` seeded histograms for which model selection returns
// `truth`. Non-converged fits count as failures.
double selection_rate(const ExperimentConfig& c, const HistogramSpec& spec, DecayModelKind truth, int trials,
                      std::uint64_t stream) {
  const DecayModel model = scaled_model(spec, c.simulate.irf, c.simulate.grid);
  const ExpectedCurve curve = expected_curve(model, c.simulate.irf, c.simulate.grid);
  std::vector<char> hit(static_cast<std::size_t>(trials), 0);
  detail::parallel_for(hit.size(), c.threads, [&](std::size_t i) {
    try {
      const auto hist = sample_histogram(curve, spec.counts, derive_seed(*c.seed, stream, i));
      hit[i] = select_model(hist, c.fit.threshold, c.fit.options).chosen == truth;
    } catch (const FitError&) {
      hit[i] = 0;
    }
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / trials;
}

void compare_with_paper(Run& run, const BandsOutcome& bands, const ModesOutcome& modes, const FitOutcome& fits) {
  const ExperimentConfig& c = run.config();
  auto& out = run.bundle().criteria;

  {
    const double fp = purcell_factor(2000.0, 1.5);
    out.push_back(criterion(1, "Purcell factor", std::abs(fp - 101.32) <= 0.01,
                            "F_p(Q=2000, V=1.5)=" + fmt("%.2f", fp) + " vs paper ~100"));
  }
  {
    const double b1 = coupling_efficiency(150.0, 1800.0), b2 = coupling_efficiency(50.0, 1800.0);
    out.push_back(criterion(2, "coupling efficiency", std::abs(b1 - 0.9167) <= 1e-4 && std::abs(b2 - 0.9722) <= 1e-4,
                            "beta(150 ps, 1.8 ns)=" + fmt("%.4f", b1) + " vs ~92%, beta(50 ps, 1.8 ns)=" + fmt("%.4f", b2) + " vs ~97%"));
  }
  {
    const CavityMode m2(1031.5, 1950.0, 1.5);
    const double ratio = lifetime_ratio(56.0, EmitterCoupling{1.0, 1031.5, 0.47}, m2);
    const double tau2 = enhanced_lifetime(840.0, ratio);
    out.push_back(criterion(3, "lifetime-ratio consistency",
                            std::abs(ratio - 19.1) <= 0.05 && std::abs(ratio - 19.0) <= 4.0 && std::abs(tau2 - 44.0) <= 1.0,
                            "tau0/tau=" + fmt("%.2f", ratio) + " vs 19+-4, tau2=" + fmt("%.1f", tau2) + " ps vs 44+-8 ps"));
  }
  {
    const TriangularLattice empty(c.crystal.period_nm, 0.0, c.crystal.background_permittivity(), c.crystal.eps_hole);
    const KPath path = kpath_gamma_m_k(11);  // 31 k-points
    const BandStructure b = compute_bands(empty, path, PlaneWaveBasis::parallelogram(c.bands.cutoff), 5, c.threads);
    double worst = 0.0;
    for (std::size_t i = 0; i < path.points().size(); ++i) {
      const auto exact = free_photon_bands(empty, path.points()[i].frac, 5);
      for (int n = 0; n < 5; ++n) {
        const double e = exact[static_cast<std::size_t>(n)], f = b.frequencies(static_cast<Eigen::Index>(i), n);
        worst = std::max(worst, e > 0 ? std::abs(f - e) / e : std::abs(f));
      }
    }
    out.push_back(criterion(4, "empty-lattice bands", worst <= 1e-6,
                            "max relative deviation " + fmt("%.1e", worst) + " over " + std::to_string(path.points().size()) + " k-points, 5 bands"));
  }
  {
    const auto i = index_of(bands.ratios, 0.37);
    if (!i || !bands.gaps[*i]) {
      out.push_back(criterion(5, "gap placement", false, "r/a=0.37 not in the sweep or no gap"));
    } else {
      const double lambda = bands.gaps[*i]->midgap_wavelength(c.crystal.period_nm);
      out.push_back(criterion(5, "gap placement", std::abs(lambda - 1100.0) <= 75.0,
                              "midgap " + fmt("%.1f", lambda) + " nm at r/a=0.37 vs paper ~1100+-75 nm"));
    }
  }
  {
    std::string detail;
    bool pass = true;
    const ModesAtRatio* ideal = nullptr;
    for (const auto& m : modes.results)
      if (std::abs(m.ratio - 0.37) < 1e-12) ideal = &m;
    if (!ideal) {
      pass = false;
      detail = "r/a=0.37 not in the sweep";
    } else {
      const int doublets = dipole_doublets(ideal->set);
      const auto d = first_dipole(ideal->set);
      double split = 1.0;
      if (d && ideal->set.modes[*d].doublet_partner >= 0) {
        const double f1 = ideal->set.modes[*d].frequency;
        const double f2 = ideal->set.modes[static_cast<std::size_t>(ideal->set.modes[*d].doublet_partner)].frequency;
        split = std::abs(f1 - f2) / f1;
      }
      pass = doublets == 1 && split < 1e-3;
      detail = std::to_string(doublets) + " dipole doublet(s) at r/a=0.37, splitting " + fmt("%.1e", split);
    }
    std::vector<std::pair<double, double>> series;  // r/a, dipole wavelength
    for (const auto& m : modes.results) {
      if (std::abs(m.ratio - 0.37) < 1e-12) continue;
      if (const auto d = first_dipole(m.set)) series.emplace_back(m.ratio, m.set.modes[*d].wavelength_nm(c.crystal.period_nm));
      else { pass = false; detail += "; no dipole at r/a=" + io::format_double(m.ratio); }
    }
    std::sort(series.begin(), series.end());
    bool monotone = series.size() >= 2;
    for (std::size_t i = 1; i < series.size(); ++i) monotone = monotone && series[i].second < series[i - 1].second;
    pass = pass && monotone;
    detail += "; dipole wavelength vs r/a:";
    for (const auto& [r, l] : series) detail += " " + io::format_double(r) + "->" + fmt("%.1f", l) + " nm";
    detail += monotone ? " (increasing as r/a decreases)" : " (not monotone)";
    out.push_back(criterion(6, "defect-mode structure", pass, detail));
  }
  {
    const InstrumentResponse irf{150.0, 1000.0};
    const BinGrid grid{0.0, 4.0, 2048};
    const ExpectedCurve curve = expected_curve(DecayModel{{{1.0, 800.0}}, 0.0}, irf, grid);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.bins; ++i) {
      const double ref = quadrature_convolution(grid.center(i), 800.0, irf.t0, irf.sigma(), 0.1);
      if (ref > 1e-6) worst = std::max(worst, std::abs(curve.values[i] - ref) / ref);
    }
    out.push_back(criterion(7, "convolution oracle", worst <= 1e-4,
                            "max relative deviation " + fmt("%.1e", worst) + " from 0.1 ps quadrature"));
  }
  {
    std::string detail;
    bool pass = true;
    const auto* mono = find_fit(fits, "bulk_reference");
    const auto* bi = find_fit(fits, "pc_on_resonance");
    const auto* mono_spec = find_spec(c, "bulk_reference");
    const auto* bi_spec = find_spec(c, "pc_on_resonance");
    if (!mono || !bi || !mono_spec || !bi_spec || !mono->mono || !bi->bi) {
      pass = false;
      detail = "scenarios bulk_reference / pc_on_resonance not simulated or not fitted";
    } else {
      const double truth_mono = mono_spec->components.front().lifetime;
      const double tau = mono->mono->value("lifetime_1");
      const bool a = std::abs(tau / truth_mono - 1.0) <= 0.03;
      auto lifetimes = bi_spec->components;
      std::sort(lifetimes.begin(), lifetimes.end(), [](const auto& x, const auto& y) { return x.lifetime < y.lifetime; });
      const double fast = bi->bi->value("lifetime_1"), slow = bi->bi->value("lifetime_2");
      const bool b = std::abs(slow / lifetimes.back().lifetime - 1.0) <= 0.05 &&
                     std::abs(fast / lifetimes.front().lifetime - 1.0) <= 0.20;
      const double rate_mono = selection_rate(c, *mono_spec, DecayModelKind::Mono, 100, name_stream("selection_mono"));
      const double rate_bi = selection_rate(c, *bi_spec, DecayModelKind::Bi, 100, name_stream("selection_bi"));
      const bool sel = rate_mono >= 0.95 && rate_bi >= 0.95;
      pass = a && b && sel;
      detail = "(a) tau=" + fmt("%.1f", tau) + " ps vs " + fmt("%.0f", truth_mono) + (a ? " ok" : " off") +
               "; (b) slow " + fmt("%.0f", slow) + " ps, fast " + fmt("%.1f", fast) + " ps" + (b ? " ok" : " off") +
               "; (c) selection " + fmt("%.0f", 100 * rate_mono) + "% mono, " + fmt("%.0f", 100 * rate_bi) + "% bi over 100 seeds";
      if (bi->beta) run.say("paper comparison: beta from biexponential fit " + fmt("%.3f", *bi->beta) + " vs paper ~0.92");
    }
    out.push_back(criterion(8, "decay-fit round trips", pass, detail));
  }
  {
    std::string detail;
    bool pass = false;
    const auto& scan = c.simulate.scan;
    if (fits.scans.empty() || !scan || c.modes.size() != 1) {
      detail = "single-mode spectral scan not simulated or not fitted";
    } else {
      const auto& r = fits.scans.front().result;
      const double f = r.fit.value("F_1");
      const bool single = std::abs(f - scan->fp[0]) <= 10.0 && std::abs(r.max_ratio - 19.0) <= 4.0;
      const std::vector<CavityMode> modes_list{c.modes[0].mode()};
      const auto grid = wavelength_grid(scan->start_nm, scan->stop_nm, scan->points);
      const Tau0Reference tau0(scan->tau0_ps);
      int good = 0;
      const int trials = 50;
      for (int i = 0; i < trials; ++i) {
        try {
          const auto s = generate_spectral_scan(grid, modes_list, scan->fp, scan->alpha, tau0, scan->relative_noise,
                                                derive_seed(*c.seed, name_stream("spectral_trials"), static_cast<std::uint64_t>(i)),
                                                scan->resolution_floor_ps);
          const auto fit = fit_spectral_model(s, modes_list, tau0);
          good += std::abs(fit.fit.value("F_1") - scan->fp[0]) <= 10.0 && std::abs(fit.max_ratio - 19.0) <= 4.0;
        } catch (const FitError&) {
        }
      }
      pass = single && good >= 45;
      detail = "F=" + fmt("%.1f", f) + " vs " + fmt("%.0f", scan->fp[0]) + ", tau0/tau2=" + fmt("%.1f", r.max_ratio) +
               " vs 19+-4; " + std::to_string(good) + "/" + std::to_string(trials) + " seeds within tolerance";
    }
    out.push_back(criterion(9, "spectral-fit round trip", pass, detail));
  }
  {
    const bool ran = out.size() == 9;
    out.push_back(criterion(10, "raw-data substitution", ran,
                            "experimental transients are unavailable; criteria 6, 8 and 9 stand in for direct data reproduction"));
  }
}

}  // namespace

bool ResultBundle::all_passed() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.pass; });
}

ResultBundle cmd_bands(const ExperimentConfig& config) {
  Run run(config, "bands");
  run.stage("bands", [&] { return run_bands(run); });
  return run.finish();
}

ResultBundle cmd_modes(const ExperimentConfig& config) {
  Run run(config, "modes");
  run.stage("modes", [&] { return run_modes(run); });
  return run.finish();
}

ResultBundle cmd_simulate(const ExperimentConfig& config) {
  Run run(config, "simulate");
  run.stage("simulate", [&] { return run_simulate(run); });
  return run.finish();
}

ResultBundle cmd_fit(const ExperimentConfig& config, const std::vector<fs::path>& inputs) {
  Run run(config, "fit");
  const FitOutcome out = run.stage("fit", [&] { return run_fit(run, inputs); });
  ResultBundle bundle = run.finish();
  if (!out.failures.empty()) {
    std::string what = std::to_string(out.failures.size()) + " of " + std::to_string(inputs.size()) + " fits did not converge";
    for (const auto& f : out.failures) what += "\n  " + f;
    throw FitError(what, 0);
  }
  return bundle;
}

ResultBundle cmd_reproduce_paper(const ExperimentConfig& config) {
  Run run(config, "reproduce-paper");
  const BandsOutcome bands = run.stage("bands", [&] { return run_bands(run); });
  const ModesOutcome modes = run.stage("modes", [&] { return run_modes(run); });
  const SimulateOutcome sim = run.stage("simulate", [&] { return run_simulate(run); });
  const FitOutcome fits = run.stage("fit", [&] {
    std::vector<fs::path> inputs;
    for (const auto& [name, path] : sim.histograms) inputs.push_back(path);
    if (sim.scan) inputs.push_back(*sim.scan);
    FitOutcome f = run_fit(run, inputs);
    if (!f.failures.empty()) throw FitError(f.failures.front(), 0);
    return f;
  });
  run.stage("compare", [&] {
    compare_with_paper(run, bands, modes, fits);
    return 0;
  });
  return run.finish();
}

int exit_code_for(std::exception_ptr error) {
  try {
    std::rethrow_exception(error);
  } catch (const StageError& e) {
    return e.cause() ? exit_code_for(e.cause()) : exit_code::internal;
  } catch (const ConfigError&) {
    return exit_code::usage;
  } catch (const ParseError&) {
    return exit_code::input;
  } catch (const SolverError&) {
    return exit_code::solver;
  } catch (const FitError&) {
    return exit_code::fit;
  } catch (const std::invalid_argument&) {
    return exit_code::usage;
  } catch (const fs::filesystem_error&) {
    return exit_code::input;
  } catch (...) {
    return exit_code::internal;
  }
}

}  // namespace phc
