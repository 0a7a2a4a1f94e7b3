#include "phc/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "phc/errors.hpp"
#include "phc/io.hpp"

namespace phc {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string at_index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

// Checked accessors over one JSON object; `path` locates it in the document.
class Section {
 public:
  Section(const json& node, std::string path, std::initializer_list<const char*> allowed)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [k, v] : node_.items())
      if (!keys.count(k)) throw ConfigError(join(path_, k), "unknown key");
  }

  bool has(const char* key) const { return node_.contains(key) && !node_.at(key).is_null(); }
  const json& raw(const char* key) const { return node_.at(key); }
  std::string path(const char* key) const { return join(path_, key); }

  Section child(const char* key, std::initializer_list<const char*> allowed) const {
    return Section(has(key) ? node_.at(key) : empty(), path(key), allowed);
  }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path(key), "must be finite");
    return x;
  }

  std::optional<double> optional_number(const char* key) const {
    if (!has(key)) return std::nullopt;
    return number(key, 0.0);
  }

  std::int64_t integer(const char* key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(path(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_boolean()) throw ConfigError(path(key), "expected true or false");
    return node_.at(key).get<bool>();
  }

  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_string()) throw ConfigError(path(key), "expected a string");
    return node_.at(key).get<std::string>();
  }

  template <class E>
  E choice(const char* key, E fallback, std::initializer_list<std::pair<const char*, E>> options) const {
    if (!has(key)) return fallback;
    const std::string s = string(key, "");
    std::string names;
    for (const auto& [name, value] : options) {
      if (s == name) return value;
      names += (names.empty() ? "" : ", ") + std::string("\"") + name + "\"";
    }
    throw ConfigError(path(key), "must be one of " + names);
  }

  const json& array(const char* key) const {
    if (!node_.at(key).is_array()) throw ConfigError(path(key), "expected an array");
    return node_.at(key);
  }

  std::vector<double> numbers(const char* key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const json& a = array(key);
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number()) throw ConfigError(at_index(path(key), i), "expected a number");
      out.push_back(a[i].get<double>());
    }
    return out;
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }

  const json& node_;
  std::string path_;
};

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

const char* to_name(VolumeIndex v) { return v == VolumeIndex::Core ? "core" : "effective"; }
const char* to_name(PeakRegion p) { return p == PeakRegion::HighIndex ? "high_index" : "anywhere"; }
const char* to_name(FitModel m) {
  return m == FitModel::Auto ? "auto" : m == FitModel::Mono ? "mono" : "bi";
}
const char* to_name(LifetimeReduction r) {
  return r == LifetimeReduction::FastComponent ? "fast" : "selected";
}

void parse_crystal(const Section& root, CrystalConfig& c) {
  const Section s = root.child("crystal", {"period_nm", "hole_ratios", "eps_hole", "eps_background",
                                           "slab", "reference_wavelength_nm"});
  c.period_nm = s.number("period_nm", c.period_nm);
  require(c.period_nm > 0.0, s.path("period_nm"), "must be positive");
  c.hole_ratios = s.numbers("hole_ratios", c.hole_ratios);
  require(!c.hole_ratios.empty(), s.path("hole_ratios"), "sweep list must not be empty");
  for (std::size_t i = 0; i < c.hole_ratios.size(); ++i)
    require(c.hole_ratios[i] >= 0.0 && c.hole_ratios[i] < 0.5, at_index(s.path("hole_ratios"), i),
            "r/a must lie in [0, 0.5)");
  c.eps_hole = s.number("eps_hole", c.eps_hole);
  require(c.eps_hole >= 1.0, s.path("eps_hole"), "must be >= 1");
  c.eps_background = s.optional_number("eps_background");
  if (c.eps_background)
    require(*c.eps_background > c.eps_hole, s.path("eps_background"), "must exceed eps_hole");

  const Section slab = s.child("slab", {"thickness_nm", "n_core", "n_clad"});
  c.slab.thickness_nm = slab.number("thickness_nm", c.slab.thickness_nm);
  c.slab.n_core = slab.number("n_core", c.slab.n_core);
  c.slab.n_clad = slab.number("n_clad", c.slab.n_clad);
  require(c.slab.thickness_nm > 0.0, slab.path("thickness_nm"), "must be positive");
  require(c.slab.n_clad >= 1.0, slab.path("n_clad"), "must be >= 1");
  require(c.slab.n_core > c.slab.n_clad, slab.path("n_core"), "must exceed n_clad");
  c.reference_wavelength_nm = s.number("reference_wavelength_nm", c.reference_wavelength_nm);
  require(c.reference_wavelength_nm > 0.0, s.path("reference_wavelength_nm"), "must be positive");
  if (!c.eps_background)
    require(c.background_permittivity() > c.eps_hole, s.path("eps_hole"),
            "must be below the slab's effective permittivity");
}

void parse_bands(const Section& root, BandsConfig& b) {
  const Section s = root.child("bands", {"cutoff", "bands", "samples_per_segment"});
  b.cutoff = static_cast<int>(s.integer("cutoff", b.cutoff));
  require(b.cutoff >= 1 && b.cutoff <= 30, s.path("cutoff"), "must lie in [1, 30]");
  b.bands = static_cast<int>(s.integer("bands", b.bands));
  require(b.bands >= 2 && b.bands <= (2 * b.cutoff + 1) * (2 * b.cutoff + 1), s.path("bands"),
          "must lie in [2, basis size]");
  b.samples_per_segment = static_cast<int>(s.integer("samples_per_segment", b.samples_per_segment));
  require(b.samples_per_segment >= 2, s.path("samples_per_segment"), "must be >= 2");
}

void parse_cavity(const Section& root, CavityConfig& c) {
  const Section s = root.child("cavity", {"supercell", "cutoff", "points_per_period", "reference_samples",
                                          "mode_height_nm", "volume_index", "peak_region", "write_profiles"});
  c.supercell = static_cast<int>(s.integer("supercell", c.supercell));
  require(c.supercell >= 5 && c.supercell % 2 == 1, s.path("supercell"), "must be odd and >= 5");
  if (s.has("cutoff")) {
    c.cutoff = static_cast<int>(s.integer("cutoff", 0));
    require(*c.cutoff >= 1, s.path("cutoff"), "must be >= 1");
  }
  c.points_per_period = static_cast<int>(s.integer("points_per_period", c.points_per_period));
  require(c.points_per_period >= 4, s.path("points_per_period"), "must be >= 4");
  c.reference_samples = static_cast<int>(s.integer("reference_samples", c.reference_samples));
  require(c.reference_samples >= 2, s.path("reference_samples"), "must be >= 2");
  c.mode_height_nm = s.number("mode_height_nm", c.mode_height_nm);
  require(c.mode_height_nm > 0.0, s.path("mode_height_nm"), "must be positive");
  c.volume_index = s.choice("volume_index", c.volume_index,
                            {{"core", VolumeIndex::Core}, {"effective", VolumeIndex::Effective}});
  c.peak_region = s.choice("peak_region", c.peak_region,
                           {{"high_index", PeakRegion::HighIndex}, {"anywhere", PeakRegion::Anywhere}});
  c.write_profiles = s.boolean("write_profiles", c.write_profiles);
}

void parse_modes(const Section& root, std::vector<ModeSpec>& modes) {
  if (!root.has("modes")) return;
  const json& a = root.array("modes");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Section m(a[i], at_index(root.path("modes"), i), {"wavelength_nm", "q_factor", "v_mode"});
    require(m.has("wavelength_nm"), m.path("wavelength_nm"), "is required");
    require(m.has("q_factor"), m.path("q_factor"), "is required");
    ModeSpec spec{m.number("wavelength_nm", 0.0), m.number("q_factor", 0.0), m.number("v_mode", 1.5)};
    require(spec.wavelength_nm > 0.0, m.path("wavelength_nm"), "must be positive");
    require(spec.q_factor > 1.0, m.path("q_factor"), "must exceed 1");
    require(spec.v_mode > 0.0, m.path("v_mode"), "must be positive");
    modes.push_back(spec);
  }
}

void parse_simulate(const Section& root, SimulateConfig& sim, std::size_t mode_count) {
  const Section s = root.child("simulate", {"irf", "grid", "histograms", "spectral_scan"});
  const Section irf = s.child("irf", {"fwhm_ps", "t0_ps"});
  sim.irf.fwhm = irf.number("fwhm_ps", sim.irf.fwhm);
  sim.irf.t0 = irf.number("t0_ps", sim.irf.t0);
  require(sim.irf.fwhm > 0.0, irf.path("fwhm_ps"), "must be positive");
  const Section grid = s.child("grid", {"t_start_ps", "bin_width_ps", "bins"});
  sim.grid.t_start = grid.number("t_start_ps", sim.grid.t_start);
  sim.grid.bin_width = grid.number("bin_width_ps", sim.grid.bin_width);
  sim.grid.bins = grid.unsigned_integer("bins", sim.grid.bins);
  require(sim.grid.bin_width > 0.0, grid.path("bin_width_ps"), "must be positive");
  require(sim.grid.bins >= 8 && sim.grid.bins <= (1u << 22), grid.path("bins"), "must lie in [8, 4194304]");

  if (s.has("histograms")) {
    sim.histograms.clear();
    const json& a = s.array("histograms");
    std::set<std::string> names;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Section h(a[i], at_index(s.path("histograms"), i), {"name", "components", "background", "counts"});
      HistogramSpec spec;
      spec.name = h.string("name", "");
      require(!spec.name.empty() &&
                  std::all_of(spec.name.begin(), spec.name.end(),
                              [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'; }),
              h.path("name"), "must be a non-empty name of letters, digits, '_' or '-'");
      require(names.insert(spec.name).second, h.path("name"), "duplicate histogram name");
      require(h.has("components"), h.path("components"), "is required");
      const json& comps = h.array("components");
      require(!comps.empty(), h.path("components"), "must not be empty");
      for (std::size_t c = 0; c < comps.size(); ++c) {
        const Section comp(comps[c], at_index(h.path("components"), c), {"amplitude", "lifetime_ps"});
        require(comp.has("lifetime_ps"), comp.path("lifetime_ps"), "is required");
        DecayComponent dc{comp.number("amplitude", 1.0), comp.number("lifetime_ps", 0.0)};
        require(dc.amplitude >= 0.0, comp.path("amplitude"), "must be non-negative");
        require(dc.lifetime > 0.0, comp.path("lifetime_ps"), "must be positive");
        for (const auto& prev : spec.components)
          require(prev.lifetime != dc.lifetime, comp.path("lifetime_ps"), "lifetimes must be distinct");
        spec.components.push_back(dc);
      }
      require(std::any_of(spec.components.begin(), spec.components.end(),
                          [](const auto& c) { return c.amplitude > 0.0; }),
              h.path("components"), "amplitudes must not all be zero");
      spec.background = h.number("background", 0.0);
      require(spec.background >= 0.0, h.path("background"), "must be non-negative");
      spec.counts = h.unsigned_integer("counts", spec.counts);
      require(spec.counts > 0, h.path("counts"), "must be positive");
      sim.histograms.push_back(std::move(spec));
    }
  }

  if (s.has("spectral_scan")) {
    const Section sc = s.child("spectral_scan", {"start_nm", "stop_nm", "points", "fp", "alpha", "tau0_ps",
                                                 "relative_noise", "resolution_floor_ps"});
    ScanSpec spec;
    spec.start_nm = sc.number("start_nm", spec.start_nm);
    spec.stop_nm = sc.number("stop_nm", spec.stop_nm);
    require(spec.start_nm > 0.0, sc.path("start_nm"), "must be positive");
    require(spec.stop_nm > spec.start_nm, sc.path("stop_nm"), "must exceed start_nm");
    spec.points = static_cast<int>(sc.integer("points", spec.points));
    require(spec.points >= 3, sc.path("points"), "must be >= 3");
    spec.fp = sc.numbers("fp", spec.fp);
    for (std::size_t i = 0; i < spec.fp.size(); ++i)
      require(spec.fp[i] >= 0.0, at_index(sc.path("fp"), i), "must be non-negative");
    require(mode_count > 0, sc.path("fp"), "a spectral scan needs the top-level modes list");
    require(spec.fp.size() == mode_count, sc.path("fp"), "needs one Purcell factor per entry of modes");
    spec.alpha = sc.number("alpha", spec.alpha);
    require(spec.alpha > 0.0, sc.path("alpha"), "must be positive");
    spec.tau0_ps = sc.number("tau0_ps", spec.tau0_ps);
    require(spec.tau0_ps > 0.0, sc.path("tau0_ps"), "must be positive");
    spec.relative_noise = sc.number("relative_noise", spec.relative_noise);
    require(spec.relative_noise >= 0.0 && spec.relative_noise < 0.5, sc.path("relative_noise"), "must lie in [0, 0.5)");
    spec.resolution_floor_ps = sc.number("resolution_floor_ps", spec.resolution_floor_ps);
    require(spec.resolution_floor_ps >= 0.0, sc.path("resolution_floor_ps"), "must be non-negative");
    sim.scan = spec;
  }
}

void parse_fit(const Section& root, FitConfig& f) {
  const Section s = root.child("fit", {"model", "threshold", "max_iterations", "min_lifetime_ratio",
                                       "reduction", "tau0_ps", "coverage_linewidths"});
  f.model = s.choice("model", f.model, {{"auto", FitModel::Auto}, {"mono", FitModel::Mono}, {"bi", FitModel::Bi}});
  f.threshold = s.number("threshold", f.threshold);
  require(f.threshold >= 0.0, s.path("threshold"), "must be non-negative");
  f.options.max_iterations = static_cast<int>(s.integer("max_iterations", f.options.max_iterations));
  require(f.options.max_iterations >= 1, s.path("max_iterations"), "must be >= 1");
  f.options.min_lifetime_ratio = s.number("min_lifetime_ratio", f.options.min_lifetime_ratio);
  require(f.options.min_lifetime_ratio > 1.0, s.path("min_lifetime_ratio"), "must exceed 1");
  f.reduction = s.choice("reduction", f.reduction,
                         {{"fast", LifetimeReduction::FastComponent}, {"selected", LifetimeReduction::Selected}});
  f.tau0_ps = s.number("tau0_ps", f.tau0_ps);
  require(f.tau0_ps > 0.0, s.path("tau0_ps"), "must be positive");
  f.coverage_linewidths = s.number("coverage_linewidths", f.coverage_linewidths);
  require(f.coverage_linewidths >= 0.0, s.path("coverage_linewidths"), "must be non-negative");
}

json to_json(const ExperimentConfig& c) {
  json hist = json::array();
  for (const auto& h : c.simulate.histograms) {
    json comps = json::array();
    for (const auto& comp : h.components) comps.push_back({{"amplitude", comp.amplitude}, {"lifetime_ps", comp.lifetime}});
    hist.push_back({{"name", h.name}, {"components", comps}, {"background", h.background}, {"counts", h.counts}});
  }
  json modes = json::array();
  for (const auto& m : c.modes) modes.push_back({{"wavelength_nm", m.wavelength_nm}, {"q_factor", m.q_factor}, {"v_mode", m.v_mode}});
  json sim{{"irf", {{"fwhm_ps", c.simulate.irf.fwhm}, {"t0_ps", c.simulate.irf.t0}}},
           {"grid", {{"t_start_ps", c.simulate.grid.t_start}, {"bin_width_ps", c.simulate.grid.bin_width}, {"bins", c.simulate.grid.bins}}},
           {"histograms", hist}};
  if (const auto& s = c.simulate.scan)
    sim["spectral_scan"] = {{"start_nm", s->start_nm}, {"stop_nm", s->stop_nm}, {"points", s->points},
                            {"fp", s->fp}, {"alpha", s->alpha}, {"tau0_ps", s->tau0_ps},
                            {"relative_noise", s->relative_noise}, {"resolution_floor_ps", s->resolution_floor_ps}};
  const auto& cr = c.crystal;
  return {{"schema_version", io::kSchemaVersion},
          {"seed", c.seed ? json(*c.seed) : json(nullptr)},
          {"crystal",
           {{"period_nm", cr.period_nm},
            {"hole_ratios", cr.hole_ratios},
            {"eps_hole", cr.eps_hole},
            {"eps_background", cr.eps_background ? json(*cr.eps_background) : json(nullptr)},
            {"slab", {{"thickness_nm", cr.slab.thickness_nm}, {"n_core", cr.slab.n_core}, {"n_clad", cr.slab.n_clad}}},
            {"reference_wavelength_nm", cr.reference_wavelength_nm}}},
          {"bands", {{"cutoff", c.bands.cutoff}, {"bands", c.bands.bands}, {"samples_per_segment", c.bands.samples_per_segment}}},
          {"cavity",
           {{"supercell", c.cavity.supercell},
            {"cutoff", c.cavity.effective_cutoff()},
            {"points_per_period", c.cavity.points_per_period},
            {"reference_samples", c.cavity.reference_samples},
            {"mode_height_nm", c.cavity.mode_height_nm},
            {"volume_index", to_name(c.cavity.volume_index)},
            {"peak_region", to_name(c.cavity.peak_region)},
            {"write_profiles", c.cavity.write_profiles}}},
          {"modes", modes},
          {"simulate", sim},
          {"fit",
           {{"model", to_name(c.fit.model)},
            {"threshold", c.fit.threshold},
            {"max_iterations", c.fit.options.max_iterations},
            {"min_lifetime_ratio", c.fit.options.min_lifetime_ratio},
            {"reduction", to_name(c.fit.reduction)},
            {"tau0_ps", c.fit.tau0_ps},
            {"coverage_linewidths", c.fit.coverage_linewidths}}}};
}

}  // namespace

double CrystalConfig::background_permittivity() const {
  if (eps_background) return *eps_background;
  const double n = effective_index(slab, reference_wavelength_nm);
  return n * n;
}

TriangularLattice CrystalConfig::lattice(double hole_ratio) const {
  return TriangularLattice(period_nm, hole_ratio, background_permittivity(), eps_hole);
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
    throw ParseError(origin, line, e.what());
  }

  ExperimentConfig c;
  const Section root(doc, "", {"schema_version", "output_dir", "threads", "seed", "crystal", "bands", "cavity",
                               "modes", "simulate", "fit"});
  if (root.has("schema_version"))
    require(root.integer("schema_version", io::kSchemaVersion) == io::kSchemaVersion, "schema_version",
            "unsupported version (expected " + std::to_string(io::kSchemaVersion) + ")");
  c.output_dir = root.string("output_dir", c.output_dir.string());
  require(!c.output_dir.empty(), "output_dir", "must not be empty");
  c.threads = static_cast<unsigned>(root.unsigned_integer("threads", c.threads));
  if (root.has("seed")) c.seed = root.unsigned_integer("seed", 0);
  parse_crystal(root, c.crystal);
  parse_bands(root, c.bands);
  parse_cavity(root, c.cavity);
  parse_modes(root, c.modes);
  parse_simulate(root, c.simulate, c.modes.size());
  parse_fit(root, c.fit);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_text(path), path.string());
}

std::string canonical_json(const ExperimentConfig& config) { return to_json(config).dump(); }

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char ch : canonical_json(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig paper_config() {
  ExperimentConfig c;
  c.seed = 20050101;
  c.crystal.hole_ratios = {0.33, 0.36, 0.37, 0.39, 0.42};
  c.cavity.points_per_period = 32;
  c.modes = {{1031.5, 1950.0, 1.5}};
  c.simulate.histograms = {
      {"bulk_reference", {{1.0, 840.0}}, 0.0, 100000},
      {"pc_off_resonance", {{1.0, 1800.0}}, 0.0, 100000},
      // Fast component holds 60% of the signal: 18 * 150 : 1 * 1800 = 0.6 : 0.4.
      {"pc_on_resonance", {{18.0, 150.0}, {1.0, 1800.0}}, 0.0, 100000},
  };
  c.simulate.scan = ScanSpec{};
  return c;
}

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& flags, const char* env_output_dir) {
  if (flags.output_dir) config.output_dir = *flags.output_dir;
  else if (env_output_dir && *env_output_dir) config.output_dir = env_output_dir;
  if (flags.seed) config.seed = *flags.seed;
  if (flags.threads) config.threads = *flags.threads;
}

}  // namespace phc
