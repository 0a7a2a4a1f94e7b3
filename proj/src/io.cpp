#include "phc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "phc/errors.hpp"

namespace phc::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// JSON has no inf/nan; they travel as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double to_double(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw std::invalid_argument("expected a number, got " + j.dump());
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Eigen::VectorXd vector_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = to_double(j.at(i));
  return v;
}

json doubles_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

std::vector<double> doubles_from(const json& j) {
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(to_double(e));
  return v;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json load_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), line_of(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
}

void save_json(const fs::path& path, const json& j, int indent = 2) { write_text(path, j.dump(indent) + "\n"); }

// Runs `body` on a parsed document, turning schema mismatches into ParseError.
template <class F>
auto with_document(const fs::path& path, F&& body) {
  const json j = load_json(path);
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw std::invalid_argument("unsupported schema_version " + j.at("schema_version").dump());
    return body(j);
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

struct CsvRow {
  std::size_t line;
  std::vector<std::string_view> fields;
};

struct CsvTable {
  std::string text;
  std::vector<std::string_view> header;
  std::vector<CsvRow> rows;
};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

CsvTable load_csv(const fs::path& path) {
  CsvTable t;
  t.text = read_text(path);
  std::string_view rest(t.text);
  std::size_t line = 0;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view l = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
    ++line;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (l.empty()) continue;
    if (t.header.empty()) {
      t.header = split(l);
      continue;
    }
    t.rows.push_back({line, split(l)});
  }
  if (t.header.empty()) throw ParseError(path.string(), 1, "missing CSV header");
  return t;
}

void expect_header(const fs::path& path, const CsvTable& t, const std::vector<std::string>& names) {
  bool ok = t.header.size() == names.size();
  for (std::size_t i = 0; ok && i < names.size(); ++i) ok = t.header[i] == names[i];
  if (!ok) {
    std::string want;
    for (const auto& n : names) want += (want.empty() ? "" : ",") + n;
    throw ParseError(path.string(), 1, "expected header \"" + want + "\"");
  }
}

template <class T>
T parse_field(const fs::path& path, const CsvRow& row, std::size_t column) {
  if (column >= row.fields.size())
    throw ParseError(path.string(), row.line, "missing column " + std::to_string(column + 1));
  const std::string_view f = row.fields[column];
  T value{};
  const auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
  if (ec != std::errc() || end != f.data() + f.size())
    throw ParseError(path.string(), row.line,
                     "cannot parse \"" + std::string(f) + "\" in column " + std::to_string(column + 1));
  return value;
}

void expect_columns(const fs::path& path, const CsvRow& row, std::size_t n) {
  if (row.fields.size() != n)
    throw ParseError(path.string(), row.line,
                     "expected " + std::to_string(n) + " columns, found " + std::to_string(row.fields.size()));
}

json fit_json(const FitResult& fit) {
  json params = json::object();
  json names = json::array();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    names.push_back(fit.names[i]);
    params[fit.names[i]] = {{"value", number(fit.values(k))}, {"std_error", number(fit.std_errors(k))}};
  }
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) cov.push_back(vector_json(fit.covariance.row(r).transpose()));
  return {{"parameter_order", names},
          {"parameters", params},
          {"covariance", cov},
          {"goodness",
           {{"statistic", fit.statistic},
            {"value", number(fit.statistic_value)},
            {"degrees_of_freedom", fit.degrees_of_freedom},
            {"reduced", number(fit.reduced_statistic)}}},
          {"iterations", fit.iterations},
          {"converged", fit.converged},
          {"gradient_norm", number(fit.gradient_norm)},
          {"identifiable", fit.identifiable},
          {"warnings", fit.warnings}};
}

FitResult fit_from(const json& j) {
  FitResult fit;
  fit.names = j.at("parameter_order").get<std::vector<std::string>>();
  const auto n = static_cast<Eigen::Index>(fit.names.size());
  fit.values.resize(n);
  fit.std_errors.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = j.at("parameters").at(fit.names[static_cast<std::size_t>(i)]);
    fit.values(i) = to_double(p.at("value"));
    fit.std_errors(i) = to_double(p.at("std_error"));
  }
  const auto& cov = j.at("covariance");
  fit.covariance.resize(n, n);
  if (static_cast<Eigen::Index>(cov.size()) != n) throw std::invalid_argument("covariance has wrong shape");
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = vector_from(cov.at(static_cast<std::size_t>(r)));
    if (row.size() != n) throw std::invalid_argument("covariance has wrong shape");
    fit.covariance.row(r) = row.transpose();
  }
  const auto& g = j.at("goodness");
  fit.statistic = g.at("statistic").get<std::string>();
  fit.statistic_value = to_double(g.at("value"));
  fit.degrees_of_freedom = g.at("degrees_of_freedom").get<int>();
  fit.reduced_statistic = to_double(g.at("reduced"));
  fit.iterations = j.at("iterations").get<int>();
  fit.converged = j.at("converged").get<bool>();
  fit.gradient_norm = to_double(j.at("gradient_norm"));
  fit.identifiable = j.at("identifiable").get<bool>();
  fit.warnings = j.at("warnings").get<std::vector<std::string>>();
  return fit;
}

ModeSymmetry symmetry_from(const std::string& s) {
  for (auto m : {ModeSymmetry::Dipole, ModeSymmetry::Quadrupole, ModeSymmetry::Monopole, ModeSymmetry::Hexapole})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown mode symmetry \"" + s + "\"");
}

}  // namespace

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  return p.replace_extension(".json");
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

void write_bands(const fs::path& csv, const BandStructure& bands) {
  const auto& pts = bands.path.points();
  if (static_cast<Eigen::Index>(pts.size()) != bands.frequencies.rows())
    throw std::invalid_argument("band rows do not match the k-path");
  std::string out = "k_index,k_frac_x,k_frac_y,arc_length";
  for (Eigen::Index b = 0; b < bands.frequencies.cols(); ++b) out += ",band_" + std::to_string(b + 1);
  out += '\n';
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out += std::to_string(i) + ',' + format_double(pts[i].frac.x()) + ',' + format_double(pts[i].frac.y()) +
           ',' + format_double(pts[i].arc_length);
    for (Eigen::Index b = 0; b < bands.frequencies.cols(); ++b)
      out += ',' + format_double(bands.frequencies(static_cast<Eigen::Index>(i), b));
    out += '\n';
  }
  write_text(csv, out);

  json vertices = json::array();
  for (const auto& v : bands.path.vertices())
    vertices.push_back({{"label", v.label}, {"frac", {v.frac.x(), v.frac.y()}}});
  save_json(sidecar_path(csv),
            {{"schema_version", kSchemaVersion},
             {"units", {{"k_frac", "reciprocal basis fractions"}, {"arc_length", "2pi/a"}, {"band", "a/lambda"}}},
             {"bands", bands.frequencies.cols()},
             {"path", {{"samples_per_segment", bands.path.samples_per_segment()}, {"vertices", vertices}}}});
}

BandStructure read_bands(const fs::path& csv) {
  const KPath path = with_document(sidecar_path(csv), [](const json& j) {
    std::vector<KPath::Vertex> v;
    for (const auto& e : j.at("path").at("vertices"))
      v.push_back({e.at("label").get<std::string>(), Vec2(e.at("frac").at(0).get<double>(), e.at("frac").at(1).get<double>())});
    return KPath(std::move(v), j.at("path").at("samples_per_segment").get<int>());
  });
  const CsvTable t = load_csv(csv);
  if (t.header.size() < 5) throw ParseError(csv.string(), 1, "band table needs at least one band column");
  std::vector<std::string> names{"k_index", "k_frac_x", "k_frac_y", "arc_length"};
  for (std::size_t b = 0; b + 4 < t.header.size(); ++b) names.push_back("band_" + std::to_string(b + 1));
  expect_header(csv, t, names);
  if (t.rows.size() != path.points().size())
    throw ParseError(csv.string(), 0, "row count does not match the k-path in the sidecar");

  BandStructure bands{path, Eigen::MatrixXd(static_cast<Eigen::Index>(t.rows.size()),
                                            static_cast<Eigen::Index>(names.size() - 4))};
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    expect_columns(csv, row, names.size());
    if (parse_field<std::size_t>(csv, row, 0) != i) throw ParseError(csv.string(), row.line, "k_index out of order");
    for (std::size_t b = 4; b < names.size(); ++b)
      bands.frequencies(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b - 4)) = parse_field<double>(csv, row, b);
  }
  return bands;
}

void write_gap(const fs::path& path, const GapRecord& r) {
  json j{{"schema_version", kSchemaVersion},
         {"units", {{"frequency", "a/lambda"}, {"wavelength", "nm"}}},
         {"period_nm", r.period_nm},
         {"hole_ratio", r.hole_ratio}};
  if (r.gap) {
    j["gap"] = {{"lower_edge", r.gap->lower_edge},
                {"upper_edge", r.gap->upper_edge},
                {"midgap", r.gap->midgap()},
                {"width", r.gap->width()},
                {"gap_to_midgap", r.gap->width() / r.gap->midgap()},
                {"midgap_wavelength_nm", r.gap->midgap_wavelength(r.period_nm)}};
  } else {
    j["gap"] = "no gap";
  }
  save_json(path, j);
}

GapRecord read_gap(const fs::path& path) {
  return with_document(path, [](const json& j) {
    GapRecord r;
    r.period_nm = j.at("period_nm").get<double>();
    r.hole_ratio = j.at("hole_ratio").get<double>();
    const auto& g = j.at("gap");
    if (g.is_object()) r.gap = BandGap{g.at("lower_edge").get<double>(), g.at("upper_edge").get<double>()};
    else if (g != "no gap") throw std::invalid_argument("gap must be an object or \"no gap\"");
    return r;
  });
}

void write_histogram(const fs::path& csv, const HistogramFile& file) {
  const auto& h = file.histogram;
  h.validate();
  std::string out = "time_ps,counts\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out += format_double(h.grid.center(i)) + ',' + std::to_string(h.counts[i]) + '\n';
  write_text(csv, out);

  json model = nullptr;
  if (file.model) {
    json comps = json::array();
    for (const auto& c : file.model->components) comps.push_back({{"amplitude", c.amplitude}, {"lifetime", c.lifetime}});
    model = {{"components", comps}, {"background", file.model->background}};
  }
  save_json(sidecar_path(csv),
            {{"schema_version", kSchemaVersion},
             {"units", {{"time", "ps"}, {"counts", "photons per bin"}, {"amplitude", "counts per bin at t0"}}},
             {"t_start", h.grid.t_start},
             {"bin_width", h.grid.bin_width},
             {"bins", h.grid.bins},
             {"irf_model", "gaussian"},
             {"irf_fwhm", h.irf.fwhm},
             {"irf_t0", h.irf.t0},
             {"total_counts", h.total_counts},
             {"seed", file.seed ? json(*file.seed) : json(nullptr)},
             {"model", model}});
}

HistogramFile read_histogram(const fs::path& csv) {
  HistogramFile file = with_document(sidecar_path(csv), [](const json& j) {
    HistogramFile f;
    auto& h = f.histogram;
    h.grid = {j.at("t_start").get<double>(), j.at("bin_width").get<double>(), j.at("bins").get<std::size_t>()};
    h.irf = {j.at("irf_fwhm").get<double>(), j.at("irf_t0").get<double>()};
    h.total_counts = j.at("total_counts").get<std::uint64_t>();
    if (!j.at("seed").is_null()) f.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("model").is_null()) {
      DecayModel m;
      for (const auto& c : j.at("model").at("components"))
        m.components.push_back({c.at("amplitude").get<double>(), c.at("lifetime").get<double>()});
      m.background = j.at("model").at("background").get<double>();
      f.model = m;
    }
    h.grid.validate();
    h.irf.validate();
    return f;
  });

  const CsvTable t = load_csv(csv);
  expect_header(csv, t, {"time_ps", "counts"});
  auto& h = file.histogram;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    expect_columns(csv, row, 2);
    const double time = parse_field<double>(csv, row, 0);
    h.counts.push_back(parse_field<std::uint64_t>(csv, row, 1));
    if (i < h.grid.bins && std::abs(time - h.grid.center(i)) > 1e-9 * h.grid.bin_width)
      throw ParseError(csv.string(), row.line, "time_ps does not match the bin centre of the declared grid");
  }
  if (t.rows.size() != h.grid.bins)
    throw ParseError(csv.string(), 0,
                     std::to_string(t.rows.size()) + " rows but the sidecar declares " + std::to_string(h.grid.bins) + " bins");
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(csv.string(), 0, e.what());
  }
  return file;
}

void write_scan(const fs::path& csv, const ScanFile& file) {
  const SpectralScan& scan = file.scan;
  scan.validate();
  std::string out = "wavelength_nm,lifetime_ps,lifetime_err_ps\n";
  for (const auto& p : scan.points)
    out += format_double(p.wavelength) + ',' + format_double(p.lifetime) + ',' + format_double(p.lifetime_error) + '\n';
  write_text(csv, out);

  const ScanMetadata& m = file.metadata;
  json modes = json::array();
  for (const auto& c : m.modes)
    modes.push_back({{"wavelength_nm", c.wavelength()}, {"q_factor", c.q_factor()}, {"v_mode", c.mode_volume()}});
  json j{{"schema_version", kSchemaVersion},
         {"units", {{"wavelength", "nm"}, {"lifetime", "ps"}, {"tau0", "ps"}}},
         {"points", scan.points.size()},
         {"modes", modes},
         {"tau0_ps", m.tau0_ps ? number(*m.tau0_ps) : json(nullptr)},
         {"fp", doubles_json(m.fp)},
         {"alpha", m.alpha ? number(*m.alpha) : json(nullptr)},
         {"relative_noise", m.relative_noise ? number(*m.relative_noise) : json(nullptr)},
         {"seed", m.seed ? json(*m.seed) : json(nullptr)}};
  save_json(sidecar_path(csv), j);
}

void write_scan(const fs::path& csv, const SpectralScan& scan) { write_scan(csv, ScanFile{scan, {}}); }

ScanFile read_scan_file(const fs::path& csv) {
  ScanFile file{read_scan(csv), {}};
  const fs::path side = sidecar_path(csv);
  if (!fs::exists(side)) return file;
  file.metadata = with_document(side, [](const json& j) {
    ScanMetadata m;
    for (const auto& c : j.at("modes"))
      m.modes.emplace_back(to_double(c.at("wavelength_nm")), to_double(c.at("q_factor")), to_double(c.at("v_mode")));
    if (!j.at("tau0_ps").is_null()) m.tau0_ps = to_double(j.at("tau0_ps"));
    m.fp = doubles_from(j.at("fp"));
    if (!j.at("alpha").is_null()) m.alpha = to_double(j.at("alpha"));
    if (!j.at("relative_noise").is_null()) m.relative_noise = to_double(j.at("relative_noise"));
    if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  });
  return file;
}

SpectralScan read_scan(const fs::path& csv) {
  const CsvTable t = load_csv(csv);
  expect_header(csv, t, {"wavelength_nm", "lifetime_ps", "lifetime_err_ps"});
  SpectralScan scan;
  for (const auto& row : t.rows) {
    expect_columns(csv, row, 3);
    scan.points.push_back({parse_field<double>(csv, row, 0), parse_field<double>(csv, row, 1),
                           parse_field<double>(csv, row, 2)});
    if (scan.points.size() > 1 && !(scan.points.back().wavelength > scan.points[scan.points.size() - 2].wavelength))
      throw ParseError(csv.string(), row.line, "wavelengths must be strictly increasing");
  }
  try {
    scan.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(csv.string(), 0, e.what());
  }
  return scan;
}

void write_fit(const fs::path& path, const FitResult& fit) {
  json j = fit_json(fit);
  j["schema_version"] = kSchemaVersion;
  j["units"] = {{"lifetime", "ps"}, {"t0_shift", "ps"}, {"amplitude", "counts per bin at t0"}, {"background", "counts per bin"}};
  save_json(path, j);
}

FitResult read_fit(const fs::path& path) {
  return with_document(path, [](const json& j) { return fit_from(j); });
}

void write_spectral_fit(const fs::path& path, const SpectralFitResult& r) {
  json modes = json::array();
  for (const auto& m : r.modes)
    modes.push_back({{"wavelength_nm", m.wavelength()}, {"q_factor", m.q_factor()}, {"v_mode", m.mode_volume()}, {"linewidth_nm", m.linewidth()}});
  save_json(path, {{"schema_version", kSchemaVersion},
                   {"units", {{"wavelength", "nm"}, {"lifetime", "ps"}}},
                   {"fit", fit_json(r.fit)},
                   {"weighted", r.weighted},
                   {"modes", modes},
                   {"on_resonance_lifetime_ps", doubles_json(r.on_resonance_lifetime)},
                   {"on_resonance_error_ps", doubles_json(r.on_resonance_error)},
                   {"max_ratio", number(r.max_ratio)},
                   {"max_ratio_error", number(r.max_ratio_error)},
                   {"max_ratio_mode", r.max_ratio_mode}});
}

SpectralFitResult read_spectral_fit(const fs::path& path) {
  return with_document(path, [](const json& j) {
    SpectralFitResult r;
    r.fit = fit_from(j.at("fit"));
    r.weighted = j.at("weighted").get<bool>();
    for (const auto& m : j.at("modes"))
      r.modes.emplace_back(m.at("wavelength_nm").get<double>(), m.at("q_factor").get<double>(), m.at("v_mode").get<double>());
    r.on_resonance_lifetime = doubles_from(j.at("on_resonance_lifetime_ps"));
    r.on_resonance_error = doubles_from(j.at("on_resonance_error_ps"));
    r.max_ratio = to_double(j.at("max_ratio"));
    r.max_ratio_error = to_double(j.at("max_ratio_error"));
    r.max_ratio_mode = j.at("max_ratio_mode").get<int>();
    return r;
  });
}

void write_mode_profile(const fs::path& path, const CavityModeProfile& p) {
  const auto& c = p.cell_vectors;
  save_json(path, {{"schema_version", kSchemaVersion},
                   {"units", {{"frequency", "a/lambda"}, {"cell_vectors", "nm"}, {"fields", "normalized, max energy density = 1"}}},
                   {"frequency", p.frequency},
                   {"symmetry", to_string(p.symmetry)},
                   {"doublet_partner", p.doublet_partner},
                   {"grid",
                    {{"size", p.grid_size},
                     {"layout", "row-major over fractional (s, t), s slowest; r = s*A1 + t*A2"},
                     {"cell_vectors", {{c[0].x(), c[0].y()}, {c[1].x(), c[1].y()}}}}},
                   {"h_field", doubles_json(p.h_field)},
                   {"energy_density", doubles_json(p.energy_density)},
                   {"permittivity", doubles_json(p.permittivity)}},
            -1);
}

CavityModeProfile read_mode_profile(const fs::path& path) {
  return with_document(path, [](const json& j) {
    CavityModeProfile p;
    p.frequency = j.at("frequency").get<double>();
    p.symmetry = symmetry_from(j.at("symmetry").get<std::string>());
    p.doublet_partner = j.at("doublet_partner").get<int>();
    const auto& g = j.at("grid");
    p.grid_size = g.at("size").get<int>();
    for (int i = 0; i < 2; ++i)
      p.cell_vectors[static_cast<std::size_t>(i)] = Vec2(g.at("cell_vectors").at(i).at(0).get<double>(),
                                                         g.at("cell_vectors").at(i).at(1).get<double>());
    p.h_field = doubles_from(j.at("h_field"));
    p.energy_density = doubles_from(j.at("energy_density"));
    p.permittivity = doubles_from(j.at("permittivity"));
    const auto n = static_cast<std::size_t>(p.grid_size) * static_cast<std::size_t>(p.grid_size);
    if (p.h_field.size() != n || p.energy_density.size() != n || p.permittivity.size() != n)
      throw std::invalid_argument("field arrays do not match grid.size^2");
    return p;
  });
}

}  // namespace phc::io
