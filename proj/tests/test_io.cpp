#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "phc/errors.hpp"
#include "phc/io.hpp"

using namespace phc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("phc-io-" + std::to_string(std::random_device{}()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("shortest round-trip doubles") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(io::format_double(x)) == x);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(1050.0) == "1050");
}

TEST_CASE("bands round trip") {
  TempDir dir;
  const TriangularLattice lat(300.0, 0.37, 10.5);
  const auto bands = compute_bands(lat, kpath_gamma_m_k(5), PlaneWaveBasis::parallelogram(3), 4);
  io::write_bands(dir / "b.csv", bands);
  CHECK(fs::exists(dir / "b.json"));
  const auto back = io::read_bands(dir / "b.csv");
  CHECK(back.frequencies == bands.frequencies);
  REQUIRE(back.path.points().size() == bands.path.points().size());
  for (std::size_t i = 0; i < back.path.points().size(); ++i) {
    CHECK(back.path.points()[i].frac == bands.path.points()[i].frac);
    CHECK(back.path.points()[i].arc_length == bands.path.points()[i].arc_length);
  }
  const std::string header = io::read_text(dir / "b.csv").substr(0, 44);
  CHECK(header == "k_index,k_frac_x,k_frac_y,arc_length,band_1,");
}

TEST_CASE("gap round trip") {
  TempDir dir;
  io::write_gap(dir / "g.json", {BandGap{0.24383, 0.36988}, 300.0, 0.37});
  const auto g = io::read_gap(dir / "g.json");
  REQUIRE(g.gap);
  CHECK(g.gap->lower_edge == 0.24383);
  CHECK(g.hole_ratio == 0.37);
  io::write_gap(dir / "n.json", {std::nullopt, 300.0, 0.0});
  CHECK_FALSE(io::read_gap(dir / "n.json").gap);
  CHECK(io::read_text(dir / "n.json").find("\"no gap\"") != std::string::npos);
}

TEST_CASE("histogram round trip") {
  TempDir dir;
  const DecayModel model{{{12.5, 840.0}}, 0.25};
  const auto curve = expected_curve(model, InstrumentResponse{}, BinGrid{});
  io::HistogramFile file{sample_histogram(curve, 5000, 9), 9, model};
  io::write_histogram(dir / "h.csv", file);
  const auto back = io::read_histogram(dir / "h.csv");
  CHECK(back.histogram.counts == file.histogram.counts);
  CHECK(back.histogram.total_counts == file.histogram.total_counts);
  CHECK(back.histogram.grid.bin_width == 12.0);
  CHECK(back.histogram.irf.fwhm == 150.0);
  CHECK(back.seed == 9u);
  REQUIRE(back.model);
  CHECK(back.model->components[0].lifetime == 840.0);
  CHECK(back.model->background == 0.25);
  CHECK(io::read_text(dir / "h.csv").rfind("time_ps,counts\n", 0) == 0);
}

TEST_CASE("scan round trip with metadata") {
  TempDir dir;
  SpectralScan s{{{1030.0, 100.5, 5.0}, {1031.0, 44.25, 2.2}, {1032.0, 120.0, 6.0}}};
  io::ScanFile f{s, {{CavityMode(1031.5, 1950, 1.5)}, 840.0, {56.0}, 0.47, 0.05, 7}};
  io::write_scan(dir / "s.csv", f);
  const auto back = io::read_scan_file(dir / "s.csv");
  REQUIRE(back.scan.points.size() == 3);
  CHECK(back.scan.points[1].lifetime == 44.25);
  CHECK(back.metadata.modes.at(0).q_factor() == 1950.0);
  CHECK(back.metadata.tau0_ps == 840.0);
  CHECK(back.metadata.seed == 7u);
  fs::remove(dir / "s.json");
  CHECK(io::read_scan_file(dir / "s.csv").metadata.modes.empty());
}

TEST_CASE("fit result round trip") {
  TempDir dir;
  FitResult f;
  f.names = {"amplitude_1", "lifetime_1"};
  f.values = Eigen::Vector2d(12.25, 840.0 / 3);
  f.std_errors = Eigen::Vector2d(0.1, std::numeric_limits<double>::infinity());
  f.covariance = Eigen::Matrix2d{{0.01, 0.002}, {0.002, 9.0}};
  f.statistic = "poisson_deviance";
  f.statistic_value = 4101.5;
  f.degrees_of_freedom = 4092;
  f.reduced_statistic = 4101.5 / 4092;
  f.iterations = 12;
  f.converged = true;
  f.identifiable = false;
  f.warnings = {"low statistics"};
  io::write_fit(dir / "f.json", f);
  const auto b = io::read_fit(dir / "f.json");
  CHECK(b.names == f.names);
  CHECK(b.values == f.values);
  CHECK(std::isinf(b.std_errors(1)));
  CHECK(b.covariance == f.covariance);
  CHECK(b.statistic_value == f.statistic_value);
  CHECK(b.reduced_statistic == f.reduced_statistic);
  CHECK(b.iterations == 12);
  CHECK_FALSE(b.identifiable);
  CHECK(b.warnings == f.warnings);
}

TEST_CASE("spectral fit round trip") {
  TempDir dir;
  const std::vector<CavityMode> modes{CavityMode(1031.5, 1950, 1.5)};
  const std::vector<double> fp{56.0};
  const Tau0Reference tau0(840.0);
  const auto scan = generate_spectral_scan(wavelength_grid(1026.5, 1036.5, 41), modes, fp, 0.47, tau0, 0.05, 2);
  const auto r = fit_spectral_model(scan, modes, tau0);
  io::write_spectral_fit(dir / "r.json", r);
  const auto b = io::read_spectral_fit(dir / "r.json");
  CHECK(b.fit.values == r.fit.values);
  CHECK(b.fit.covariance == r.fit.covariance);
  CHECK(b.on_resonance_lifetime == r.on_resonance_lifetime);
  CHECK(b.max_ratio == r.max_ratio);
  CHECK(b.modes.at(0).wavelength() == 1031.5);
  CHECK(b.lifetime_at(1030.0, tau0) == r.lifetime_at(1030.0, tau0));
}

TEST_CASE("mode profile round trip") {
  TempDir dir;
  CavityModeProfile p;
  p.frequency = 0.28139912345;
  p.symmetry = ModeSymmetry::Dipole;
  p.doublet_partner = 3;
  p.grid_size = 3;
  p.cell_vectors = {Vec2(2100.0, 0.0), Vec2(-1050.0, 1818.653)};
  p.h_field = {0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, 1.0 / 3};
  p.energy_density = {0.1, 0.2, 0.3, 0.4, 1.0, 0.6, 0.7, 0.8, 0.9};
  p.permittivity = {1, 10.5, 10.5, 10.5, 10.5, 10.5, 1, 10.5, 10.5};
  io::write_mode_profile(dir / "p.json", p);
  const auto b = io::read_mode_profile(dir / "p.json");
  CHECK(b.frequency == p.frequency);
  CHECK(b.symmetry == ModeSymmetry::Dipole);
  CHECK(b.doublet_partner == 3);
  CHECK(b.h_field == p.h_field);
  CHECK(b.energy_density == p.energy_density);
  CHECK(b.cell_vectors[1] == p.cell_vectors[1]);
}

TEST_CASE("malformed CSV reports the line") {
  TempDir dir;
  const auto curve = expected_curve(DecayModel{{{1.0, 840.0}}, 0.0}, InstrumentResponse{}, BinGrid{0.0, 12.0, 2});
  io::write_histogram(dir / "h.csv", {sample_histogram(curve, 10, 1), 1, std::nullopt});
  write(dir / "h.csv", "time_ps,counts\n6,1\n18,x\n");
  try {
    io::read_histogram(dir / "h.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write(dir / "s.csv", "wavelength_nm,lifetime_ps,lifetime_err_ps\n1030,100,1\n1029,90,1\n");
  try {
    io::read_scan(dir / "s.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write(dir / "w.csv", "wavelength,lifetime\n1,2\n");
  CHECK_THROWS_AS(io::read_scan(dir / "w.csv"), ParseError);
  CHECK_THROWS_AS(io::read_histogram(dir / "missing.csv"), ParseError);
}

TEST_CASE("malformed JSON reports the line") {
  TempDir dir;
  write(dir / "f.json", "{\n  \"schema_version\": 1,\n  \"names\": [\n}\n");
  try {
    io::read_fit(dir / "f.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  write(dir / "v.json", "{\"schema_version\": 2}");
  CHECK_THROWS_WITH_AS(io::read_gap(dir / "v.json"), doctest::Contains("schema_version"), ParseError);
}

TEST_CASE("sidecar path") {
  CHECK(io::sidecar_path("out/simulate/bulk.csv") == fs::path("out/simulate/bulk.json"));
}
