#include <doctest.h>

#include "phc/config.hpp"
#include "phc/errors.hpp"

using namespace phc;

namespace {

std::string error_path(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("empty document gives defaults") {
  const auto c = parse_config("{}");
  CHECK(c.crystal.period_nm == 300.0);
  CHECK(c.crystal.hole_ratios == std::vector<double>{0.37});
  CHECK(c.cavity.effective_cutoff() == 21);
  CHECK_FALSE(c.seed);
  CHECK(c.crystal.background_permittivity() == doctest::Approx(std::pow(effective_index(c.crystal.slab, 1050.0), 2)));
}

TEST_CASE("full document") {
  const auto c = parse_config(R"({
    "output_dir": "runs/a", "threads": 2, "seed": 99,
    "crystal": {"period_nm": 310, "hole_ratios": [0.33, 0.42], "eps_background": 11.0,
                "slab": {"thickness_nm": 380, "n_core": 3.5, "n_clad": 1.0}},
    "bands": {"cutoff": 5, "bands": 6, "samples_per_segment": 8},
    "cavity": {"supercell": 5, "cutoff": 12, "volume_index": "effective", "peak_region": "anywhere", "write_profiles": false},
    "modes": [{"wavelength_nm": 1031.5, "q_factor": 1950}],
    "simulate": {"irf": {"fwhm_ps": 120, "t0_ps": 900},
                 "grid": {"t_start_ps": 0, "bin_width_ps": 8, "bins": 2048},
                 "histograms": [{"name": "a", "components": [{"amplitude": 2, "lifetime_ps": 150}, {"lifetime_ps": 1800}],
                                 "background": 1.5, "counts": 50000}],
                 "spectral_scan": {"start_nm": 1027, "stop_nm": 1036, "points": 31, "fp": [40]}},
    "fit": {"model": "bi", "threshold": 12, "reduction": "selected", "tau0_ps": 800}
  })");
  CHECK(c.output_dir == "runs/a");
  CHECK(c.threads == 2);
  CHECK(c.seed == 99u);
  CHECK(c.crystal.background_permittivity() == 11.0);
  CHECK(c.cavity.volume_index == VolumeIndex::Effective);
  CHECK(c.cavity.peak_region == PeakRegion::Anywhere);
  CHECK(c.cavity.effective_cutoff() == 12);
  CHECK(c.modes.at(0).v_mode == 1.5);
  CHECK(c.simulate.histograms.at(0).components.at(1).amplitude == 1.0);
  CHECK(c.simulate.grid.bins == 2048);
  CHECK(c.simulate.scan->fp == std::vector<double>{40.0});
  CHECK(c.fit.model == FitModel::Bi);
  CHECK(c.fit.reduction == LifetimeReduction::Selected);
}

TEST_CASE("errors name the offending field") {
  CHECK(error_path(R"({"crystal": {"hole_ratios": [0.3, 0.6]}})") == "crystal.hole_ratios[1]");
  CHECK(error_path(R"({"crystal": {"hole_ratios": []}})") == "crystal.hole_ratios");
  CHECK(error_path(R"({"crystal": {"colour": 1}})") == "crystal.colour");
  CHECK(error_path(R"({"bogus": 1})") == "bogus");
  CHECK(error_path(R"({"crystal": {"period_nm": "300"}})") == "crystal.period_nm");
  CHECK(error_path(R"({"crystal": {"slab": {"n_core": 0.9}}})") == "crystal.slab.n_core");
  CHECK(error_path(R"({"cavity": {"supercell": 6}})") == "cavity.supercell");
  CHECK(error_path(R"({"cavity": {"volume_index": "vacuum"}})") == "cavity.volume_index");
  CHECK(error_path(R"({"bands": {"cutoff": 2.5}})") == "bands.cutoff");
  CHECK(error_path(R"({"modes": [{"wavelength_nm": 1030}]})") == "modes[0].q_factor");
  CHECK(error_path(R"({"simulate": {"histograms": [{"name": "a", "components": [{"lifetime_ps": 100}], "counts": 0}]}})") ==
        "simulate.histograms[0].counts");
  CHECK(error_path(R"({"simulate": {"histograms": [{"name": "a", "components": [{"lifetime_ps": 100}]},
                                                   {"name": "a", "components": [{"lifetime_ps": 200}]}]}})") ==
        "simulate.histograms[1].name");
  CHECK(error_path(R"({"simulate": {"histograms": [{"name": "a", "components": [{"lifetime_ps": -1}]}]}})") ==
        "simulate.histograms[0].components[0].lifetime_ps");
  CHECK(error_path(R"({"simulate": {"spectral_scan": {}}})") == "simulate.spectral_scan.fp");
  CHECK(error_path(R"({"modes": [{"wavelength_nm": 1030, "q_factor": 2000}], "simulate": {"spectral_scan": {"fp": [1, 2]}}})") ==
        "simulate.spectral_scan.fp");
  CHECK(error_path(R"({"fit": {"model": "tri"}})") == "fit.model");
  CHECK(error_path(R"({"seed": -3})") == "seed");
  CHECK(error_path(R"({"schema_version": 7})") == "schema_version");
  CHECK(error_path(R"([1, 2])") == "<root>");
}

TEST_CASE("syntax errors carry the line") {
  try {
    parse_config("{\n  \"seed\": 1,\n  \"crystal\": {\n}}\n,", "cfg.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
    CHECK(std::string(e.what()).rfind("cfg.json:5", 0) == 0);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ParseError);
}

TEST_CASE("hash covers numerics only") {
  const auto base = parse_config(R"({"seed": 1})");
  auto moved = parse_config(R"({"seed": 1, "output_dir": "elsewhere", "threads": 3})");
  CHECK(config_hash(base) == config_hash(moved));
  CHECK(config_hash(base).size() == 16);
  CHECK(config_hash(base) != config_hash(parse_config(R"({"seed": 2})")));
  CHECK(config_hash(base) != config_hash(parse_config(R"({"seed": 1, "crystal": {"period_nm": 301}})")));
}

TEST_CASE("canonical form parses back to the same configuration") {
  for (const auto& c : {parse_config("{}"), paper_config()}) {
    const auto back = parse_config(canonical_json(c));
    CHECK(canonical_json(back) == canonical_json(c));
    CHECK(config_hash(back) == config_hash(c));
  }
}

TEST_CASE("built-in paper configuration") {
  const auto c = paper_config();
  CHECK(c.seed);
  CHECK(c.crystal.period_nm == 300.0);
  CHECK(c.crystal.hole_ratios == std::vector<double>{0.33, 0.36, 0.37, 0.39, 0.42});
  REQUIRE(c.modes.size() == 1);
  CHECK(c.modes[0].wavelength_nm == 1031.5);
  CHECK(c.modes[0].q_factor == 1950.0);
  CHECK(c.simulate.irf.fwhm == 150.0);
  REQUIRE(c.simulate.scan);
  CHECK(c.simulate.scan->fp == std::vector<double>{56.0});
  CHECK(c.simulate.scan->alpha == 0.47);
}

TEST_CASE("override precedence") {
  auto c = parse_config(R"({"output_dir": "from-file", "seed": 5})");
  apply_overrides(c, {}, nullptr);
  CHECK(c.output_dir == "from-file");
  apply_overrides(c, {}, "from-env");
  CHECK(c.output_dir == "from-env");
  apply_overrides(c, {std::filesystem::path("from-flag"), 11, 4}, "from-env");
  CHECK(c.output_dir == "from-flag");
  CHECK(c.seed == 11u);
  CHECK(c.threads == 4u);
  apply_overrides(c, {}, "");
  CHECK(c.output_dir == "from-flag");
}
