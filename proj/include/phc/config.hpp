#pragma once

// Experiment configuration: one JSON document, validated with path-precise
// errors. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phc/cavity_modes.hpp"
#include "phc/decay_fit.hpp"
#include "phc/geometry.hpp"
#include "phc/spectral_fit.hpp"
#include "phc/tcspc.hpp"

namespace phc {

struct CrystalConfig {
  double period_nm = 300.0;
  std::vector<double> hole_ratios{0.37};
  double eps_hole = 1.0;
  /// When absent, n_eff^2 of the slab at reference_wavelength_nm.
  std::optional<double> eps_background;
  SlabWaveguide slab;
  double reference_wavelength_nm = 1050.0;

  double background_permittivity() const;
  TriangularLattice lattice(double hole_ratio) const;
};

struct BandsConfig {
  int cutoff = 7;
  int bands = 8;
  int samples_per_segment = 16;
};

enum class VolumeIndex { Core, Effective };

struct CavityConfig {
  int supercell = 7;
  std::optional<int> cutoff;  // default 3 * supercell
  int points_per_period = 64;
  int reference_samples = 12;
  double mode_height_nm = 400.0;
  VolumeIndex volume_index = VolumeIndex::Core;
  PeakRegion peak_region = PeakRegion::HighIndex;
  bool write_profiles = true;

  int effective_cutoff() const { return cutoff.value_or(3 * supercell); }
};

struct ModeSpec {
  double wavelength_nm;
  double q_factor;
  double v_mode = 1.5;

  CavityMode mode() const { return CavityMode(wavelength_nm, q_factor, v_mode); }
};

struct HistogramSpec {
  std::string name;
  /// Relative amplitudes; the curve is scaled so that `counts` signal photons
  /// are expected.
  std::vector<DecayComponent> components;
  double background = 0.0;  // counts per bin
  std::uint64_t counts = 100000;
};

struct ScanSpec {
  double start_nm = 1026.5;
  double stop_nm = 1036.5;
  int points = 81;
  std::vector<double> fp{56.0};  // one per cavity mode
  double alpha = 0.47;
  double tau0_ps = 840.0;
  double relative_noise = 0.05;
  double resolution_floor_ps = 0.0;
};

struct SimulateConfig {
  InstrumentResponse irf;
  BinGrid grid;
  std::vector<HistogramSpec> histograms;
  std::optional<ScanSpec> scan;
};

enum class FitModel { Auto, Mono, Bi };

struct FitConfig {
  FitModel model = FitModel::Auto;
  double threshold = 9.0;
  DecayFitOptions options;
  LifetimeReduction reduction = LifetimeReduction::FastComponent;
  double tau0_ps = 840.0;
  double coverage_linewidths = 1.5;
};

struct ExperimentConfig {
  std::filesystem::path output_dir = "phc-results";
  unsigned threads = 0;  // 0 = hardware concurrency
  std::optional<std::uint64_t> seed;
  CrystalConfig crystal;
  BandsConfig bands;
  CavityConfig cavity;
  std::vector<ModeSpec> modes;  // cavity modes given directly (e.g. from a PL spectrum)
  SimulateConfig simulate;
  FitConfig fit;
};

/// Parses and validates a JSON document. `origin` prefixes parse errors.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of everything that determines numeric output (output_dir
/// and threads excluded).
std::string canonical_json(const ExperimentConfig& config);

/// FNV-1a 64-bit hash of canonical_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Built-in scenario with the paper's parameters.
ExperimentConfig paper_config();

struct ConfigOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

/// Flags beat the environment, which beats the file. Only the output
/// directory may come from the environment (PHC_OUTPUT_DIR).
void apply_overrides(ExperimentConfig& config, const ConfigOverrides& flags,
                     const char* env_output_dir);

inline constexpr const char* kOutputDirEnv = "PHC_OUTPUT_DIR";

}  // namespace phc
