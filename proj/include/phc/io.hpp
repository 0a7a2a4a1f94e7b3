#pragma once

// File formats. CSV tables carry a same-stem .json sidecar with units and
// metadata; every JSON document has a schema_version. Doubles are written in
// shortest round-trip form, so reading a file back gives identical values.
// Readers throw ParseError with the offending line.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phc/bands.hpp"
#include "phc/cavity_modes.hpp"
#include "phc/decay_fit.hpp"
#include "phc/spectral_fit.hpp"
#include "phc/tcspc.hpp"

namespace phc::io {

inline constexpr int kSchemaVersion = 1;

/// Sidecar path: same directory and stem, extension .json.
std::filesystem::path sidecar_path(const std::filesystem::path& csv);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

// Bands: k_index,k_frac_x,k_frac_y,arc_length,band_1..band_N. The sidecar
// stores the path vertices so the KPath is rebuilt on reading.
void write_bands(const std::filesystem::path& csv, const BandStructure& bands);
BandStructure read_bands(const std::filesystem::path& csv);

struct GapRecord {
  std::optional<BandGap> gap;  // nullopt is written as "no gap"
  double period_nm = 0.0;
  double hole_ratio = 0.0;
};
void write_gap(const std::filesystem::path& json, const GapRecord& record);
GapRecord read_gap(const std::filesystem::path& json);

// Histograms: time_ps,counts at bin centres; the sidecar holds the grid, IRF,
// seed and, for synthetic data, the generating model.
struct HistogramFile {
  TransientHistogram histogram;
  std::optional<std::uint64_t> seed;
  std::optional<DecayModel> model;
};
void write_histogram(const std::filesystem::path& csv, const HistogramFile& file);
HistogramFile read_histogram(const std::filesystem::path& csv);

// Spectral scans: wavelength_nm,lifetime_ps,lifetime_err_ps. The sidecar
// carries units and, when known, the cavity modes and generating parameters.
struct ScanMetadata {
  std::vector<CavityMode> modes;
  std::optional<double> tau0_ps;
  std::vector<double> fp;
  std::optional<double> alpha;
  std::optional<double> relative_noise;
  std::optional<std::uint64_t> seed;
};
struct ScanFile {
  SpectralScan scan;
  ScanMetadata metadata;
};
void write_scan(const std::filesystem::path& csv, const ScanFile& file);
void write_scan(const std::filesystem::path& csv, const SpectralScan& scan);
SpectralScan read_scan(const std::filesystem::path& csv);
/// Scan plus sidecar; a missing sidecar gives empty metadata.
ScanFile read_scan_file(const std::filesystem::path& csv);

void write_fit(const std::filesystem::path& json, const FitResult& fit);
FitResult read_fit(const std::filesystem::path& json);

void write_spectral_fit(const std::filesystem::path& json, const SpectralFitResult& result);
SpectralFitResult read_spectral_fit(const std::filesystem::path& json);

void write_mode_profile(const std::filesystem::path& json, const CavityModeProfile& profile);
CavityModeProfile read_mode_profile(const std::filesystem::path& json);

/// Whole-file read and atomic-enough write (temporary file then rename).
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace phc::io
