#pragma once

// Command implementations behind the `phc` executable. Each command writes
// its files under config.output_dir and returns a bundle describing them.

#include <exception>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "phc/config.hpp"

namespace phc {

struct CriterionOutcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

struct ResultBundle {
  std::string command;
  std::string run_id;       // command + "-" + config hash
  std::string config_hash;
  std::filesystem::path directory;
  std::vector<std::filesystem::path> files;  // relative to directory, in write order
  std::vector<std::string> summary;           // human-readable lines
  std::vector<CriterionOutcome> criteria;     // reproduce-paper only

  bool all_passed() const;
};

/// A failure inside one pipeline stage. The original exception is kept so
/// the exit code still reflects its kind.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::exception_ptr cause, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)), cause_(cause) {}
  const std::string& stage() const { return stage_; }
  std::exception_ptr cause() const { return cause_; }

 private:
  std::string stage_;
  std::exception_ptr cause_;
};

ResultBundle cmd_bands(const ExperimentConfig& config);
ResultBundle cmd_modes(const ExperimentConfig& config);
/// Requires config.seed.
ResultBundle cmd_simulate(const ExperimentConfig& config);
/// Histogram and scan files, told apart by their CSV header. Fits that fail
/// to converge are recorded per file; a FitError is thrown at the end if any
/// did.
ResultBundle cmd_fit(const ExperimentConfig& config, const std::vector<std::filesystem::path>& inputs);
/// bands -> modes -> simulate -> fit with the given (normally paper_config())
/// settings, then a comparison with the paper's numbers per acceptance
/// criterion.
ResultBundle cmd_reproduce_paper(const ExperimentConfig& config);

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int criteria_failed = 1;
inline constexpr int usage = 2;  // bad flags, config errors, invalid arguments
inline constexpr int solver = 3;
inline constexpr int fit = 4;
inline constexpr int input = 5;  // unreadable or malformed files
inline constexpr int internal = 70;
}  // namespace exit_code

/// Maps an exception (unwrapping StageError) to an exit code.
int exit_code_for(std::exception_ptr error);

}  // namespace phc
