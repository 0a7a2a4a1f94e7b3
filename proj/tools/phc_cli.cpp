// phc: photonic-crystal cavity QED pipeline.
//
//   phc bands    --config cfg.json
//   phc modes    --config cfg.json
//   phc simulate --config cfg.json --seed 7
//   phc fit      --config cfg.json out/simulate/*.csv
//   phc reproduce-paper --out results

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "phc/config.hpp"
#include "phc/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, Options& o, bool needs_config) {
  auto* c = cmd->add_option("--config", o.config, "experiment configuration (JSON)");
  if (needs_config) c->required();
  cmd->add_option("--out", o.out, "output directory (overrides config and PHC_OUTPUT_DIR)");
  cmd->add_option("--seed", o.seed, "random seed for stochastic steps");
  cmd->add_option("--threads", o.threads, "worker threads, 0 = all cores");
}

void print(const phc::ResultBundle& bundle) {
  for (const auto& line : bundle.summary) std::cout << line << '\n';
  for (const auto& c : bundle.criteria)
    std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << c.detail << '\n';
  std::cout << "wrote " << bundle.files.size() << " files to " << bundle.directory.string() << " (run "
            << bundle.run_id << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photonic-crystal cavity QED: bands, cavity modes, TCSPC simulation and lifetime fits"};
  app.require_subcommand(1);
  Options o;
  auto* bands = app.add_subcommand("bands", "TE band structure and gap for every r/a in the sweep");
  auto* modes = app.add_subcommand("modes", "H1 cavity modes, field profiles and mode volumes");
  auto* simulate = app.add_subcommand("simulate", "synthetic TCSPC histograms and lifetime scans");
  auto* fit = app.add_subcommand("fit", "fit histogram or lifetime-scan CSV files");
  auto* paper = app.add_subcommand("reproduce-paper", "full pipeline with built-in parameters, compared with published values");
  for (auto* cmd : {bands, modes, simulate}) add_common(cmd, o, true);
  add_common(fit, o, false);
  add_common(paper, o, false);
  fit->add_option("files", o.inputs, "histogram (time_ps,counts) or scan (wavelength_nm,...) CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : phc::exit_code::usage;
  }

  auto* chosen = app.get_subcommands().front();
  try {
    phc::ExperimentConfig config =
        o.config.empty() ? (chosen == paper ? phc::paper_config() : phc::ExperimentConfig{}) : phc::load_config(o.config);
    phc::ConfigOverrides flags;
    if (chosen->count("--out")) flags.output_dir = o.out;
    if (chosen->count("--seed")) flags.seed = o.seed;
    if (chosen->count("--threads")) flags.threads = o.threads;
    phc::apply_overrides(config, flags, std::getenv(phc::kOutputDirEnv));

    phc::ResultBundle bundle;
    if (chosen == bands) bundle = phc::cmd_bands(config);
    else if (chosen == modes) bundle = phc::cmd_modes(config);
    else if (chosen == simulate) bundle = phc::cmd_simulate(config);
    else if (chosen == fit) {
      if (o.inputs.empty()) {
        std::cerr << "phc fit: no input files given\n" << fit->help();
        return phc::exit_code::usage;
      }
      bundle = phc::cmd_fit(config, {o.inputs.begin(), o.inputs.end()});
    } else {
      bundle = phc::cmd_reproduce_paper(config);
    }
    print(bundle);
    return bundle.all_passed() ? phc::exit_code::ok : phc::exit_code::criteria_failed;
  } catch (const std::exception& e) {
    std::cerr << "phc " << chosen->get_name() << ": " << e.what() << '\n';
    return phc::exit_code_for(std::current_exception());
  }
}
