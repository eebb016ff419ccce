#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aecs/heuristic.hpp"
#include "aecs/search.hpp"

namespace aecs::cli {

enum ExitStatus { exit_ok = 0, exit_config_error = 1, exit_runtime_error = 2 };

/// Bad flags, unreadable config files, unknown presets, invalid values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run depends on. Unset noise overrides mean "use the device's
/// own measurement settings".
struct RunConfig {
  std::string preset;       ///< preset name, or
  std::string device_file;  ///< path to a device JSON file
  SearchConfig search;
  HeuristicParams heuristic;
  std::optional<double> sigma;
  std::optional<double> counter_update_s;
  std::optional<double> poll_interval_s;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string format = "md";

  // Subcommand inputs.
  int trials = 200;
  std::vector<std::string> presets;  ///< ablate; empty means all
  std::string root;                  ///< tree
  Ranking ranking = Ranking::measured_energy;
  std::string selection;  ///< theorems; empty means the device's optimum
  int variance_trials = 10000;
  int pairs = 5000;
  int trials_per_pair = 1;
  double min_relative_gap = 0.0;
};

/// Reads the JSON config layout (sections device, search, heuristic, noise,
/// output, experiment, plus a top-level seed) on top of `base`. Unknown keys
/// and wrong types raise ConfigError naming the field.
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
nlohmann::json config_to_json(const RunConfig& config);

/// Runs one subcommand. `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aecs::cli
