#include "aecs/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "aecs/experiments.hpp"
#include "aecs/simdevice.hpp"
#include "aecs/topology.hpp"

namespace aecs::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- config I/O

std::string_view type_name(const json& value) { return value.type_name(); }

void require_object(const json& value, const std::string& where) {
  if (!value.is_object()) {
    throw ConfigError("config: " + where + ": expected an object, got " +
                      std::string(type_name(value)));
  }
}

void reject_unknown(const json& section, const std::string& where,
                    std::initializer_list<std::string_view> known) {
  for (const auto& [key, _] : section.items()) {
    bool found = false;
    for (auto k : known) found = found || key == k;
    if (!found) throw ConfigError("config: " + where + "." + key + ": unknown field");
  }
}

void read(const json& section, const std::string& where, const char* key, double& out) {
  if (!section.contains(key)) return;
  const json& v = section[key];
  if (!v.is_number()) {
    throw ConfigError("config: " + where + "." + key + ": expected a number, got " +
                      std::string(type_name(v)));
  }
  out = v.get<double>();
}

void read(const json& section, const std::string& where, const char* key, int& out) {
  if (!section.contains(key)) return;
  const json& v = section[key];
  if (!v.is_number_integer()) {
    throw ConfigError("config: " + where + "." + key + ": expected an integer, got " +
                      std::string(type_name(v)));
  }
  out = v.get<int>();
}

void read(const json& section, const std::string& where, const char* key, bool& out) {
  if (!section.contains(key)) return;
  const json& v = section[key];
  if (!v.is_boolean()) {
    throw ConfigError("config: " + where + "." + key + ": expected a boolean, got " +
                      std::string(type_name(v)));
  }
  out = v.get<bool>();
}

void read(const json& section, const std::string& where, const char* key, std::string& out) {
  if (!section.contains(key)) return;
  const json& v = section[key];
  if (v.is_null()) {
    out.clear();
    return;
  }
  if (!v.is_string()) {
    throw ConfigError("config: " + where + "." + key + ": expected a string, got " +
                      std::string(type_name(v)));
  }
  out = v.get<std::string>();
}

void read(const json& section, const std::string& where, const char* key,
          std::optional<double>& out) {
  if (!section.contains(key)) return;
  if (section[key].is_null()) {
    out.reset();
    return;
  }
  double value = 0.0;
  read(section, where, key, value);
  out = value;
}

json optional_json(const std::optional<double>& value) {
  return value ? json(*value) : json(nullptr);
}

json string_or_null(const std::string& value) { return value.empty() ? json(nullptr) : json(value); }

std::string_view to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "median"; }

Aggregation aggregation_from_string(const std::string& text, const std::string& where) {
  if (text == "mean") return Aggregation::mean;
  if (text == "median") return Aggregation::median;
  throw ConfigError(where + ": expected \"mean\" or \"median\", got \"" + text + "\"");
}

std::string_view to_string(Ranking r) {
  return r == Ranking::measured_energy ? "measured_energy" : "blended";
}

Ranking ranking_from_string(const std::string& text, const std::string& where) {
  if (text == "measured_energy" || text == "energy") return Ranking::measured_energy;
  if (text == "blended" || text == "blend") return Ranking::blended;
  throw ConfigError(where + ": expected \"measured_energy\" or \"blended\", got \"" + text + "\"");
}

void check_format(const std::string& format, const std::string& where) {
  if (format != "json" && format != "csv" && format != "md") {
    throw ConfigError(where + ": expected json, csv or md, got \"" + format + "\"");
  }
}

json selection_json(const CoreSelection& s) {
  if (s.mode() == SelectionMode::thread_count) return s.thread_count();
  return s.counts();
}

// ------------------------------------------------------------------ outputs

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

fs::path prepare_output(const RunConfig& config) {
  fs::path dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

/// The echo minus the output directory, so summaries of identical runs written
/// to different places are identical.
json config_echo(const RunConfig& config) {
  json doc = config_to_json(config);
  doc["output"].erase("dir");
  return doc;
}

void write_config(const fs::path& dir, const RunConfig& config, const std::string& command) {
  json doc = config_to_json(config);
  doc["command"] = command;
  write_file(dir / "config.json", doc.dump(2) + "\n");
}

std::string trace_jsonl(const std::vector<TraceRecord>& trace) {
  std::string text;
  for (const auto& r : trace) {
    json line = {{"phase", to_string(r.phase)},
                 {"selection", selection_json(r.selection)},
                 {"repeat_index", r.repeat_index},
                 {"speed_tps", r.speed_tps},
                 {"energy_mj_per_tok", r.energy_mj_per_tok},
                 {"elapsed_s", r.elapsed_s}};
    text += line.dump() + "\n";
  }
  return text;
}

json sample_json(const MeasurementSample& s) {
  return {{"speed_tps", s.speed},
          {"elapsed_s", s.elapsed},
          {"energy_mj_per_tok", s.energy},
          {"avg_power_w", s.avg_power},
          {"tokens", s.tokens}};
}

json result_json(const SearchResult& result) {
  json doc;
  doc["chosen"] = selection_json(result.chosen);
  doc["chosen_label"] = result.chosen.to_string();
  doc["stage1"] = selection_json(result.stage1);
  doc["stage1_speed_tps"] = result.stage1_speed;
  doc["measurement_count"] = result.measurement_count;
  doc["token_budget"] = result.token_budget;
  doc["stage1_steps"] = json::array();
  for (const auto& step : result.stage1_steps) {
    doc["stage1_steps"].push_back({{"selection", selection_json(step.selection)},
                                   {"mean", sample_json(step.mean)},
                                   {"speedup", step.speedup},
                                   {"accepted", step.accepted}});
  }
  doc["candidates"] = json::array();
  for (const auto& c : result.candidates) {
    doc["candidates"].push_back({{"selection", selection_json(c.selection)},
                                 {"depth", c.depth},
                                 {"tag", to_string(c.tag)},
                                 {"mean", sample_json(c.mean)},
                                 {"objective", c.objective},
                                 {"feasible", c.feasible}});
  }
  return doc;
}

std::string format_number(double value, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << value;
  return out.str();
}

void print_candidates(std::ostream& out, const SearchResult& result) {
  out << "selection       tag  feasible  speed[tok/s]  energy[mJ/tok]  objective\n";
  for (const auto& c : result.candidates) {
    out << std::left << std::setw(16) << c.selection.to_string() << std::setw(5)
        << to_string(c.tag) << std::setw(10) << (c.feasible ? "yes" : "no") << std::setw(14)
        << format_number(c.mean.speed, 3) << std::setw(16) << format_number(c.mean.energy, 2)
        << format_number(c.objective, 5) << "\n"
        << std::right;
  }
}

// ------------------------------------------------------------------ devices

SimulatedDevice apply_noise(SimulatedDevice device, const RunConfig& config) {
  if (config.sigma) device.noise_rel_sigma = *config.sigma;
  if (config.counter_update_s) device.counter_update_s = *config.counter_update_s;
  if (config.poll_interval_s) device.poll_interval_s = *config.poll_interval_s;
  // A disabled counter has no polling either.
  if (device.counter_update_s == 0.0) device.poll_interval_s = 0.0;
  try {
    validate(device);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
  return device;
}

SimulatedDevice load_configured_device(const RunConfig& config) {
  if (!config.preset.empty() && !config.device_file.empty()) {
    throw ConfigError("device: give either a preset or a device file, not both");
  }
  try {
    if (!config.device_file.empty()) return apply_noise(load_device_file(config.device_file), config);
    if (!config.preset.empty()) return apply_noise(load_preset(config.preset), config);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("device: ") + e.what());
  }
  throw ConfigError("device: no preset or device file given (use --preset or --device)");
}

void validate_run(const RunConfig& config) {
  try {
    validate(config.search);
    validate(config.heuristic);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  check_format(config.format, "output.format");
  if (config.trials < 1) throw ConfigError("experiment.trials: must be >= 1");
  if (config.variance_trials < 100) throw ConfigError("experiment.variance_trials: must be >= 100");
  if (config.pairs < 1) throw ConfigError("experiment.pairs: must be >= 1");
  if (config.trials_per_pair < 1) throw ConfigError("experiment.trials_per_pair: must be >= 1");
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// ---------------------------------------------------------------- commands

struct Context {
  RunConfig config;
  std::string command;
  std::ostream& out;
  unsigned threads = 0;
};

void finish_outputs(const Context& ctx, const json& summary, const std::vector<TraceRecord>* trace) {
  if (ctx.config.output_dir.empty()) return;
  const fs::path dir = prepare_output(ctx.config);
  write_config(dir, ctx.config, ctx.command);
  if (trace) write_file(dir / "trace.jsonl", trace_jsonl(*trace));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
}

int cmd_search(Context& ctx, const SimulatedDevice& device) {
  SimulatedProvider provider(device, RngStream(ctx.config.seed));
  const SearchResult result = aecs_search(provider, device.topology, ctx.config.search, ctx.config.heuristic);

  json summary = result_json(result);
  summary["command"] = "search";
  summary["device"] = device.name;
  summary["config"] = config_echo(ctx.config);
  finish_outputs(ctx, summary, &result.trace);

  ctx.out << device.name << ": stage 1 " << result.stage1.to_string() << " at "
          << format_number(result.stage1_speed, 3) << " tok/s\n";
  print_candidates(ctx.out, result);
  ctx.out << "chosen " << result.chosen.to_string() << " after " << result.measurement_count
          << " measurements\n";
  return exit_ok;
}

int cmd_oracle(Context& ctx, const SimulatedDevice& device) {
  SimulatedProvider provider(device, RngStream(ctx.config.seed));
  const SearchResult result = exhaustive_search(provider, device.topology, ctx.config.search,
                                                ctx.config.heuristic, ctx.config.ranking);
  json summary = result_json(result);
  summary["command"] = "oracle";
  summary["device"] = device.name;
  summary["ranking"] = to_string(ctx.config.ranking);
  summary["true_optimum"] = selection_json(true_optimum(device, ctx.config.search.epsilon));
  summary["config"] = config_echo(ctx.config);
  finish_outputs(ctx, summary, &result.trace);

  ctx.out << device.name << ": " << result.candidates.size() << " selections measured, fastest "
          << format_number(result.stage1_speed, 3) << " tok/s\n";
  ctx.out << "chosen " << result.chosen.to_string() << " after " << result.measurement_count
          << " measurements\n";
  return exit_ok;
}

int cmd_tree(Context& ctx, const SimulatedDevice& device, const CoreSelection& root) {
  const CandidateTree tree = grow_candidate_tree(root, device.topology, ctx.config.search);
  json summary;
  summary["command"] = "tree";
  summary["device"] = device.name;
  summary["root"] = selection_json(root);
  summary["nodes"] = json::array();
  for (const auto& node : tree.nodes) {
    summary["nodes"].push_back({{"selection", selection_json(node.selection)},
                                {"depth", node.depth},
                                {"parent", node.parent},
                                {"tag", to_string(node.tag)}});
    ctx.out << std::string(2 * node.depth, ' ') << node.selection.to_string() << "  "
            << to_string(node.tag);
    if (node.parent >= 0) ctx.out << " from " << tree.nodes[node.parent].selection.to_string();
    ctx.out << "\n";
  }
  summary["config"] = config_echo(ctx.config);
  finish_outputs(ctx, summary, nullptr);
  return exit_ok;
}

int cmd_ablate(Context& ctx, const std::vector<SimulatedDevice>& devices) {
  const AblationReport report = run_ablation(devices, ctx.config.search, ctx.config.heuristic,
                                             ctx.config.trials, ctx.config.seed, ctx.threads);
  json summary = ablation_to_json(report);
  summary["command"] = "ablate";
  summary["config"] = config_echo(ctx.config);

  std::string rendered;
  if (ctx.config.format == "csv") rendered = ablation_to_csv(report);
  else if (ctx.config.format == "json") rendered = ablation_to_json(report).dump(2) + "\n";
  else rendered = ablation_to_markdown(report);

  if (!ctx.config.output_dir.empty()) {
    finish_outputs(ctx, summary, nullptr);
    const fs::path dir = ctx.config.output_dir;
    write_file(dir / "report.csv", ablation_to_csv(report));
    write_file(dir / "report.md", ablation_to_markdown(report));
    write_file(dir / "report.json", ablation_to_json(report).dump(2) + "\n");
  }
  ctx.out << rendered;
  return exit_ok;
}

std::string theorems_csv(const json& doc) {
  std::ostringstream out;
  out << "check,alpha,trials,value,predicted_or_raw,extra\n";
  const json& v = doc["variance_reduction"];
  const json& o = doc["ordering_accuracy"];
  out << "variance_reduction," << v["alpha"].get<double>() << "," << v["trials"].get<int>() << ","
      << v["empirical_variance_ratio"].get<double>() << "," << v["predicted_ratio"].get<double>()
      << ",\n";
  out << "ordering_accuracy," << o["alpha"].get<double>() << "," << o["trials"].get<int>() << ","
      << o["ordering_accuracy_blend"].get<double>() << "," << o["ordering_accuracy_raw"].get<double>()
      << "," << o["excluded_pairs"].get<int>() << "\n";
  return out.str();
}

std::string theorems_markdown(const std::string& device, const TheoremReport& variance,
                              const TheoremReport& ordering) {
  std::ostringstream out;
  out << "## Blend checks on " << device << "\n\n";
  out << "| check | alpha | samples | result | reference |\n";
  out << "|---|---|---|---|---|\n";
  out << "| variance ratio | " << format_number(variance.alpha, 2) << " | " << variance.trials << " | "
      << format_number(variance.empirical_variance_ratio, 4) << " | (1-alpha)^2 = "
      << format_number(variance.predicted_ratio, 4) << " |\n";
  out << "| ordering accuracy | " << format_number(ordering.alpha, 2) << " | " << ordering.trials
      << " | blend " << format_number(ordering.ordering_accuracy_blend, 4) << " | raw "
      << format_number(ordering.ordering_accuracy_raw, 4) << " |\n";
  out << "\n" << ordering.pairs << " pairs sampled, " << ordering.excluded_pairs
      << " excluded because h*t and energy disagree; gap std. error "
      << format_number(ordering.accuracy_gap_stderr, 4) << "\n";
  return out.str();
}

int cmd_theorems(Context& ctx, const SimulatedDevice& device, const CoreSelection& selection) {
  const double alpha = ctx.config.heuristic.alpha;
  const TheoremReport variance = verify_variance_reduction(device, selection, ctx.config.heuristic, alpha,
                                                           ctx.config.variance_trials, ctx.config.seed);
  OrderingOptions options;
  options.pair_count = ctx.config.pairs;
  options.trials_per_pair = ctx.config.trials_per_pair;
  options.min_relative_gap = ctx.config.min_relative_gap;
  const TheoremReport ordering =
      verify_ordering_accuracy(device, ctx.config.heuristic, alpha, options, ctx.config.seed);

  json summary;
  summary["command"] = "theorems";
  summary["device"] = device.name;
  summary["selection"] = selection_json(selection);
  summary["variance_reduction"] = theorem_to_json(variance);
  summary["ordering_accuracy"] = theorem_to_json(ordering);
  summary["config"] = config_echo(ctx.config);

  const std::string md = theorems_markdown(device.name, variance, ordering);
  std::string rendered = md;
  if (ctx.config.format == "csv") rendered = theorems_csv(summary);
  else if (ctx.config.format == "json") rendered = summary.dump(2) + "\n";

  if (!ctx.config.output_dir.empty()) {
    finish_outputs(ctx, summary, nullptr);
    const fs::path dir = ctx.config.output_dir;
    write_file(dir / "report.csv", theorems_csv(summary));
    write_file(dir / "report.md", md);
    write_file(dir / "report.json", summary.dump(2) + "\n");
  }
  ctx.out << rendered;
  return exit_ok;
}

void print_topology(std::ostream& out, const CpuTopology& topology) {
  out << topology.device_name << " (" << to_string(topology.selection_mode) << ", "
      << topology.total_cores() << " cores)\n";
  for (int i = 0; i < topology.cluster_count(); ++i) {
    const Cluster& c = topology.clusters[i];
    out << "  cluster " << i << ": " << c.core_count << " x " << format_number(c.max_freq_ghz, 2)
        << " GHz  capacity " << format_number(c.capacity, 4) << "  " << to_string(c.core_type)
        << "\n";
  }
  out << "  search space " << enumerate_selections(topology).size() << " selections\n";
}

int cmd_presets(Context& ctx) {
  for (const auto& name : preset_names()) {
    const SimulatedDevice device = load_preset(name);
    ctx.out << std::left << std::setw(13) << name << std::right << device.topology.device_name << ", ";
    for (int i = 0; i < device.topology.cluster_count(); ++i) {
      const Cluster& c = device.topology.clusters[i];
      ctx.out << (i ? " + " : "") << c.core_count << "x" << format_number(c.max_freq_ghz, 2);
    }
    ctx.out << " GHz, " << to_string(device.governor) << "\n";
  }
  return exit_ok;
}

// -------------------------------------------------------------------- flags

struct Flags {
  std::optional<std::string> config_file, preset, device, out, format, root, ranking, presets,
      selection, aggregation;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma, counter_update, poll, epsilon, alpha, thread_alpha, min_speedup,
      min_gap;
  std::optional<int> repeats, tokens, max_depth, trials, pairs, trials_per_pair, variance_trials;
  bool include_efficient = false;
  unsigned threads = 0;
  std::string descriptor, sysfs, sysfs_name;
};

void add_device_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_file, "JSON run config; flags override its values");
  app->add_option("--preset", f.preset, "bundled device preset");
  app->add_option("--device", f.device, "device JSON file");
  app->add_option("--seed", f.seed, "64-bit seed (default: from entropy, always recorded)");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--sigma", f.sigma, "relative measurement noise");
  app->add_option("--counter-update", f.counter_update, "energy counter period in seconds (0 disables)");
  app->add_option("--poll", f.poll, "energy counter polling period in seconds");
}

void add_search_flags(CLI::App* app, Flags& f) {
  app->add_option("--epsilon", f.epsilon, "allowed slowdown");
  app->add_option("--repeats", f.repeats, "measurements per candidate");
  app->add_option("--tokens", f.tokens, "tokens per measurement");
  app->add_option("--min-speedup", f.min_speedup, "stage-1 stopping threshold");
  app->add_option("--max-depth", f.max_depth, "candidate tree depth limit");
  app->add_option("--aggregation", f.aggregation, "mean or median");
  app->add_flag("--include-efficient", f.include_efficient, "let the tree use efficient clusters");
  app->add_option("--alpha", f.alpha, "blend weight (affinity mode)");
  app->add_option("--thread-alpha", f.thread_alpha, "blend weight (thread mode)");
}

RunConfig resolve(const Flags& f) {
  RunConfig config;
  bool seed_recorded = false;
  if (f.config_file) {
    std::ifstream in(*f.config_file);
    if (!in) throw ConfigError("config: cannot open " + *f.config_file);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw ConfigError("config: " + *f.config_file + " is not valid JSON: " + e.what());
    }
    config = config_from_json(doc);
    seed_recorded = doc.is_object() && doc.contains("seed");
  }
  if (f.preset) {
    config.preset = *f.preset;
    config.device_file.clear();
  }
  if (f.device) {
    config.device_file = *f.device;
    if (!f.preset) config.preset.clear();
  }
  if (f.seed) config.seed = *f.seed;
  else if (!seed_recorded) config.seed = entropy_seed();
  if (f.out) config.output_dir = *f.out;
  if (f.format) config.format = *f.format;
  if (f.sigma) config.sigma = *f.sigma;
  if (f.counter_update) config.counter_update_s = *f.counter_update;
  if (f.poll) config.poll_interval_s = *f.poll;
  if (f.epsilon) config.search.epsilon = *f.epsilon;
  if (f.repeats) config.search.repeats = *f.repeats;
  if (f.tokens) config.search.tokens_per_measurement = *f.tokens;
  if (f.min_speedup) config.search.stage1_min_speedup = *f.min_speedup;
  if (f.max_depth) config.search.max_tree_depth = *f.max_depth;
  if (f.aggregation) config.search.aggregation = aggregation_from_string(*f.aggregation, "--aggregation");
  if (f.include_efficient) config.search.include_efficient = true;
  if (f.alpha) config.heuristic.alpha = *f.alpha;
  if (f.thread_alpha) config.heuristic.thread_alpha = *f.thread_alpha;
  if (f.trials) config.trials = *f.trials;
  if (f.root) config.root = *f.root;
  if (f.ranking) config.ranking = ranking_from_string(*f.ranking, "--ranking");
  if (f.selection) config.selection = *f.selection;
  if (f.variance_trials) config.variance_trials = *f.variance_trials;
  if (f.pairs) config.pairs = *f.pairs;
  if (f.trials_per_pair) config.trials_per_pair = *f.trials_per_pair;
  if (f.min_gap) config.min_relative_gap = *f.min_gap;
  if (f.presets) {
    config.presets.clear();
    if (*f.presets != "all") {
      std::stringstream list(*f.presets);
      std::string name;
      while (std::getline(list, name, ',')) {
        if (!name.empty()) config.presets.push_back(name);
      }
    }
  }
  validate_run(config);
  return config;
}

CoreSelection parse_selection_field(const std::string& text, const CpuTopology& topology,
                                    const std::string& where) {
  try {
    return parse_selection(text, topology);
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

/// Fills device-dependent noise values so the echo is fully expanded.
void expand_noise(RunConfig& config, const SimulatedDevice& device) {
  config.sigma = device.noise_rel_sigma;
  config.counter_update_s = device.counter_update_s;
  config.poll_interval_s = device.poll_interval_s;
}

int dispatch(const std::string& command, const Flags& flags, std::ostream& out) {
  // Resolution: every failure here is a configuration problem.
  Context ctx{resolve(flags), command, out, flags.threads};
  RunConfig& config = ctx.config;

  if (command == "presets") return cmd_presets(ctx);

  if (command == "describe") {
    CpuTopology topology;
    std::optional<SimulatedDevice> device;
    try {
      if (!flags.descriptor.empty()) topology = load_device_descriptor(flags.descriptor);
      else if (!flags.sysfs.empty()) topology = parse_sysfs_snapshot(flags.sysfs, flags.sysfs_name);
      else device = load_configured_device(config);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (device) {
      topology = device->topology;
      out << "governor " << to_string(device->governor) << "\n";
    }
    print_topology(out, topology);
    out << serialize_device_descriptor(topology) << "\n";
    return exit_ok;
  }

  if (command == "ablate") {
    std::vector<std::string> names = config.presets.empty() ? preset_names() : config.presets;
    std::vector<SimulatedDevice> devices;
    for (const auto& name : names) {
      try {
        devices.push_back(apply_noise(load_preset(name), config));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(std::string("experiment.presets: ") + e.what());
      }
    }
    if (!config.device_file.empty()) devices.push_back(load_configured_device(config));
    return cmd_ablate(ctx, devices);
  }

  const SimulatedDevice device = load_configured_device(config);
  expand_noise(config, device);

  if (command == "search") return cmd_search(ctx, device);
  if (command == "oracle") return cmd_oracle(ctx, device);
  if (command == "tree") {
    if (config.root.empty()) throw ConfigError("experiment.root: tree needs --root");
    const CoreSelection root = parse_selection_field(config.root, device.topology, "experiment.root");
    return cmd_tree(ctx, device, root);
  }
  if (command == "theorems") {
    const CoreSelection selection =
        config.selection.empty() ? true_optimum(device, config.search.epsilon)
                                 : parse_selection_field(config.selection, device.topology,
                                                         "experiment.selection");
    return cmd_theorems(ctx, device, selection);
  }
  throw ConfigError("unknown command " + command);
}

}  // namespace

RunConfig config_from_json(const json& doc, RunConfig base) {
  require_object(doc, "<root>");
  reject_unknown(doc, "<root>",
                 {"command", "device", "search", "heuristic", "noise", "seed", "output", "experiment"});
  RunConfig c = std::move(base);

  if (doc.contains("device")) {
    const json& s = doc["device"];
    require_object(s, "device");
    reject_unknown(s, "device", {"preset", "file"});
    read(s, "device", "preset", c.preset);
    read(s, "device", "file", c.device_file);
  }
  if (doc.contains("search")) {
    const json& s = doc["search"];
    require_object(s, "search");
    reject_unknown(s, "search", {"epsilon", "tokens_per_measurement", "repeats", "stage1_min_speedup",
                                 "include_efficient", "max_tree_depth", "aggregation"});
    read(s, "search", "epsilon", c.search.epsilon);
    read(s, "search", "tokens_per_measurement", c.search.tokens_per_measurement);
    read(s, "search", "repeats", c.search.repeats);
    read(s, "search", "stage1_min_speedup", c.search.stage1_min_speedup);
    read(s, "search", "include_efficient", c.search.include_efficient);
    read(s, "search", "max_tree_depth", c.search.max_tree_depth);
    std::string aggregation(to_string(c.search.aggregation));
    read(s, "search", "aggregation", aggregation);
    c.search.aggregation = aggregation_from_string(aggregation, "config: search.aggregation");
  }
  if (doc.contains("heuristic")) {
    const json& s = doc["heuristic"];
    require_object(s, "heuristic");
    reject_unknown(s, "heuristic", {"a_efficient", "a_performance", "a_prime", "b", "static_power",
                                    "alpha", "thread_alpha"});
    read(s, "heuristic", "a_efficient", c.heuristic.a_efficient);
    read(s, "heuristic", "a_performance", c.heuristic.a_performance);
    read(s, "heuristic", "a_prime", c.heuristic.a_prime);
    read(s, "heuristic", "b", c.heuristic.b);
    read(s, "heuristic", "static_power", c.heuristic.static_power);
    read(s, "heuristic", "alpha", c.heuristic.alpha);
    read(s, "heuristic", "thread_alpha", c.heuristic.thread_alpha);
  }
  if (doc.contains("noise")) {
    const json& s = doc["noise"];
    require_object(s, "noise");
    reject_unknown(s, "noise", {"sigma", "counter_update_s", "poll_interval_s"});
    read(s, "noise", "sigma", c.sigma);
    read(s, "noise", "counter_update_s", c.counter_update_s);
    read(s, "noise", "poll_interval_s", c.poll_interval_s);
  }
  if (doc.contains("seed")) {
    const json& v = doc["seed"];
    if (!v.is_number_unsigned()) {
      throw ConfigError("config: seed: expected a non-negative integer, got " +
                        std::string(type_name(v)));
    }
    c.seed = v.get<std::uint64_t>();
  }
  if (doc.contains("output")) {
    const json& s = doc["output"];
    require_object(s, "output");
    reject_unknown(s, "output", {"dir", "format"});
    read(s, "output", "dir", c.output_dir);
    read(s, "output", "format", c.format);
    check_format(c.format, "config: output.format");
  }
  if (doc.contains("experiment")) {
    const json& s = doc["experiment"];
    require_object(s, "experiment");
    reject_unknown(s, "experiment", {"trials", "presets", "root", "ranking", "selection", "variance_trials",
                                     "pairs", "trials_per_pair", "min_relative_gap"});
    read(s, "experiment", "trials", c.trials);
    if (s.contains("presets")) {
      const json& list = s["presets"];
      if (!list.is_array()) throw ConfigError("config: experiment.presets: expected an array of names");
      c.presets.clear();
      for (const auto& name : list) {
        if (!name.is_string()) throw ConfigError("config: experiment.presets: expected an array of names");
        c.presets.push_back(name.get<std::string>());
      }
    }
    read(s, "experiment", "root", c.root);
    std::string ranking(to_string(c.ranking));
    read(s, "experiment", "ranking", ranking);
    c.ranking = ranking_from_string(ranking, "config: experiment.ranking");
    read(s, "experiment", "selection", c.selection);
    read(s, "experiment", "variance_trials", c.variance_trials);
    read(s, "experiment", "pairs", c.pairs);
    read(s, "experiment", "trials_per_pair", c.trials_per_pair);
    read(s, "experiment", "min_relative_gap", c.min_relative_gap);
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  json doc;
  doc["device"] = {{"preset", string_or_null(c.preset)}, {"file", string_or_null(c.device_file)}};
  doc["search"] = {{"epsilon", c.search.epsilon},
                   {"tokens_per_measurement", c.search.tokens_per_measurement},
                   {"repeats", c.search.repeats},
                   {"stage1_min_speedup", c.search.stage1_min_speedup},
                   {"include_efficient", c.search.include_efficient},
                   {"max_tree_depth", c.search.max_tree_depth},
                   {"aggregation", to_string(c.search.aggregation)}};
  doc["heuristic"] = {{"a_efficient", c.heuristic.a_efficient},
                      {"a_performance", c.heuristic.a_performance},
                      {"a_prime", c.heuristic.a_prime},
                      {"b", c.heuristic.b},
                      {"static_power", c.heuristic.static_power},
                      {"alpha", c.heuristic.alpha},
                      {"thread_alpha", c.heuristic.thread_alpha}};
  doc["noise"] = {{"sigma", optional_json(c.sigma)},
                  {"counter_update_s", optional_json(c.counter_update_s)},
                  {"poll_interval_s", optional_json(c.poll_interval_s)}};
  doc["seed"] = c.seed;
  doc["output"] = {{"dir", c.output_dir}, {"format", c.format}};
  doc["experiment"] = {{"trials", c.trials},
                       {"presets", c.presets},
                       {"root", string_or_null(c.root)},
                       {"ranking", to_string(c.ranking)},
                       {"selection", string_or_null(c.selection)},
                       {"variance_trials", c.variance_trials},
                       {"pairs", c.pairs},
                       {"trials_per_pair", c.trials_per_pair},
                       {"min_relative_gap", c.min_relative_gap}};
  return doc;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-centric CPU core selection on simulated devices", "aecs"};
  app.require_subcommand(1);
  Flags flags;

  auto* search = app.add_subcommand("search", "run the two-stage search on one device");
  add_device_flags(search, flags);
  add_search_flags(search, flags);

  auto* oracle = app.add_subcommand("oracle", "measure every selection and pick the feasible best");
  add_device_flags(oracle, flags);
  add_search_flags(oracle, flags);
  oracle->add_option("--ranking", flags.ranking, "measured_energy or blended");

  auto* tree = app.add_subcommand("tree", "print the candidate tree grown from a root");
  add_device_flags(tree, flags);
  add_search_flags(tree, flags);
  tree->add_option("--root", flags.root, "root selection, e.g. 1,2,0");

  auto* ablate = app.add_subcommand("ablate", "optimality rates with and without the heuristic");
  add_device_flags(ablate, flags);
  add_search_flags(ablate, flags);
  ablate->add_option("--presets", flags.presets, "comma-separated preset names or 'all'");
  ablate->add_option("--trials", flags.trials, "noisy searches per device and arm");
  ablate->add_option("--format", flags.format, "md, csv or json");
  ablate->add_option("--threads", flags.threads, "worker threads (0 = hardware)");

  auto* theorems = app.add_subcommand("theorems", "variance and ordering checks of the blend");
  add_device_flags(theorems, flags);
  add_search_flags(theorems, flags);
  theorems->add_option("--selection", flags.selection, "selection for the variance check");
  theorems->add_option("--variance-trials", flags.variance_trials, "samples for the variance check");
  theorems->add_option("--pairs", flags.pairs, "selection pairs for the ordering check");
  theorems->add_option("--trials-per-pair", flags.trials_per_pair, "comparisons per pair");
  theorems->add_option("--min-gap", flags.min_gap, "only pairs whose energies differ by this fraction");
  theorems->add_option("--format", flags.format, "md, csv or json");

  auto* presets = app.add_subcommand("presets", "list bundled devices");

  auto* describe = app.add_subcommand("describe", "parse and print a descriptor or sysfs snapshot");
  add_device_flags(describe, flags);
  describe->add_option("--descriptor", flags.descriptor, "device descriptor JSON");
  describe->add_option("--sysfs", flags.sysfs, "sysfs snapshot directory");
  describe->add_option("--name", flags.sysfs_name, "device name for a snapshot");

  const auto subcommands = app.get_subcommands([](CLI::App*) { return true; });
  const bool known = std::any_of(subcommands.begin(), subcommands.end(),
                                 [&](CLI::App* sub) { return !args.empty() && sub->check_name(args.front()); });
  if (!args.empty() && !args.front().empty() && args.front()[0] != '-' && !known) {
    err << "error: unknown subcommand '" << args.front() << "'\n" << app.help();
    return exit_config_error;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return exit_config_error;
  }

  std::string command;
  for (auto* sub : {search, oracle, tree, ablate, theorems, presets, describe}) {
    if (sub->parsed()) command = sub->get_name();
  }

  try {
    return dispatch(command, flags, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_runtime_error;
  }
}

}  // namespace aecs::cli
