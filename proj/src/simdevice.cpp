#include "aecs/simdevice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace aecs {

using nlohmann::json;

std::string_view to_string(GovernorKind kind) {
  return kind == GovernorKind::capacity_scaled ? "capacity_scaled" : "pinned_max";
}

GovernorKind governor_from_string(std::string_view text) {
  if (text == "capacity_scaled") return GovernorKind::capacity_scaled;
  if (text == "pinned_max") return GovernorKind::pinned_max;
  throw ParseError("governor: unknown value '" + std::string(text) + "'");
}

double GroundTruthModel::kappa(CoreType type) const {
  switch (type) {
    case CoreType::prime: return kappa_prime;
    case CoreType::performance: return kappa_performance;
    case CoreType::efficient: return kappa_efficient;
  }
  return kappa_prime;
}

SimulatedDevice SimulatedDevice::with_noise(double sigma, double counter_update) const {
  SimulatedDevice copy = *this;
  copy.noise_rel_sigma = sigma;
  copy.counter_update_s = counter_update;
  if (counter_update > 0.0) copy.poll_interval_s = std::min(copy.poll_interval_s, counter_update);
  return copy;
}

void validate(const SimulatedDevice& device) {
  validate(device.topology);
  const auto& t = device.truth;
  if (static_cast<int>(t.ipc.size()) != device.topology.cluster_count()) {
    throw ValidationError("truth.ipc needs one entry per cluster");
  }
  for (double v : t.ipc) {
    if (!(v > 0)) throw ValidationError("truth.ipc entries must be positive");
  }
  if (!(t.static_power_w > 0 && t.kappa_prime > 0 && t.kappa_performance > 0 && t.kappa_efficient > 0)) {
    throw ValidationError("truth: power coefficients must be positive");
  }
  if (!(t.gamma >= 2.0 && t.gamma <= 3.0)) throw ValidationError("truth.gamma must be in [2,3]");
  if (!(t.idle_factor > 0 && t.idle_factor <= 1)) throw ValidationError("truth.idle_factor must be in (0,1]");
  if (!(t.mem_ceiling_tps > 0 && t.throughput_half > 0)) {
    throw ValidationError("truth: speed model constants must be positive");
  }
  if (!(device.noise_rel_sigma >= 0)) throw ValidationError("noise_rel_sigma must be >= 0");
  if (!(device.counter_update_s >= 0)) throw ValidationError("counter_update_s must be >= 0");
  if (device.counter_update_s > 0 &&
      !(device.poll_interval_s > 0 && device.poll_interval_s <= device.counter_update_s)) {
    throw ValidationError("poll_interval_s must be in (0, counter_update_s]");
  }
}

double true_frequency(const SimulatedDevice& device, int cluster_index,
                      const CoreSelection& selection) {
  if (device.governor == GovernorKind::pinned_max ||
      selection.mode() == SelectionMode::thread_count) {
    if (cluster_index < 0 || cluster_index >= device.topology.cluster_count()) {
      throw ValidationError("cluster index out of range");
    }
    return device.topology.clusters[static_cast<std::size_t>(cluster_index)].max_freq_ghz;
  }
  return assigned_frequency(cluster_index, selection, device.topology);
}

double true_speed(const SimulatedDevice& device, const CoreSelection& selection) {
  validate(selection, device.topology);
  const auto counts = occupied_counts(selection, device.topology);
  double throughput = 0.0;
  for (int i = 0; i < device.topology.cluster_count(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    throughput += counts[k] * device.truth.ipc[k] * true_frequency(device, i, selection);
  }
  return device.truth.mem_ceiling_tps * throughput / (throughput + device.truth.throughput_half);
}

double true_power(const SimulatedDevice& device, const CoreSelection& selection) {
  validate(selection, device.topology);
  const auto counts = occupied_counts(selection, device.topology);
  const auto& truth = device.truth;
  double power = truth.static_power_w;
  for (int i = 0; i < device.topology.cluster_count(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Cluster& c = device.topology.clusters[k];
    const double active = counts[k] + (c.core_count - counts[k]) * truth.idle_factor;
    power += truth.kappa(c.core_type) * active *
             std::pow(true_frequency(device, i, selection), truth.gamma);
  }
  return power;
}

double true_energy_per_token(const SimulatedDevice& device, const CoreSelection& selection) {
  return true_power(device, selection) / true_speed(device, selection) * 1000.0;
}

MeasurementDetail measure_detailed(const SimulatedDevice& device, const CoreSelection& selection,
                                   int n_tokens, RngStream& stream, const MeasureOptions& options) {
  if (n_tokens < 1) throw ValidationError("measure: n_tokens must be >= 1");
  const double speed = true_speed(device, selection);
  const double power = true_power(device, selection);
  const double sigma = device.noise_rel_sigma;

  const double eta_time = sigma * stream.truncated_normal();
  const double eta_energy = sigma * stream.truncated_normal();
  const double phase_draw = stream.uniform();

  double elapsed = n_tokens / speed;
  if (options.noisy_time) elapsed *= 1.0 + eta_time;
  const double unquantized = power * elapsed * (1.0 + eta_energy);

  double reported = unquantized;
  const double window = device.counter_update_s;
  if (options.quantize && window > 0.0) {
    // The run starts on a poll instant at a random offset into the current
    // counter window; the counter only credits whole windows.
    const int slots = std::max(1, static_cast<int>(std::lround(window / device.poll_interval_s)));
    const int slot = std::min(slots - 1, static_cast<int>(phase_draw * slots));
    const double offset = window * slot / slots;
    const double windows = std::floor((offset + elapsed) / window);
    reported = unquantized / elapsed * window * windows;
  }

  MeasurementDetail detail;
  detail.true_power_w = power;
  detail.unquantized_energy_j = unquantized;
  detail.sample.tokens = n_tokens;
  detail.sample.elapsed = elapsed;
  detail.sample.speed = n_tokens / elapsed;
  detail.sample.energy = reported / n_tokens * 1000.0;
  detail.sample.avg_power = reported / elapsed;
  return detail;
}

CoreSelection true_optimum(const SimulatedDevice& device, double epsilon) {
  const auto space = enumerate_selections(device.topology);
  double fastest = 0.0;
  for (const auto& s : space) fastest = std::max(fastest, true_speed(device, s));
  const CoreSelection* best = nullptr;
  double best_energy = 0.0;
  for (const auto& s : space) {
    if (true_speed(device, s) < fastest * (1.0 - epsilon)) continue;
    const double e = true_energy_per_token(device, s);
    if (!best || e < best_energy) {
      best = &s;
      best_energy = e;
    }
  }
  return *best;
}

GroundTruthModel default_ground_truth(const CpuTopology& topology) {
  GroundTruthModel truth;
  const HeuristicParams defaults;
  // 200 heuristic units per watt puts kappa near 1 W for a prime core at 3 GHz.
  truth.kappa_prime = defaults.a_prime / 2000.0;
  truth.kappa_performance = defaults.a_performance / 2000.0;
  truth.kappa_efficient = defaults.a_efficient / 2000.0;
  truth.static_power_w = 1.0;
  truth.gamma = 2.3;
  truth.idle_factor = 0.7;
  truth.mem_ceiling_tps = 25.0;
  truth.throughput_half = 1.0;
  for (const auto& c : topology.clusters) {
    truth.ipc.push_back(c.core_type == CoreType::efficient ? 0.1 : 0.5 * c.capacity);
  }
  return truth;
}

namespace {

std::vector<int> selection_counts(const CoreSelection& s) {
  if (s.mode() == SelectionMode::thread_count) return {s.thread_count()};
  return s.counts();
}

CoreSelection selection_from_json(const json& value, const CpuTopology& topology) {
  CoreSelection s;
  if (topology.selection_mode == SelectionMode::thread_count) {
    s = value.is_array() ? CoreSelection::threads(value.at(0).get<int>())
                         : CoreSelection::threads(value.get<int>());
  } else {
    s = CoreSelection::affinity(value.get<std::vector<int>>());
  }
  validate(s, topology);
  return s;
}

template <typename T>
T field(const json& object, const char* key, const char* where) {
  if (!object.contains(key)) throw ParseError(std::string(where) + key + ": missing");
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string(where) + key + ": wrong type");
  }
}

}  // namespace

json device_to_json(const SimulatedDevice& device) {
  json doc;
  doc["name"] = device.name;
  doc["descriptor"] = json::parse(serialize_device_descriptor(device.topology));
  doc["governor"] = std::string(to_string(device.governor));
  const auto& t = device.truth;
  doc["truth"] = {{"static_power_w", t.static_power_w},
                  {"kappa", {{"prime", t.kappa_prime},
                             {"performance", t.kappa_performance},
                             {"efficient", t.kappa_efficient}}},
                  {"gamma", t.gamma},
                  {"idle_factor", t.idle_factor},
                  {"mem_ceiling_tps", t.mem_ceiling_tps},
                  {"throughput_half", t.throughput_half},
                  {"ipc", t.ipc}};
  doc["measurement"] = {{"noise_rel_sigma", device.noise_rel_sigma},
                        {"counter_update_s", device.counter_update_s},
                        {"poll_interval_s", device.poll_interval_s}};
  doc["rng_seed"] = device.rng_seed;
  json cal = json::object();
  if (device.calibration.expected_optimum) {
    cal["expected_optimum"] = selection_counts(*device.calibration.expected_optimum);
  }
  if (device.calibration.expected_stage1) {
    cal["expected_stage1"] = selection_counts(*device.calibration.expected_stage1);
  }
  if (!device.calibration.note.empty()) cal["note"] = device.calibration.note;
  doc["calibration"] = cal;
  return doc;
}

SimulatedDevice device_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("device file: expected a JSON object");
  SimulatedDevice device;
  if (!doc.contains("descriptor")) throw ParseError("descriptor: missing");
  device.topology = parse_device_descriptor(doc["descriptor"].dump());
  device.name = doc.value("name", device.topology.device_name);
  device.governor = governor_from_string(doc.value("governor", std::string("capacity_scaled")));

  if (doc.contains("truth")) {
    const json& t = doc["truth"];
    auto& truth = device.truth;
    truth.static_power_w = field<double>(t, "static_power_w", "truth.");
    const json kappa = field<json>(t, "kappa", "truth.");
    truth.kappa_prime = field<double>(kappa, "prime", "truth.kappa.");
    truth.kappa_performance = field<double>(kappa, "performance", "truth.kappa.");
    truth.kappa_efficient = field<double>(kappa, "efficient", "truth.kappa.");
    truth.gamma = t.value("gamma", 2.3);
    truth.idle_factor = field<double>(t, "idle_factor", "truth.");
    truth.mem_ceiling_tps = field<double>(t, "mem_ceiling_tps", "truth.");
    truth.throughput_half = field<double>(t, "throughput_half", "truth.");
    // Indexed like the canonical big-to-small cluster order.
    truth.ipc = field<std::vector<double>>(t, "ipc", "truth.");
  } else {
    device.truth = default_ground_truth(device.topology);
  }

  if (doc.contains("measurement")) {
    const json& m = doc["measurement"];
    device.noise_rel_sigma = m.value("noise_rel_sigma", 0.05);
    device.counter_update_s = m.value("counter_update_s", 0.25);
    device.poll_interval_s = m.value("poll_interval_s", 0.05);
  }
  device.rng_seed = doc.value("rng_seed", std::uint64_t{0});

  if (doc.contains("calibration")) {
    const json& cal = doc["calibration"];
    if (cal.contains("expected_optimum")) {
      device.calibration.expected_optimum = selection_from_json(cal["expected_optimum"], device.topology);
    }
    if (cal.contains("expected_stage1")) {
      device.calibration.expected_stage1 = selection_from_json(cal["expected_stage1"], device.topology);
    }
    device.calibration.note = cal.value("note", std::string());
  }
  validate(device);
  return device;
}

std::vector<std::string> preset_names() {
  return {"mate40pro", "v30pro", "galaxya56", "meizu21", "xiaomi15pro", "iphone12", "iphone15"};
}

std::filesystem::path preset_directory() {
  if (const char* env = std::getenv("AECS_PRESET_DIR"); env && *env) return env;
#ifdef AECS_DEFAULT_PRESET_DIR
  return AECS_DEFAULT_PRESET_DIR;
#else
  return "data/presets";
#endif
}

SimulatedDevice load_device_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open device file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return device_from_json(doc);
}

SimulatedDevice load_preset(const std::string& name) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ValidationError("unknown preset '" + name + "'; available: " + list);
  }
  return load_device_file(preset_directory() / (name + ".json"));
}

}  // namespace aecs
