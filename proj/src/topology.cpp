#include "aecs/topology.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace aecs {

using nlohmann::json;

std::string_view to_string(CoreType type) {
  switch (type) {
    case CoreType::prime: return "prime";
    case CoreType::performance: return "performance";
    case CoreType::efficient: return "efficient";
  }
  return "?";
}

std::string_view to_string(SelectionMode mode) {
  return mode == SelectionMode::affinity ? "affinity" : "thread_count";
}

CoreType core_type_from_string(std::string_view text) {
  if (text == "prime") return CoreType::prime;
  if (text == "performance") return CoreType::performance;
  if (text == "efficient") return CoreType::efficient;
  throw ParseError("core_type: unknown value '" + std::string(text) + "'");
}

SelectionMode selection_mode_from_string(std::string_view text) {
  if (text == "affinity") return SelectionMode::affinity;
  if (text == "thread_count") return SelectionMode::thread_count;
  throw ParseError("selection_mode: unknown value '" + std::string(text) + "'");
}

int CpuTopology::total_cores() const {
  int total = 0;
  for (const auto& c : clusters) total += c.core_count;
  return total;
}

CoreSelection CoreSelection::affinity(std::vector<int> counts) {
  CoreSelection s;
  s.mode_ = SelectionMode::affinity;
  s.counts_ = std::move(counts);
  return s;
}

CoreSelection CoreSelection::threads(int count) {
  CoreSelection s;
  s.mode_ = SelectionMode::thread_count;
  s.threads_ = count;
  return s;
}

int CoreSelection::selected_cores() const {
  if (mode_ == SelectionMode::thread_count) return threads_;
  int total = 0;
  for (int c : counts_) total += c;
  return total;
}

std::string CoreSelection::to_string() const {
  if (mode_ == SelectionMode::thread_count) return std::to_string(threads_) + "t";
  std::string out = "(";
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(counts_[i]);
  }
  return out + ")";
}

namespace {

int parse_int(std::string_view text, std::string_view what) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError(std::string(what) + ": not an integer '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

CoreSelection parse_selection(std::string_view text, const CpuTopology& topology) {
  CoreSelection selection;
  if (topology.selection_mode == SelectionMode::thread_count) {
    if (!text.empty() && text.back() == 't') text.remove_suffix(1);
    selection = CoreSelection::threads(parse_int(text, "selection"));
  } else {
    std::vector<int> counts;
    std::string_view rest = text;
    if (!rest.empty() && rest.front() == '(') rest.remove_prefix(1);
    if (!rest.empty() && rest.back() == ')') rest.remove_suffix(1);
    while (true) {
      auto comma = rest.find(',');
      counts.push_back(parse_int(rest.substr(0, comma), "selection"));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    selection = CoreSelection::affinity(std::move(counts));
  }
  validate(selection, topology);
  return selection;
}

void validate(const CpuTopology& topology) {
  if (topology.clusters.empty()) throw ValidationError("topology has zero clusters");
  for (std::size_t i = 0; i < topology.clusters.size(); ++i) {
    const auto& c = topology.clusters[i];
    const std::string where = "clusters[" + std::to_string(i) + "]";
    if (c.core_count < 1) throw ValidationError(where + ".cores must be >= 1");
    if (!(c.max_freq_ghz > 0.0)) throw ValidationError(where + ".max_freq_ghz must be > 0");
    if (!(c.capacity > 0.0)) throw ValidationError(where + ".capacity must be > 0");
    if (i > 0 && c.capacity > topology.clusters[i - 1].capacity) {
      throw ValidationError(where + " is bigger than the cluster before it");
    }
  }
}

void validate(const CoreSelection& selection, const CpuTopology& topology) {
  if (selection.mode() != topology.selection_mode) {
    throw ValidationError("selection mode does not match topology mode");
  }
  if (selection.mode() == SelectionMode::thread_count) {
    if (selection.thread_count() < 1 || selection.thread_count() > topology.total_cores()) {
      throw ValidationError("thread count " + std::to_string(selection.thread_count()) +
                            " outside 1.." + std::to_string(topology.total_cores()));
    }
    return;
  }
  const auto& counts = selection.counts();
  if (static_cast<int>(counts.size()) != topology.cluster_count()) {
    throw ValidationError("selection has " + std::to_string(counts.size()) +
                          " entries, topology has " +
                          std::to_string(topology.cluster_count()) + " clusters");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0 || counts[i] > topology.clusters[i].core_count) {
      throw ValidationError("selection count for cluster " + std::to_string(i) +
                            " out of range");
    }
  }
  if (selection.empty()) throw ValidationError("empty core selection");
}

void canonicalize(CpuTopology& topology) {
  std::stable_sort(topology.clusters.begin(), topology.clusters.end(),
                   [](const Cluster& a, const Cluster& b) {
                     if (a.capacity != b.capacity) return a.capacity > b.capacity;
                     return a.max_freq_ghz > b.max_freq_ghz;
                   });
}

namespace {

template <typename T>
T required(const json& object, const std::string& key, const std::string& where) {
  if (!object.contains(key)) throw ParseError(where + key + ": missing");
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + key + ": wrong type");
  }
}

}  // namespace

CpuTopology parse_device_descriptor(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("descriptor: invalid JSON (") + e.what() + ")");
  }
  if (!doc.is_object()) throw ParseError("descriptor: expected a JSON object");

  CpuTopology topology;
  topology.device_name = required<std::string>(doc, "device_name", "");
  topology.selection_mode = doc.contains("selection_mode")
                                ? selection_mode_from_string(
                                      required<std::string>(doc, "selection_mode", ""))
                                : SelectionMode::affinity;
  if (!doc.contains("clusters") || !doc["clusters"].is_array()) {
    throw ParseError("clusters: missing or not an array");
  }

  std::vector<bool> has_capacity;
  for (std::size_t i = 0; i < doc["clusters"].size(); ++i) {
    const json& entry = doc["clusters"][i];
    const std::string where = "clusters[" + std::to_string(i) + "].";
    if (!entry.is_object()) throw ParseError(where.substr(0, where.size() - 1) + ": not an object");
    Cluster c;
    c.core_count = required<int>(entry, "cores", where);
    c.max_freq_ghz = required<double>(entry, "max_freq_ghz", where);
    c.core_type = core_type_from_string(required<std::string>(entry, "core_type", where));
    const bool explicit_capacity = entry.contains("capacity") && !entry["capacity"].is_null();
    if (explicit_capacity) c.capacity = required<double>(entry, "capacity", where);
    has_capacity.push_back(explicit_capacity);
    topology.clusters.push_back(c);
  }
  if (topology.clusters.empty()) throw ValidationError("descriptor has zero clusters");

  double fmax = 0.0;
  for (const auto& c : topology.clusters) fmax = std::max(fmax, c.max_freq_ghz);
  for (std::size_t i = 0; i < topology.clusters.size(); ++i) {
    if (!has_capacity[i] && fmax > 0.0) {
      topology.clusters[i].capacity = topology.clusters[i].max_freq_ghz / fmax;
    }
  }
  canonicalize(topology);
  validate(topology);
  return topology;
}

CpuTopology load_device_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open descriptor " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_device_descriptor(buffer.str());
}

std::string serialize_device_descriptor(const CpuTopology& topology) {
  json doc;
  doc["device_name"] = topology.device_name;
  doc["selection_mode"] = std::string(to_string(topology.selection_mode));
  doc["clusters"] = json::array();
  for (const auto& c : topology.clusters) {
    doc["clusters"].push_back({{"cores", c.core_count},
                               {"max_freq_ghz", c.max_freq_ghz},
                               {"capacity", c.capacity},
                               {"core_type", std::string(to_string(c.core_type))}});
  }
  return doc.dump(2);
}

namespace {

std::optional<std::string> read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<int> parse_id_list(const std::string& text, const std::string& where) {
  std::vector<int> ids;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    // Kernel files may also use ranges such as "4-7".
    auto dash = token.find('-');
    if (dash != std::string::npos) {
      int lo = parse_int(std::string_view(token).substr(0, dash), where);
      int hi = parse_int(std::string_view(token).substr(dash + 1), where);
      for (int id = lo; id <= hi; ++id) ids.push_back(id);
    } else {
      ids.push_back(parse_int(token, where));
    }
  }
  return ids;
}

}  // namespace

CpuTopology parse_sysfs_snapshot(const std::filesystem::path& root, std::string device_name) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ParseError("snapshot root is not a directory: " + root.string());

  std::set<int> cpus;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.size() < 4 || name.rfind("cpu", 0) != 0) continue;
    const std::string suffix = name.substr(3);
    if (!std::all_of(suffix.begin(), suffix.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) continue;
    cpus.insert(std::stoi(suffix));
  }
  if (cpus.empty()) throw ValidationError("snapshot contains no cpu<N> directories");

  struct CoreInfo {
    double freq_ghz;
    std::optional<double> capacity;
    std::vector<int> related;
  };
  std::map<int, CoreInfo> cores;
  for (int cpu : cpus) {
    const fs::path dir = root / ("cpu" + std::to_string(cpu));
    const auto freq_text = read_text(dir / "cpufreq" / "cpuinfo_max_freq");
    if (!freq_text) throw ParseError("cpu" + std::to_string(cpu) + "/cpufreq/cpuinfo_max_freq: missing");
    const double khz = std::stod(*freq_text);
    if (!(khz > 0)) throw ValidationError("cpu" + std::to_string(cpu) + ": max freq must be > 0");

    CoreInfo info{khz / 1e6, std::nullopt, {cpu}};
    if (auto cap = read_text(dir / "cpu_capacity")) info.capacity = std::stod(*cap);
    if (auto rel = read_text(dir / "cpufreq" / "related_cpus")) {
      info.related = parse_id_list(*rel, "cpu" + std::to_string(cpu) + "/cpufreq/related_cpus");
      std::sort(info.related.begin(), info.related.end());
    }
    cores.emplace(cpu, std::move(info));
  }

  // Every cpu must belong to exactly one group, and every member of a group
  // must agree on the group.
  std::map<std::vector<int>, std::vector<int>> groups;
  for (const auto& [cpu, info] : cores) {
    for (int member : info.related) {
      if (!cores.count(member)) {
        throw ValidationError("cpu" + std::to_string(cpu) + " lists unknown cpu" + std::to_string(member));
      }
    }
  }
  for (const auto& [cpu, info] : cores) {
    for (int member : info.related) {
      if (cores.at(member).related != info.related) {
        throw ValidationError("inconsistent related_cpus between cpu" + std::to_string(cpu) +
                              " and cpu" + std::to_string(member));
      }
    }
    if (std::find(info.related.begin(), info.related.end(), cpu) == info.related.end()) {
      throw ValidationError("cpu" + std::to_string(cpu) + " missing from its own related_cpus");
    }
    groups[info.related].push_back(cpu);
  }

  // Capacities are stored relative to the biggest core. A snapshot without
  // cpu_capacity on every core falls back to frequency ratios.
  double fmax = 0.0, cap_max = 0.0;
  bool all_capacities = true;
  for (const auto& [cpu, info] : cores) {
    fmax = std::max(fmax, info.freq_ghz);
    if (info.capacity) cap_max = std::max(cap_max, *info.capacity);
    else all_capacities = false;
  }
  if (!(cap_max > 0)) all_capacities = false;

  CpuTopology topology;
  topology.device_name = std::move(device_name);
  for (const auto& [members, unused] : groups) {
    const CoreInfo& first = cores.at(members.front());
    Cluster c;
    c.core_count = static_cast<int>(members.size());
    c.max_freq_ghz = first.freq_ghz;
    c.capacity = all_capacities ? *first.capacity / cap_max : first.freq_ghz / fmax;
    topology.clusters.push_back(c);
  }
  canonicalize(topology);

  const int n = topology.cluster_count();
  for (int i = 0; i < n; ++i) {
    auto& c = topology.clusters[static_cast<std::size_t>(i)];
    // Two-cluster parts pair big cores with mid cores; a dedicated little
    // cluster only shows up from three clusters on.
    if (i == 0) c.core_type = CoreType::prime;
    else if (i == n - 1 && n >= 3) c.core_type = CoreType::efficient;
    else c.core_type = CoreType::performance;
  }
  validate(topology);
  return topology;
}

std::vector<CoreSelection> enumerate_selections(const CpuTopology& topology) {
  std::vector<CoreSelection> out;
  if (topology.selection_mode == SelectionMode::thread_count) {
    for (int t = 1; t <= topology.total_cores(); ++t) out.push_back(CoreSelection::threads(t));
    return out;
  }
  const int n = topology.cluster_count();
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  // Odometer over the per-cluster ranges; the last cluster varies fastest.
  while (true) {
    int i = n - 1;
    while (i >= 0 && counts[static_cast<std::size_t>(i)] == topology.clusters[static_cast<std::size_t>(i)].core_count) {
      counts[static_cast<std::size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
    ++counts[static_cast<std::size_t>(i)];
    out.push_back(CoreSelection::affinity(counts));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double capacity_factor(const CoreSelection& selection, const CpuTopology& topology) {
  if (selection.mode() == SelectionMode::thread_count) return 1.0;
  const auto& counts = selection.counts();
  for (std::size_t i = 0; i < counts.size() && i < topology.clusters.size(); ++i) {
    if (counts[i] > 0) return topology.clusters[i].capacity / topology.clusters.front().capacity;
  }
  throw ValidationError("capacity factor of an empty selection");
}

std::vector<int> occupied_counts(const CoreSelection& selection, const CpuTopology& topology) {
  if (selection.mode() == SelectionMode::affinity) return selection.counts();
  std::vector<int> counts(topology.clusters.size(), 0);
  int remaining = selection.thread_count();
  for (std::size_t i = 0; i < counts.size() && remaining > 0; ++i) {
    counts[i] = std::min(remaining, topology.clusters[i].core_count);
    remaining -= counts[i];
  }
  return counts;
}

}  // namespace aecs
