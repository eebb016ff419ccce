// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aecs/cli.hpp"
#include "aecs/experiments.hpp"

using namespace aecs;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

CoreSelection A(std::vector<int> counts) { return CoreSelection::affinity(std::move(counts)); }

const std::vector<std::string> kAndroid = {"mate40pro", "v30pro", "galaxya56", "meizu21", "xiaomi15pro"};

SimulatedDevice quiet(const std::string& name) { return load_preset(name).noiseless(); }

SearchResult noiseless_aecs(const SimulatedDevice& d) {
  SimulatedProvider p(d, RngStream(1));
  return aecs_search(p, d.topology, SearchConfig{}, HeuristicParams{});
}

Outcome oracle_optimality() {
  int matches = 0;
  std::string misses;
  for (const auto& name : preset_names()) {
    const auto d = quiet(name);
    SimulatedProvider ep(d, RngStream(1));
    const auto oracle = exhaustive_search(ep, d.topology, SearchConfig{}, HeuristicParams{});
    const auto aecs = noiseless_aecs(d);
    if (aecs.chosen == oracle.chosen) ++matches;
    else misses += " " + name + ":" + aecs.chosen.to_string() + "!=" + oracle.chosen.to_string();
  }
  return {matches == 7, std::to_string(matches) + "/7 match" + misses};
}

Outcome tuned_selections() {
  const std::vector<std::pair<std::string, CoreSelection>> table = {
      {"mate40pro", A({0, 2, 0})},   {"v30pro", A({0, 2, 0})},
      {"galaxya56", A({0, 2, 0})},   {"meizu21", A({1, 1, 0, 0})},
      {"xiaomi15pro", A({2, 0})},    {"iphone12", CoreSelection::threads(1)},
      {"iphone15", CoreSelection::threads(2)},
  };
  int matches = 0;
  std::string got;
  for (const auto& [name, expected] : table) {
    const auto chosen = noiseless_aecs(quiet(name)).chosen;
    matches += chosen == expected;
    got += " " + name + "=" + chosen.to_string();
  }
  return {matches == 7, std::to_string(matches) + "/7;" + got};
}

Outcome pruning() {
  int lo = 1 << 30, hi = 0;
  bool trees_ok = true;
  std::string sizes;
  for (const auto& name : kAndroid) {
    const auto d = quiet(name);
    const int space = static_cast<int>(enumerate_selections(d.topology).size());
    lo = std::min(lo, space);
    hi = std::max(hi, space);
    const int tree = static_cast<int>(noiseless_aecs(d).candidates.size());
    trees_ok &= tree >= 4 && tree <= 9;
    sizes += " " + name + "=" + std::to_string(space) + "/" + std::to_string(tree);
  }
  return {lo == 20 && hi == 71 && trees_ok,
          "exhaustive " + std::to_string(lo) + "-" + std::to_string(hi) + ", space/tree:" + sizes};
}

Outcome mate_tree() {
  const auto d = quiet("mate40pro");
  const auto tree = grow_candidate_tree(A({1, 2, 0}), d.topology, SearchConfig{});
  std::set<CoreSelection> nodes;
  std::string listing;
  for (const auto& n : tree.nodes) {
    nodes.insert(n.selection);
    listing += " " + n.selection.to_string();
  }
  const std::set<CoreSelection> expected = {A({1, 2, 0}), A({1, 1, 0}), A({1, 0, 0}), A({0, 3, 0}), A({0, 2, 0})};
  return {tree.size() == 5 && nodes == expected, std::to_string(tree.size()) + " nodes:" + listing};
}

Outcome stage1_trajectory() {
  const auto r = noiseless_aecs(quiet("mate40pro"));
  std::string path;
  for (const auto& s : r.stage1_steps) path += " " + s.selection.to_string() + (s.accepted ? "" : "(stop)");
  const bool ok = r.stage1_steps.size() == 4 && r.stage1_steps[0].selection == A({1, 0, 0}) &&
                  r.stage1_steps[1].selection == A({1, 1, 0}) && r.stage1_steps[1].accepted &&
                  r.stage1_steps[2].selection == A({1, 2, 0}) && r.stage1_steps[2].accepted &&
                  !r.stage1_steps[3].accepted && r.stage1 == A({1, 2, 0});
  return {ok, "visits" + path};
}

Outcome ablation() {
  std::vector<SimulatedDevice> devices;
  for (const auto& name : preset_names()) {
    auto d = load_preset(name);
    d.noise_rel_sigma = 0.05;
    devices.push_back(d);
  }
  const auto report = run_ablation(devices, SearchConfig{}, HeuristicParams{}, 200, 42);
  bool all_high = true;
  int gains = 0;
  bool band = false;
  std::ostringstream rates;
  for (const auto& row : report.rows) {
    const bool android = std::find(kAndroid.begin(), kAndroid.end(), row.device) != kAndroid.end();
    all_high &= row.with_heuristic.rate >= 0.95;
    if (android && row.with_heuristic.rate > row.without_heuristic.rate) ++gains;
    band |= row.without_heuristic.rate >= 0.55 && row.without_heuristic.rate <= 0.95;
    char buf[96];
    std::snprintf(buf, sizeof buf, " %s=%.3f/%.3f", row.device.c_str(), row.with_heuristic.rate,
                  row.without_heuristic.rate);
    rates << buf;
  }
  return {all_high && gains >= 3 && band,
          "with/without:" + rates.str() + "; android gains " + std::to_string(gains) + "/5"};
}

Outcome variance() {
  const auto d = load_preset("mate40pro");
  const auto sel = true_optimum(d, 0.08);
  const HeuristicParams params;
  const double r0 = verify_variance_reduction(d, sel, params, 0.0, 10000, 2024).empirical_variance_ratio;
  const double r1 = verify_variance_reduction(d, sel, params, 1.0, 10000, 2024).empirical_variance_ratio;
  const double rh = verify_variance_reduction(d, sel, params, 0.5, 10000, 2024).empirical_variance_ratio;
  char buf[128];
  std::snprintf(buf, sizeof buf, "ratio(0.5)=%.4f ratio(0)=%.6f ratio(1)=%.6f", rh, r0, r1);
  return {std::abs(rh - 0.25) <= 0.03 && r0 == 1.0 && r1 == 0.0, buf};
}

Outcome ordering() {
  const auto d = load_preset("mate40pro");
  OrderingOptions options;
  options.pair_count = 5000;
  options.trials_per_pair = 1;
  const auto r = verify_ordering_accuracy(d, HeuristicParams{}, 0.5, options, 2024);
  // One-sided 95% bound on the paired gap.
  const double gap = r.ordering_accuracy_blend - r.ordering_accuracy_raw;
  const double lower = gap - 1.6448536 * r.accuracy_gap_stderr;
  char buf[160];
  std::snprintf(buf, sizeof buf, "blend %.4f raw %.4f over %d pairs; gap lower bound %.4f", r.ordering_accuracy_blend,
                r.ordering_accuracy_raw, r.pairs, lower);
  return {r.pairs >= 5000 && lower >= 0.0, buf};
}

Outcome constraint_safety() {
  int searches = 0, violations = 0;
  const SearchConfig config;
  for (const auto& name : preset_names()) {
    const auto d = load_preset(name);
    for (int k = 0; k < 1000; ++k) {
      SimulatedProvider p(d, RngStream(9000, static_cast<std::uint64_t>(searches)));
      const auto r = aecs_search(p, d.topology, config, HeuristicParams{});
      if (r.chosen_record().mean.speed < r.stage1_speed * 0.92) ++violations;
      ++searches;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(searches) + " searches"};
}

Outcome measurement_bounds() {
  int calls = 0, outside = 0;
  double worst = 0.0;
  for (const auto& name : preset_names()) {
    const auto d = load_preset(name);
    const auto space = enumerate_selections(d.topology);
    RngStream stream(31337, std::hash<std::string>{}(name));
    for (int k = 0; k < 1500 && calls < 10000; ++k, ++calls) {
      const auto& sel = space[stream.below(space.size())];
      const auto m = measure_detailed(d, sel, 50, stream);
      const double truth = m.true_power_w * m.sample.elapsed;
      const double bound = m.true_power_w * 0.25 +
                           3 * d.noise_rel_sigma * m.true_power_w * (m.sample.elapsed + d.counter_update_s);
      const double err = std::abs(m.sample.run_energy() - truth);
      worst = std::max(worst, err / bound);
      outside += err > bound;
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d of %d outside; worst error %.3f of the bound", outside, calls, worst);
  return {outside == 0 && calls == 10000, buf};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "aecs_acceptance_echo";
  fs::remove_all(dir);
  const std::vector<std::vector<std::string>> commands = {
      {"search", "--preset", "mate40pro", "--seed", "7"},
      {"oracle", "--preset", "v30pro", "--seed", "8", "--repeats", "10"},
      {"tree", "--preset", "mate40pro", "--root", "1,2,0"},
  };
  int identical = 0;
  std::string detail;
  for (const auto& base : commands) {
    std::ostringstream sink;
    auto args = base;
    const auto a = dir / (base[0] + "_a"), b = dir / (base[0] + "_b");
    args.insert(args.end(), {"--out", a.string()});
    const int first = cli::run_command(args, sink, sink);
    const int second = cli::run_command({base[0], "--config", (a / "config.json").string(), "--out", b.string()}, sink, sink);
    bool same = first == 0 && second == 0 && slurp(a / "summary.json") == slurp(b / "summary.json") &&
                !slurp(a / "summary.json").empty();
    if (fs::exists(a / "trace.jsonl")) same &= slurp(a / "trace.jsonl") == slurp(b / "trace.jsonl");
    identical += same;
    detail += " " + base[0] + (same ? "=identical" : "=DIFFERENT");
  }
  fs::remove_all(dir);
  return {identical == 3, std::to_string(identical) + "/3:" + detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "oracle optimality", 10, oracle_optimality},
      {2, "tuned-selection reproduction", 10, tuned_selections},
      {3, "search-space pruning", 1, pruning},
      {4, "candidate tree from (1,2,0)", 1, mate_tree},
      {5, "stage-1 trajectory", 1, stage1_trajectory},
      {6, "robustness ablation", 300, ablation},
      {7, "variance reduction", 30, variance},
      {8, "ordering accuracy", 60, ordering},
      {9, "constraint safety", 300, constraint_safety},
      {10, "measurement-model bounds", 30, measurement_bounds},
      {11, "determinism from echoed config", 60, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %2d %s: %s [%.2fs of %.0fs]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds,
                c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
