#include "aecs/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

namespace aecs {

using nlohmann::json;

RateEstimate wilson_interval(int successes, int trials, double z) {
  RateEstimate est;
  est.successes = successes;
  est.trials = trials;
  if (trials <= 0) return est;
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  est.rate = p;
  est.lower = std::max(0.0, centre - half);
  est.upper = std::min(1.0, centre + half);
  return est;
}

namespace {

// Runs body(i) for i in [0, count) on a small worker pool.
template <typename Body>
void parallel_for(int count, unsigned threads, Body body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(count, 1)));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

RateEstimate optimality_rate(const SimulatedDevice& device, const SearchConfig& config,
                             const HeuristicParams& params, int trials, std::uint64_t seed,
                             unsigned threads) {
  if (trials < 1) throw ValidationError("optimality_rate: trials must be >= 1");
  const CoreSelection optimum = true_optimum(device, config.epsilon);
  std::vector<char> hit(static_cast<std::size_t>(trials), 0);
  parallel_for(trials, threads, [&](int trial) {
    SimulatedProvider provider(device, RngStream(seed, static_cast<std::uint64_t>(trial)));
    const auto result = aecs_search(provider, device.topology, config, params);
    hit[static_cast<std::size_t>(trial)] = result.chosen == optimum;
  });
  const int successes = static_cast<int>(std::count(hit.begin(), hit.end(), 1));
  return wilson_interval(successes, trials);
}

namespace {

double variance(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

}  // namespace

TheoremReport verify_variance_reduction(const SimulatedDevice& device, const CoreSelection& selection,
                                        const HeuristicParams& params, double alpha, int trials,
                                        std::uint64_t seed) {
  if (trials < 100) throw ValidationError("verify_variance_reduction: trials must be >= 100");
  if (!(alpha >= 0 && alpha <= 1)) throw ValidationError("alpha must be in [0,1]");
  constexpr int kTokens = 50;
  const double h = power_heuristic(selection, device.topology, params);
  const double speed = true_speed(device, selection);
  ObjectiveScale scale;
  scale.energy = true_power(device, selection) * kTokens / speed;
  scale.heuristic_time = h * kTokens / speed;

  RngStream stream(seed);
  const MeasureOptions separable{false, false};
  std::vector<double> raw, blended;
  raw.reserve(static_cast<std::size_t>(trials));
  blended.reserve(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    const auto sample = measure(device, selection, kTokens, stream, separable);
    raw.push_back(sample.run_energy() / scale.energy);
    blended.push_back(heuristic_energy(sample, selection, device.topology, params, alpha, scale));
  }

  TheoremReport report;
  report.alpha = alpha;
  report.trials = trials;
  report.predicted_ratio = (1 - alpha) * (1 - alpha);
  const double raw_var = variance(raw);
  report.empirical_variance_ratio = raw_var > 0 ? variance(blended) / raw_var : 0.0;
  return report;
}

TheoremReport verify_ordering_accuracy(const SimulatedDevice& device, const HeuristicParams& params,
                                       double alpha, const OrderingOptions& options,
                                       std::uint64_t seed) {
  if (options.pair_count < 1 || options.trials_per_pair < 1) {
    throw ValidationError("verify_ordering_accuracy: pair_count and trials_per_pair must be >= 1");
  }
  constexpr int kTokens = 50;
  const auto space = enumerate_selections(device.topology);
  if (space.size() < 2) throw ValidationError("verify_ordering_accuracy: need at least two selections");

  struct Truth {
    double energy;     // mJ per token
    double heuristic;  // h * t for one run
  };
  std::vector<Truth> truth;
  for (const auto& s : space) {
    truth.push_back({true_energy_per_token(device, s),
                     power_heuristic(s, device.topology, params) * kTokens / true_speed(device, s)});
  }
  // Both blend terms are normalized by the same fixed reference so that a
  // pair is compared on one scale.
  const auto reference = std::max_element(space.begin(), space.end(), [&](const auto& a, const auto& b) {
    return true_speed(device, a) < true_speed(device, b);
  });
  const auto ref = static_cast<std::size_t>(reference - space.begin());
  ObjectiveScale scale;
  scale.energy = truth[ref].energy * kTokens / 1000.0;
  scale.heuristic_time = truth[ref].heuristic;

  RngStream stream(seed);
  TheoremReport report;
  report.alpha = alpha;
  long long blend_hits = 0, raw_hits = 0, comparisons = 0;
  double gap_sum = 0.0, gap_sq = 0.0;
  const int max_draws = options.pair_count * 1000;
  int draws = 0;
  while (report.pairs < options.pair_count && draws++ < max_draws) {
    auto i = static_cast<std::size_t>(stream.below(space.size()));
    auto j = static_cast<std::size_t>(stream.below(space.size()));
    if (i == j || truth[i].energy == truth[j].energy) continue;
    if (truth[i].energy < truth[j].energy) std::swap(i, j);  // E(I) > E(J)
    if ((truth[i].energy - truth[j].energy) / truth[j].energy < options.min_relative_gap) continue;
    if (!(truth[i].heuristic > truth[j].heuristic)) {
      ++report.excluded_pairs;
      continue;
    }
    ++report.pairs;
    for (int t = 0; t < options.trials_per_pair; ++t) {
      const auto si = measure(device, space[i], kTokens, stream);
      const auto sj = measure(device, space[j], kTokens, stream);
      const bool raw = si.energy > sj.energy;
      const bool blend =
          heuristic_energy(si, space[i], device.topology, params, alpha, scale) >
          heuristic_energy(sj, space[j], device.topology, params, alpha, scale);
      raw_hits += raw;
      blend_hits += blend;
      const double gap = static_cast<double>(blend) - static_cast<double>(raw);
      gap_sum += gap;
      gap_sq += gap * gap;
      ++comparisons;
    }
  }
  report.trials = static_cast<int>(comparisons);
  if (comparisons > 0) {
    const double n = static_cast<double>(comparisons);
    report.ordering_accuracy_blend = blend_hits / n;
    report.ordering_accuracy_raw = raw_hits / n;
    const double mean_gap = gap_sum / n;
    const double var_gap = n > 1 ? (gap_sq - n * mean_gap * mean_gap) / (n - 1) : 0.0;
    report.accuracy_gap_stderr = std::sqrt(std::max(0.0, var_gap) / n);
  }
  return report;
}

AblationReport run_ablation(const std::vector<SimulatedDevice>& devices, const SearchConfig& config,
                            const HeuristicParams& params, int trials, std::uint64_t seed,
                            unsigned threads) {
  if (devices.empty()) throw ValidationError("run_ablation: no devices");
  AblationReport report;
  report.trials = trials;
  report.seed = seed;
  report.sigma = devices.front().noise_rel_sigma;

  HeuristicParams without = params;
  without.alpha = 0.0;
  without.thread_alpha = 0.0;

  for (std::size_t d = 0; d < devices.size(); ++d) {
    const SimulatedDevice& device = devices[d];
    AblationRow row;
    row.device = device.name;
    row.exhaustive_space = static_cast<int>(enumerate_selections(device.topology).size());
    row.exhaustive_measurements = row.exhaustive_space * config.repeats;

    const SimulatedDevice quiet = device.noiseless();
    SimulatedProvider provider(quiet, RngStream(seed));
    const auto clean = aecs_search(provider, quiet.topology, config, params);
    row.aecs_space = static_cast<int>(clean.candidates.size());
    row.aecs_measurements = clean.measurement_count;

    // Both arms share per-trial streams so the comparison is paired.
    const std::uint64_t device_seed = seed + (static_cast<std::uint64_t>(d) << 40);
    row.with_heuristic = optimality_rate(device, config, params, trials, device_seed, threads);
    row.without_heuristic = optimality_rate(device, config, without, trials, device_seed, threads);
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string percent(double rate) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << 100.0 * rate << "%";
  return out.str();
}

std::string fixed(double value, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << value;
  return out.str();
}

}  // namespace

std::string ablation_to_csv(const AblationReport& report) {
  std::ostringstream out;
  out << "device,exhaustive_space,aecs_space,exhaustive_measurements,aecs_measurements,"
         "rate_with_heuristic,rate_with_lower,rate_with_upper,"
         "rate_without_heuristic,rate_without_lower,rate_without_upper,trials,seed\n";
  for (const auto& r : report.rows) {
    out << r.device << ',' << r.exhaustive_space << ',' << r.aecs_space << ','
        << r.exhaustive_measurements << ',' << r.aecs_measurements << ','
        << fixed(r.with_heuristic.rate, 4) << ',' << fixed(r.with_heuristic.lower, 4) << ','
        << fixed(r.with_heuristic.upper, 4) << ',' << fixed(r.without_heuristic.rate, 4) << ','
        << fixed(r.without_heuristic.lower, 4) << ',' << fixed(r.without_heuristic.upper, 4) << ','
        << report.trials << ',' << report.seed << '\n';
  }
  return out.str();
}

std::string ablation_to_markdown(const AblationReport& report) {
  int min_space = 0, max_space = 0, min_tree = 0, max_tree = 0;
  int min_ex = 0, max_ex = 0, min_ae = 0, max_ae = 0;
  double min_with = 1, max_with = 0, min_without = 1, max_without = 0;
  bool first = true;
  for (const auto& r : report.rows) {
    auto widen = [&](int& lo, int& hi, int v) {
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
    };
    widen(min_space, max_space, r.exhaustive_space);
    widen(min_tree, max_tree, r.aecs_space);
    widen(min_ex, max_ex, r.exhaustive_measurements);
    widen(min_ae, max_ae, r.aecs_measurements);
    min_with = std::min(min_with, r.with_heuristic.rate);
    max_with = std::max(max_with, r.with_heuristic.rate);
    min_without = std::min(min_without, r.without_heuristic.rate);
    max_without = std::max(max_without, r.without_heuristic.rate);
    first = false;
  }
  auto range = [](const std::string& lo, const std::string& hi) {
    return lo == hi ? lo : lo + "-" + hi;
  };

  std::ostringstream out;
  out << "| | exhaustive (optimal) | AECS w/o heuristic | AECS |\n";
  out << "|---|---|---|---|\n";
  out << "| search space | " << range(std::to_string(min_space), std::to_string(max_space)) << " | "
      << range(std::to_string(min_tree), std::to_string(max_tree)) << " | "
      << range(std::to_string(min_tree), std::to_string(max_tree)) << " |\n";
  out << "| measurements | " << range(std::to_string(min_ex), std::to_string(max_ex)) << " | "
      << range(std::to_string(min_ae), std::to_string(max_ae)) << " | "
      << range(std::to_string(min_ae), std::to_string(max_ae)) << " |\n";
  out << "| optimality rate | 100% | " << range(percent(min_without), percent(max_without)) << " | "
      << range(percent(min_with), percent(max_with)) << " |\n\n";

  out << "| device | exhaustive space | AECS space | exhaustive measurements | AECS measurements "
         "| rate w/o heuristic | rate with heuristic |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.rows) {
    out << "| " << r.device << " | " << r.exhaustive_space << " | " << r.aecs_space << " | "
        << r.exhaustive_measurements << " | " << r.aecs_measurements << " | "
        << percent(r.without_heuristic.rate) << " [" << percent(r.without_heuristic.lower) << ", "
        << percent(r.without_heuristic.upper) << "] | " << percent(r.with_heuristic.rate) << " ["
        << percent(r.with_heuristic.lower) << ", " << percent(r.with_heuristic.upper) << "] |\n";
  }
  out << "\ntrials per device: " << report.trials << ", seed: " << report.seed
      << ", sigma: " << report.sigma << "\n";
  return out.str();
}

namespace {

json rate_json(const RateEstimate& r) {
  return {{"rate", r.rate}, {"lower", r.lower}, {"upper", r.upper},
          {"successes", r.successes}, {"trials", r.trials}};
}

}  // namespace

json ablation_to_json(const AblationReport& report) {
  json doc;
  doc["trials"] = report.trials;
  doc["seed"] = report.seed;
  doc["sigma"] = report.sigma;
  doc["rows"] = json::array();
  for (const auto& r : report.rows) {
    doc["rows"].push_back({{"device", r.device},
                           {"exhaustive_space", r.exhaustive_space},
                           {"aecs_space", r.aecs_space},
                           {"exhaustive_measurements", r.exhaustive_measurements},
                           {"aecs_measurements", r.aecs_measurements},
                           {"with_heuristic", rate_json(r.with_heuristic)},
                           {"without_heuristic", rate_json(r.without_heuristic)}});
  }
  return doc;
}

json theorem_to_json(const TheoremReport& report) {
  return {{"alpha", report.alpha},
          {"trials", report.trials},
          {"empirical_variance_ratio", report.empirical_variance_ratio},
          {"predicted_ratio", report.predicted_ratio},
          {"ordering_accuracy_blend", report.ordering_accuracy_blend},
          {"ordering_accuracy_raw", report.ordering_accuracy_raw},
          {"pairs", report.pairs},
          {"excluded_pairs", report.excluded_pairs},
          {"accuracy_gap_stderr", report.accuracy_gap_stderr}};
}

}  // namespace aecs
