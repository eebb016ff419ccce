#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "aecs/search.hpp"
#include "aecs/simdevice.hpp"

namespace aecs {

/// Binomial proportion with a 95% Wilson interval.
struct RateEstimate {
  int successes = 0;
  int trials = 0;
  double rate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

RateEstimate wilson_interval(int successes, int trials, double z = 1.959963984540054);

/// Fraction of independent noisy searches whose choice equals the device's
/// noiseless constrained optimum. Trials run on `threads` workers (0 = one
/// per hardware thread); the result does not depend on the worker count.
RateEstimate optimality_rate(const SimulatedDevice& device, const SearchConfig& config,
                             const HeuristicParams& params, int trials, std::uint64_t seed,
                             unsigned threads = 0);

struct TheoremReport {
  double alpha = 0.0;
  int trials = 0;
  // Variance reduction.
  double empirical_variance_ratio = 0.0;
  double predicted_ratio = 0.0;
  // Ordering accuracy.
  double ordering_accuracy_blend = 0.0;
  double ordering_accuracy_raw = 0.0;
  int pairs = 0;
  int excluded_pairs = 0;
  double accuracy_gap_stderr = 0.0;  ///< std. error of the paired blend - raw gap
};

/// Samples the blended objective of one selection with the time channel held
/// at its noiseless value and energy counters unquantized, then compares its
/// variance with that of the raw energy.
TheoremReport verify_variance_reduction(const SimulatedDevice& device, const CoreSelection& selection,
                                        const HeuristicParams& params, double alpha, int trials,
                                        std::uint64_t seed);

struct OrderingOptions {
  int pair_count = 1000;
  int trials_per_pair = 5;
  double min_relative_gap = 0.0;  ///< only pairs whose true energies differ by at least this
};

/// For random pairs with E(I) > E(J) whose heuristic ordering agrees (pairs
/// that disagree are excluded and counted), estimates how often one noisy
/// measurement of each ranks them correctly under the blend and under raw
/// energy.
TheoremReport verify_ordering_accuracy(const SimulatedDevice& device, const HeuristicParams& params,
                                       double alpha, const OrderingOptions& options,
                                       std::uint64_t seed);

struct AblationRow {
  std::string device;
  int exhaustive_space = 0;
  int aecs_space = 0;
  int exhaustive_measurements = 0;
  int aecs_measurements = 0;
  RateEstimate with_heuristic;
  RateEstimate without_heuristic;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  int trials = 0;
  std::uint64_t seed = 0;
  double sigma = 0.0;
};

/// Space sizes and measurement budgets come from a noiseless run; rates come
/// from `trials` noisy searches with the devices' own noise settings.
AblationReport run_ablation(const std::vector<SimulatedDevice>& devices, const SearchConfig& config,
                            const HeuristicParams& params, int trials, std::uint64_t seed,
                            unsigned threads = 0);

std::string ablation_to_csv(const AblationReport& report);
std::string ablation_to_markdown(const AblationReport& report);
nlohmann::json ablation_to_json(const AblationReport& report);
nlohmann::json theorem_to_json(const TheoremReport& report);

}  // namespace aecs
