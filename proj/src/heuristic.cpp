#include "aecs/heuristic.hpp"

#include <string>

namespace aecs {

double HeuristicParams::factor(CoreType type) const {
  switch (type) {
    case CoreType::prime: return a_prime;
    case CoreType::performance: return a_performance;
    case CoreType::efficient: return a_efficient;
  }
  return a_prime;
}

double HeuristicParams::alpha_for(const CpuTopology& topology) const {
  return topology.selection_mode == SelectionMode::thread_count ? thread_alpha : alpha;
}

void validate(const HeuristicParams& p) {
  if (!(p.a_efficient > 0 && p.a_performance > 0 && p.a_prime > 0)) {
    throw ValidationError("heuristic: a_* factors must be positive");
  }
  if (!(p.a_efficient <= p.a_performance && p.a_performance <= p.a_prime)) {
    throw ValidationError("heuristic: need a_efficient <= a_performance <= a_prime");
  }
  if (!(p.b > 0 && p.b <= 1)) throw ValidationError("heuristic: b must be in (0,1]");
  if (!(p.static_power >= 0)) throw ValidationError("heuristic: static_power must be >= 0");
  if (!(p.alpha >= 0 && p.alpha <= 1)) throw ValidationError("heuristic: alpha must be in [0,1]");
  if (!(p.thread_alpha >= 0 && p.thread_alpha <= 1)) {
    throw ValidationError("heuristic: thread_alpha must be in [0,1]");
  }
}

double assigned_frequency(int cluster_index, const CoreSelection& selection,
                          const CpuTopology& topology) {
  if (cluster_index < 0 || cluster_index >= topology.cluster_count()) {
    throw ValidationError("cluster index " + std::to_string(cluster_index) + " out of range");
  }
  return topology.clusters[static_cast<std::size_t>(cluster_index)].max_freq_ghz *
         capacity_factor(selection, topology);
}

double power_heuristic(const CoreSelection& selection, const CpuTopology& topology,
                       const HeuristicParams& params) {
  const auto counts = occupied_counts(selection, topology);
  const double scale = capacity_factor(selection, topology);
  double h = params.static_power;
  for (std::size_t i = 0; i < topology.clusters.size(); ++i) {
    const Cluster& c = topology.clusters[i];
    const double f = c.max_freq_ghz * scale;
    const double active = counts[i] + (c.core_count - counts[i]) * params.b;
    h += params.factor(c.core_type) * active * f * f;
  }
  return h;
}

double heuristic_energy(const MeasurementSample& sample, const CoreSelection& selection,
                        const CpuTopology& topology, const HeuristicParams& params,
                        double alpha, const ObjectiveScale& scale) {
  const double measured = sample.run_energy() / scale.energy;
  if (alpha == 0.0) return measured;
  const double estimated =
      power_heuristic(selection, topology, params) * sample.elapsed / scale.heuristic_time;
  if (alpha == 1.0) return estimated;
  return (1.0 - alpha) * measured + alpha * estimated;
}

double heuristic_energy(const MeasurementSample& sample, const CoreSelection& selection,
                        const CpuTopology& topology, const HeuristicParams& params,
                        const ObjectiveScale& scale) {
  return heuristic_energy(sample, selection, topology, params, params.alpha_for(topology), scale);
}

}  // namespace aecs
