#pragma once

#include "aecs/topology.hpp"

namespace aecs {

/// Factors of the analytic power estimate. Defaults are the published tuning.
struct HeuristicParams {
  double a_efficient = 80.0;
  double a_performance = 160.0;
  double a_prime = 200.0;
  double b = 0.7;               ///< idle-core discount
  double static_power = 1000.0;
  double alpha = 0.5;           ///< blend weight in affinity mode
  double thread_alpha = 1.0;    ///< blend weight in thread mode

  double factor(CoreType type) const;
  /// Blend weight that applies to a topology's selection mode.
  double alpha_for(const CpuTopology& topology) const;
  bool operator==(const HeuristicParams&) const = default;
};

void validate(const HeuristicParams& params);

/// One profiled decode run.
struct MeasurementSample {
  double speed = 0.0;      ///< tokens per second
  double elapsed = 0.0;    ///< seconds for the whole run
  double energy = 0.0;     ///< millijoules per token
  double avg_power = 0.0;  ///< watts
  int tokens = 0;

  /// Energy of the whole run in joules.
  double run_energy() const { return energy * tokens / 1000.0; }
};

/// Frequency the capacity-scaled governor assigns to cluster `cluster_index`.
double assigned_frequency(int cluster_index, const CoreSelection& selection,
                          const CpuTopology& topology);

/// h(I) = sum_i a_i (|I_i| + (|C_i| - |I_i|) b) (f_max,i * s_I)^2 + Ps
///
/// Thread-mode selections are evaluated on their big-first packing with
/// s_I = 1.
double power_heuristic(const CoreSelection& selection, const CpuTopology& topology,
                       const HeuristicParams& params);

/// Divisors applied to the two blend terms before mixing. The stage-2 search
/// uses the tree root's values so both terms are near 1.
struct ObjectiveScale {
  double energy = 1.0;
  double heuristic_time = 1.0;
};

/// E_h = (1 - alpha) E / scale.energy + alpha h t / scale.heuristic_time, with E
/// the run energy in joules and t the run time in seconds.
double heuristic_energy(const MeasurementSample& sample, const CoreSelection& selection,
                        const CpuTopology& topology, const HeuristicParams& params,
                        double alpha, const ObjectiveScale& scale = {});

/// Same blend with the alpha that matches the topology's selection mode.
double heuristic_energy(const MeasurementSample& sample, const CoreSelection& selection,
                        const CpuTopology& topology, const HeuristicParams& params,
                        const ObjectiveScale& scale = {});

}  // namespace aecs
