#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aecs/heuristic.hpp"
#include "aecs/rng.hpp"
#include "aecs/topology.hpp"

namespace aecs {

enum class GovernorKind {
  capacity_scaled,  ///< every cluster runs at f_max,i * s_I
  pinned_max,       ///< every cluster stays at f_max,i
};

std::string_view to_string(GovernorKind kind);
GovernorKind governor_from_string(std::string_view text);

/// Hidden power and speed behaviour of a simulated SoC.
struct GroundTruthModel {
  double static_power_w = 1.0;
  double kappa_prime = 0.1;  ///< W per GHz^gamma per core
  double kappa_performance = 0.08;
  double kappa_efficient = 0.04;
  double gamma = 2.3;
  double idle_factor = 0.7;
  double mem_ceiling_tps = 25.0;
  double throughput_half = 1.0;
  std::vector<double> ipc;  ///< one per cluster

  double kappa(CoreType type) const;
};

/// Values a preset was tuned to reproduce; informational, checked by tests.
struct Calibration {
  std::optional<CoreSelection> expected_optimum;
  std::optional<CoreSelection> expected_stage1;
  std::string note;
};

struct SimulatedDevice {
  std::string name;
  CpuTopology topology;
  GovernorKind governor = GovernorKind::capacity_scaled;
  GroundTruthModel truth;
  double noise_rel_sigma = 0.05;
  double counter_update_s = 0.25;
  double poll_interval_s = 0.05;
  std::uint64_t rng_seed = 0;
  Calibration calibration;

  /// Copy with different noise and counter settings.
  SimulatedDevice with_noise(double sigma, double counter_update) const;
  SimulatedDevice noiseless() const { return with_noise(0.0, 0.0); }
};

void validate(const SimulatedDevice& device);

/// Frequency in GHz that cluster `cluster_index` runs at under `selection`.
double true_frequency(const SimulatedDevice& device, int cluster_index,
                      const CoreSelection& selection);
/// Decode speed in tokens/s: S_mem * U / (U + U_half), U = sum |I_i| ipc_i f_i.
double true_speed(const SimulatedDevice& device, const CoreSelection& selection);
/// Watts: P_static + sum kappa_i (|I_i| + (|C_i| - |I_i|) b) f_i^gamma.
double true_power(const SimulatedDevice& device, const CoreSelection& selection);
/// Noiseless millijoules per token.
double true_energy_per_token(const SimulatedDevice& device, const CoreSelection& selection);

struct MeasureOptions {
  bool noisy_time = true;  ///< false holds elapsed at its noiseless value
  bool quantize = true;    ///< false skips the energy counter model
};

/// The unquantized quantities behind a sample, for accounting checks.
struct MeasurementDetail {
  MeasurementSample sample;
  double true_power_w = 0.0;
  double unquantized_energy_j = 0.0;
};

/// One profiled decode of `n_tokens` tokens. Draws exactly three values from
/// `stream` plus rejection retries.
MeasurementDetail measure_detailed(const SimulatedDevice& device, const CoreSelection& selection,
                                   int n_tokens, RngStream& stream,
                                   const MeasureOptions& options = {});

inline MeasurementSample measure(const SimulatedDevice& device, const CoreSelection& selection,
                                 int n_tokens, RngStream& stream,
                                 const MeasureOptions& options = {}) {
  return measure_detailed(device, selection, n_tokens, stream, options).sample;
}

/// Argmin of true energy over the full space subject to
/// speed(I) >= (1 - epsilon) max_J speed(J), evaluated without noise.
CoreSelection true_optimum(const SimulatedDevice& device, double epsilon);

/// Ground truth with kappa proportional to the heuristic factors, for devices
/// that come from a bare descriptor.
GroundTruthModel default_ground_truth(const CpuTopology& topology);

nlohmann::json device_to_json(const SimulatedDevice& device);
SimulatedDevice device_from_json(const nlohmann::json& doc);

std::vector<std::string> preset_names();
/// AECS_PRESET_DIR if set, otherwise the bundled data directory.
std::filesystem::path preset_directory();
SimulatedDevice load_preset(const std::string& name);
SimulatedDevice load_device_file(const std::filesystem::path& path);

}  // namespace aecs
