#pragma once

#include <string>
#include <vector>

#include "aecs/heuristic.hpp"
#include "aecs/rng.hpp"
#include "aecs/simdevice.hpp"
#include "aecs/topology.hpp"

namespace aecs {

/// Source of decode measurements. Implementations are stateful (a device
/// being driven, or a random stream), so one provider serves one search.
class MeasurementProvider {
 public:
  virtual ~MeasurementProvider() = default;
  virtual MeasurementSample measure(const CoreSelection& selection, int n_tokens) = 0;
};

class SimulatedProvider : public MeasurementProvider {
 public:
  SimulatedProvider(const SimulatedDevice& device, RngStream stream)
      : device_(device), stream_(std::move(stream)) {}

  MeasurementSample measure(const CoreSelection& selection, int n_tokens) override {
    return aecs::measure(device_, selection, n_tokens, stream_);
  }

 private:
  const SimulatedDevice& device_;
  RngStream stream_;
};

enum class Aggregation { mean, median };

struct SearchConfig {
  double epsilon = 0.08;
  int tokens_per_measurement = 50;
  int repeats = 50;
  double stage1_min_speedup = 0.02;
  bool include_efficient = false;
  int max_tree_depth = 2;
  Aggregation aggregation = Aggregation::mean;

  bool operator==(const SearchConfig&) const = default;
};

void validate(const SearchConfig& config);

enum class Transformation {
  root,
  remove_one,     ///< a) drop the smallest selected core
  remove_two,     ///< b) drop the two smallest selected cores
  shift_core,     ///< c) move one core from the biggest selected cluster down
  shift_cluster,  ///< d) move a whole selected cluster to a smaller idle one
  reduce_thread,  ///< thread mode: one thread fewer
};

std::string_view to_string(Transformation tag);

struct TreeNode {
  CoreSelection selection;
  int depth = 0;
  int parent = -1;
  Transformation tag = Transformation::root;
};

/// Nodes in breadth-first order; nodes[0] is the root.
struct CandidateTree {
  std::vector<TreeNode> nodes;

  const CoreSelection& root() const { return nodes.front().selection; }
  std::size_t size() const { return nodes.size(); }
  bool contains(const CoreSelection& selection) const;
};

/// Every selection one `tag` step away from `parent`. Empty when the
/// transformation does not apply.
std::vector<CoreSelection> apply_transformation(const CoreSelection& parent, Transformation tag,
                                                const CpuTopology& topology,
                                                const SearchConfig& config);

CandidateTree grow_candidate_tree(const CoreSelection& root, const CpuTopology& topology,
                                  const SearchConfig& config);

enum class SearchPhase { stage1, stage2, exhaustive };
std::string_view to_string(SearchPhase phase);

struct TraceRecord {
  SearchPhase phase = SearchPhase::stage1;
  CoreSelection selection;
  int repeat_index = 0;
  double speed_tps = 0.0;
  double energy_mj_per_tok = 0.0;
  double elapsed_s = 0.0;
};

struct Stage1Step {
  CoreSelection selection;
  MeasurementSample mean;
  double speedup = 0.0;  ///< relative to the incumbent before this step
  bool accepted = false;
};

struct Stage1Result {
  CoreSelection fastest;
  MeasurementSample fastest_mean;
  std::vector<Stage1Step> steps;
  int measurement_count = 0;
  std::vector<TraceRecord> trace;
};

struct CandidateRecord {
  CoreSelection selection;
  int depth = 0;
  Transformation tag = Transformation::root;
  MeasurementSample mean;
  double objective = 0.0;
  bool feasible = false;
};

struct SearchResult {
  CoreSelection chosen;
  CoreSelection stage1;
  double stage1_speed = 0.0;
  std::vector<Stage1Step> stage1_steps;
  std::vector<CandidateRecord> candidates;
  int measurement_count = 0;
  long long token_budget = 0;  ///< measurements x tokens per measurement
  std::vector<TraceRecord> trace;

  const CandidateRecord& chosen_record() const;
};

/// Measures `selection` `config.repeats` times and aggregates.
MeasurementSample measure_repeated(MeasurementProvider& provider, const CoreSelection& selection,
                                   const SearchConfig& config, SearchPhase phase,
                                   std::vector<TraceRecord>& trace);

/// Greedy big-to-small core addition over non-efficient clusters (or thread
/// counts), stopping once one more core speeds up by less than
/// `config.stage1_min_speedup`.
Stage1Result stage1_fastest(MeasurementProvider& provider, const CpuTopology& topology,
                            const SearchConfig& config);

/// Measures every candidate, drops those slower than stage1_speed * (1 - eps)
/// and returns the E_h argmin. The root reuses `root_sample` when given.
SearchResult stage2_select(MeasurementProvider& provider, const CpuTopology& topology,
                           const SearchConfig& config, const CandidateTree& tree,
                           double stage1_speed, const HeuristicParams& params,
                           const MeasurementSample* root_sample = nullptr);

SearchResult aecs_search(MeasurementProvider& provider, const CpuTopology& topology,
                         const SearchConfig& config, const HeuristicParams& params);

enum class Ranking { measured_energy, blended };

/// Measures the whole space and returns the feasible argmin, with
/// feasibility judged against the fastest measured selection.
SearchResult exhaustive_search(MeasurementProvider& provider, const CpuTopology& topology,
                               const SearchConfig& config, const HeuristicParams& params,
                               Ranking ranking = Ranking::measured_energy);

}  // namespace aecs
