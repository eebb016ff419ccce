#include "aecs/search.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace aecs {

void validate(const SearchConfig& config) {
  if (!(config.epsilon >= 0.0 && config.epsilon < 1.0)) {
    throw ValidationError("search.epsilon must be in [0,1)");
  }
  if (config.repeats < 1) throw ValidationError("search.repeats must be >= 1");
  if (config.tokens_per_measurement < 1) {
    throw ValidationError("search.tokens_per_measurement must be >= 1");
  }
  if (config.max_tree_depth < 0) throw ValidationError("search.max_tree_depth must be >= 0");
  if (!(config.stage1_min_speedup >= 0.0)) {
    throw ValidationError("search.stage1_min_speedup must be >= 0");
  }
}

std::string_view to_string(Transformation tag) {
  switch (tag) {
    case Transformation::root: return "root";
    case Transformation::remove_one: return "a";
    case Transformation::remove_two: return "b";
    case Transformation::shift_core: return "c";
    case Transformation::shift_cluster: return "d";
    case Transformation::reduce_thread: return "reduce_thread";
  }
  return "?";
}

std::string_view to_string(SearchPhase phase) {
  switch (phase) {
    case SearchPhase::stage1: return "stage1";
    case SearchPhase::stage2: return "stage2";
    case SearchPhase::exhaustive: return "exhaustive";
  }
  return "?";
}

bool CandidateTree::contains(const CoreSelection& selection) const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [&](const TreeNode& n) { return n.selection == selection; });
}

const CandidateRecord& SearchResult::chosen_record() const {
  for (const auto& c : candidates) {
    if (c.selection == chosen) return c;
  }
  throw std::logic_error("chosen selection missing from candidate records");
}

namespace {

bool eligible(const Cluster& cluster, const SearchConfig& config) {
  return config.include_efficient || cluster.core_type != CoreType::efficient;
}

// Removes one core from the smallest selected cluster.
bool drop_smallest(std::vector<int>& counts) {
  for (auto i = counts.size(); i-- > 0;) {
    if (counts[i] > 0) {
      --counts[i];
      return true;
    }
  }
  return false;
}

int total(const std::vector<int>& counts) {
  int sum = 0;
  for (int c : counts) sum += c;
  return sum;
}

}  // namespace

std::vector<CoreSelection> apply_transformation(const CoreSelection& parent, Transformation tag,
                                                const CpuTopology& topology,
                                                const SearchConfig& config) {
  std::vector<CoreSelection> out;
  if (parent.mode() == SelectionMode::thread_count) {
    if (tag == Transformation::reduce_thread && parent.thread_count() > 1) {
      out.push_back(CoreSelection::threads(parent.thread_count() - 1));
    }
    return out;
  }

  const auto& counts = parent.counts();
  const int n = static_cast<int>(counts.size());
  const int selected = total(counts);
  auto at = [](auto& v, int i) -> auto& { return v[static_cast<std::size_t>(i)]; };

  switch (tag) {
    case Transformation::remove_one: {
      if (selected < 2) break;
      auto next = counts;
      drop_smallest(next);
      out.push_back(CoreSelection::affinity(std::move(next)));
      break;
    }
    case Transformation::remove_two: {
      if (selected < 3) break;
      auto next = counts;
      drop_smallest(next);
      drop_smallest(next);
      out.push_back(CoreSelection::affinity(std::move(next)));
      break;
    }
    case Transformation::shift_core: {
      int source = 0;
      while (source < n && at(counts, source) == 0) ++source;
      int target = source + 1;
      while (target < n && at(counts, target) == 0) ++target;
      if (target >= n) break;
      const Cluster& into = topology.clusters[static_cast<std::size_t>(target)];
      if (!eligible(into, config) || at(counts, target) >= into.core_count) break;
      auto next = counts;
      --at(next, source);
      ++at(next, target);
      out.push_back(CoreSelection::affinity(std::move(next)));
      break;
    }
    case Transformation::shift_cluster: {
      // A single-core plan has no cluster of cores to trade down.
      if (selected < 2) break;
      for (int source = 0; source < n; ++source) {
        if (at(counts, source) == 0) continue;
        int target = source + 1;
        while (target < n && (at(counts, target) > 0 ||
                              !eligible(topology.clusters[static_cast<std::size_t>(target)], config))) {
          ++target;
        }
        if (target >= n) continue;
        auto next = counts;
        at(next, target) = std::min(at(counts, source),
                                    topology.clusters[static_cast<std::size_t>(target)].core_count);
        at(next, source) = 0;
        out.push_back(CoreSelection::affinity(std::move(next)));
      }
      break;
    }
    case Transformation::root:
    case Transformation::reduce_thread:
      break;
  }
  return out;
}

CandidateTree grow_candidate_tree(const CoreSelection& root, const CpuTopology& topology,
                                  const SearchConfig& config) {
  validate(root, topology);
  CandidateTree tree;
  tree.nodes.push_back({root, 0, -1, Transformation::root});

  const bool thread_mode = root.mode() == SelectionMode::thread_count;
  for (std::size_t cursor = 0; cursor < tree.nodes.size(); ++cursor) {
    const TreeNode parent = tree.nodes[cursor];
    if (parent.depth >= config.max_tree_depth) continue;

    std::vector<Transformation> tags;
    if (thread_mode) {
      tags = {Transformation::reduce_thread};
    } else {
      // a) and b) only grow the first level.
      if (parent.depth == 0) tags = {Transformation::remove_one, Transformation::remove_two};
      tags.push_back(Transformation::shift_core);
      tags.push_back(Transformation::shift_cluster);
    }
    for (auto tag : tags) {
      for (auto& child : apply_transformation(parent.selection, tag, topology, config)) {
        if (tree.contains(child)) continue;
        tree.nodes.push_back({std::move(child), parent.depth + 1, static_cast<int>(cursor), tag});
      }
    }
  }
  return tree;
}

namespace {

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

MeasurementSample measure_repeated(MeasurementProvider& provider, const CoreSelection& selection,
                                   const SearchConfig& config, SearchPhase phase,
                                   std::vector<TraceRecord>& trace) {
  std::vector<double> speed, energy, elapsed, power;
  for (int r = 0; r < config.repeats; ++r) {
    const auto s = provider.measure(selection, config.tokens_per_measurement);
    speed.push_back(s.speed);
    energy.push_back(s.energy);
    elapsed.push_back(s.elapsed);
    power.push_back(s.avg_power);
    trace.push_back({phase, selection, r, s.speed, s.energy, s.elapsed});
  }
  MeasurementSample agg;
  agg.tokens = config.tokens_per_measurement;
  if (config.aggregation == Aggregation::median) {
    agg.speed = median(speed);
    agg.energy = median(energy);
    agg.elapsed = median(elapsed);
    agg.avg_power = median(power);
  } else {
    const double n = static_cast<double>(config.repeats);
    for (int r = 0; r < config.repeats; ++r) {
      const auto k = static_cast<std::size_t>(r);
      agg.speed += speed[k] / n;
      agg.energy += energy[k] / n;
      agg.elapsed += elapsed[k] / n;
      agg.avg_power += power[k] / n;
    }
  }
  return agg;
}

Stage1Result stage1_fastest(MeasurementProvider& provider, const CpuTopology& topology,
                            const SearchConfig& config) {
  validate(topology);
  validate(config);
  Stage1Result result;

  CoreSelection incumbent;
  if (topology.selection_mode == SelectionMode::thread_count) {
    incumbent = CoreSelection::threads(1);
  } else {
    if (topology.clusters.front().core_type == CoreType::efficient) {
      throw ValidationError("stage 1 needs a prime or performance core to start from");
    }
    std::vector<int> counts(topology.clusters.size(), 0);
    counts.front() = 1;
    incumbent = CoreSelection::affinity(std::move(counts));
  }

  // Next plan in big-to-small order, or nothing once the non-efficient cores
  // (all cores in thread mode) are used up.
  auto grow = [&](const CoreSelection& current) -> std::optional<CoreSelection> {
    if (current.mode() == SelectionMode::thread_count) {
      if (current.thread_count() >= topology.total_cores()) return std::nullopt;
      return CoreSelection::threads(current.thread_count() + 1);
    }
    auto counts = current.counts();
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const Cluster& c = topology.clusters[i];
      if (c.core_type == CoreType::efficient) continue;
      if (counts[i] < c.core_count) {
        ++counts[i];
        return CoreSelection::affinity(std::move(counts));
      }
    }
    return std::nullopt;
  };

  MeasurementSample best = measure_repeated(provider, incumbent, config, SearchPhase::stage1, result.trace);
  result.steps.push_back({incumbent, best, 0.0, true});
  while (auto next = grow(incumbent)) {
    const auto sample = measure_repeated(provider, *next, config, SearchPhase::stage1, result.trace);
    const double speedup = sample.speed / best.speed - 1.0;
    const bool accepted = speedup >= config.stage1_min_speedup;
    result.steps.push_back({*next, sample, speedup, accepted});
    if (!accepted) break;
    incumbent = *next;
    best = sample;
  }
  result.fastest = incumbent;
  result.fastest_mean = best;
  result.measurement_count = static_cast<int>(result.trace.size());
  return result;
}

SearchResult stage2_select(MeasurementProvider& provider, const CpuTopology& topology,
                           const SearchConfig& config, const CandidateTree& tree,
                           double stage1_speed, const HeuristicParams& params,
                           const MeasurementSample* root_sample) {
  if (tree.nodes.empty()) throw ValidationError("stage 2 needs a non-empty candidate tree");
  SearchResult result;
  result.stage1 = tree.root();
  result.stage1_speed = stage1_speed;
  const double threshold = stage1_speed * (1.0 - config.epsilon);

  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const TreeNode& node = tree.nodes[i];
    CandidateRecord record;
    record.selection = node.selection;
    record.depth = node.depth;
    record.tag = node.tag;
    if (i == 0 && root_sample) {
      record.mean = *root_sample;
    } else {
      record.mean = measure_repeated(provider, node.selection, config, SearchPhase::stage2, result.trace);
    }
    // The root sets the threshold, so it is kept even when its re-measurement
    // dips under it.
    record.feasible = i == 0 || record.mean.speed >= threshold;
    result.candidates.push_back(std::move(record));
  }

  const auto& root = result.candidates.front();
  ObjectiveScale scale;
  scale.energy = root.mean.run_energy();
  scale.heuristic_time = power_heuristic(root.selection, topology, params) * root.mean.elapsed;
  if (!(scale.energy > 0)) scale.energy = 1.0;

  const double alpha = params.alpha_for(topology);
  const CandidateRecord* best = nullptr;
  for (auto& record : result.candidates) {
    record.objective = heuristic_energy(record.mean, record.selection, topology, params, alpha, scale);
    if (record.feasible && (!best || record.objective < best->objective)) best = &record;
  }
  result.chosen = best->selection;
  result.measurement_count = static_cast<int>(result.trace.size());
  result.token_budget = static_cast<long long>(result.measurement_count) * config.tokens_per_measurement;
  return result;
}

SearchResult aecs_search(MeasurementProvider& provider, const CpuTopology& topology,
                         const SearchConfig& config, const HeuristicParams& params) {
  validate(params);
  auto stage1 = stage1_fastest(provider, topology, config);
  const auto tree = grow_candidate_tree(stage1.fastest, topology, config);
  auto result = stage2_select(provider, topology, config, tree, stage1.fastest_mean.speed, params,
                              &stage1.fastest_mean);
  result.stage1_steps = std::move(stage1.steps);
  stage1.trace.insert(stage1.trace.end(), result.trace.begin(), result.trace.end());
  result.trace = std::move(stage1.trace);
  result.measurement_count = static_cast<int>(result.trace.size());
  result.token_budget = static_cast<long long>(result.measurement_count) * config.tokens_per_measurement;
  return result;
}

SearchResult exhaustive_search(MeasurementProvider& provider, const CpuTopology& topology,
                               const SearchConfig& config, const HeuristicParams& params,
                               Ranking ranking) {
  validate(topology);
  validate(config);
  SearchResult result;
  for (const auto& selection : enumerate_selections(topology)) {
    CandidateRecord record;
    record.selection = selection;
    record.mean = measure_repeated(provider, selection, config, SearchPhase::exhaustive, result.trace);
    result.candidates.push_back(std::move(record));
  }

  const auto fastest = std::max_element(
      result.candidates.begin(), result.candidates.end(),
      [](const CandidateRecord& a, const CandidateRecord& b) { return a.mean.speed < b.mean.speed; });
  result.stage1 = fastest->selection;
  result.stage1_speed = fastest->mean.speed;
  const double threshold = result.stage1_speed * (1.0 - config.epsilon);

  ObjectiveScale scale;
  scale.energy = fastest->mean.run_energy();
  scale.heuristic_time = power_heuristic(fastest->selection, topology, params) * fastest->mean.elapsed;
  if (!(scale.energy > 0)) scale.energy = 1.0;
  const double alpha = ranking == Ranking::blended ? params.alpha_for(topology) : 0.0;

  const CandidateRecord* best = nullptr;
  for (auto& record : result.candidates) {
    record.feasible = record.mean.speed >= threshold;
    record.objective = heuristic_energy(record.mean, record.selection, topology, params, alpha, scale);
    if (record.feasible && (!best || record.objective < best->objective)) best = &record;
  }
  result.chosen = best->selection;
  result.measurement_count = static_cast<int>(result.trace.size());
  result.token_budget = static_cast<long long>(result.measurement_count) * config.tokens_per_measurement;
  return result;
}

}  // namespace aecs
