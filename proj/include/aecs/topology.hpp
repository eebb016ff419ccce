#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aecs {

/// Raised when a descriptor or snapshot cannot be read. The message names the
/// offending field or file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a parsed value violates a model invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CoreType { prime, performance, efficient };

enum class SelectionMode { affinity, thread_count };

std::string_view to_string(CoreType type);
std::string_view to_string(SelectionMode mode);
CoreType core_type_from_string(std::string_view text);
SelectionMode selection_mode_from_string(std::string_view text);

struct Cluster {
  int core_count = 1;
  double max_freq_ghz = 1.0;
  double capacity = 1.0;
  CoreType core_type = CoreType::prime;

  bool operator==(const Cluster&) const = default;
};

/// Clusters are kept in descending capacity order; index 0 is the biggest.
struct CpuTopology {
  std::string device_name;
  std::vector<Cluster> clusters;
  SelectionMode selection_mode = SelectionMode::affinity;

  int cluster_count() const { return static_cast<int>(clusters.size()); }
  int total_cores() const;
  bool operator==(const CpuTopology&) const = default;
};

/// Which cores decode. In affinity mode `counts[i]` is the number of selected
/// cores of cluster i; in thread mode only `threads` is meaningful.
class CoreSelection {
 public:
  CoreSelection() = default;

  static CoreSelection affinity(std::vector<int> counts);
  static CoreSelection threads(int count);

  SelectionMode mode() const { return mode_; }
  const std::vector<int>& counts() const { return counts_; }
  int thread_count() const { return threads_; }
  int selected_cores() const;
  bool empty() const { return selected_cores() == 0; }

  /// "(1,2,0)" in affinity mode, "3t" in thread mode.
  std::string to_string() const;

  auto operator<=>(const CoreSelection&) const = default;

 private:
  SelectionMode mode_ = SelectionMode::affinity;
  std::vector<int> counts_;
  int threads_ = 0;
};

/// Parses "1,2,0" (affinity) or "3" (thread mode) against a topology.
CoreSelection parse_selection(std::string_view text, const CpuTopology& topology);

/// Throws ValidationError unless every topology invariant holds.
void validate(const CpuTopology& topology);
/// Throws ValidationError unless `selection` is non-empty and fits `topology`.
void validate(const CoreSelection& selection, const CpuTopology& topology);

/// Re-sorts clusters big to small (capacity, then frequency). Stable.
void canonicalize(CpuTopology& topology);

CpuTopology parse_device_descriptor(std::string_view json_text);
CpuTopology load_device_descriptor(const std::filesystem::path& path);
std::string serialize_device_descriptor(const CpuTopology& topology);

/// Reads a directory laid out like /sys/devices/system/cpu.
CpuTopology parse_sysfs_snapshot(const std::filesystem::path& root,
                                 std::string device_name = "sysfs");

/// The full search space: every non-empty count vector in affinity mode, or
/// 1..total_cores in thread mode. Lexicographic order.
std::vector<CoreSelection> enumerate_selections(const CpuTopology& topology);

/// Capacity of the biggest selected cluster over capacity of cluster 0.
double capacity_factor(const CoreSelection& selection, const CpuTopology& topology);

/// Per-cluster core counts a selection occupies. Thread-mode selections are
/// packed onto the biggest clusters first.
std::vector<int> occupied_counts(const CoreSelection& selection,
                                 const CpuTopology& topology);

}  // namespace aecs
