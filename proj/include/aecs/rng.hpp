#pragma once

#include <cstdint>
#include <random>

namespace aecs {

/// An independent, explicitly owned random stream. Streams built from the same
/// (seed, stream id) pair produce identical sequences.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32)};
    engine_.seed(seq);
  }

  /// Standard normal truncated to [-limit, limit] by rejection.
  double truncated_normal(double limit = 3.0) {
    while (true) {
      const double z = normal_(engine_);
      if (z >= -limit && z <= limit) return z;
    }
  }

  double uniform() { return uniform_(engine_); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace aecs
