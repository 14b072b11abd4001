#pragma once

// Chunk-size schedule: drop to the drift size on a detected drift, regrow
// geometrically, and snap back to the base size on detected stabilization.

#include <cstddef>

namespace car {

struct SchedulerConfig {
  std::size_t base_chunk_size = 1000;  // c
  std::size_t drift_chunk_size = 30;   // c_d
  double alpha = 1.1;                  // growth factor, > 1

  void validate() const;
};

class ChunkSizeScheduler {
 public:
  explicit ChunkSizeScheduler(SchedulerConfig config);

  // Stabilization is applied first, growth otherwise, and a drift overrides
  // both. Returns the new current size, always within [c_d, c].
  std::size_t next(bool drift_detected, bool stabilization_detected);

  std::size_t current() const { return current_; }
  const SchedulerConfig& config() const { return config_; }

 private:
  SchedulerConfig config_;
  std::size_t current_;
};

inline std::size_t next_chunk_size(ChunkSizeScheduler& state, bool drift_detected,
                                   bool stabilization_detected) {
  return state.next(drift_detected, stabilization_detected);
}

// One growth step: min(floor(alpha * current), c), advancing by at least one
// while below c.
std::size_t grow_chunk_size(std::size_t current, const SchedulerConfig& config);

// ceil(log_alpha(c / c_d)): steps of pure geometric growth from c_d to c.
std::size_t restore_steps(std::size_t c, std::size_t c_d, double alpha);

}  // namespace car
