#include "car/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include "car/error.hpp"

namespace car {

void SchedulerConfig::validate() const {
  if (drift_chunk_size < 1) throw ValidationError("drift_chunk_size: must be >= 1");
  if (drift_chunk_size > base_chunk_size) {
    throw ValidationError("drift_chunk_size: must not exceed base_chunk_size");
  }
  if (!(alpha > 1.0) || !std::isfinite(alpha)) throw ValidationError("alpha: must be > 1");
}

ChunkSizeScheduler::ChunkSizeScheduler(SchedulerConfig config)
    : config_(config), current_(config.base_chunk_size) {
  config_.validate();
}

std::size_t grow_chunk_size(std::size_t current, const SchedulerConfig& config) {
  auto grown = static_cast<std::size_t>(std::floor(config.alpha * static_cast<double>(current)));
  if (grown <= current) grown = current + 1;  // floor stalls for small sizes
  return std::min(grown, config.base_chunk_size);
}

std::size_t ChunkSizeScheduler::next(bool drift_detected, bool stabilization_detected) {
  if (stabilization_detected) {
    current_ = config_.base_chunk_size;
  } else {
    current_ = grow_chunk_size(current_, config_);
  }
  if (drift_detected) current_ = config_.drift_chunk_size;
  return current_;
}

std::size_t restore_steps(std::size_t c, std::size_t c_d, double alpha) {
  SchedulerConfig{c, c_d, alpha}.validate();
  if (c == c_d) return 0;
  const double steps = std::log(static_cast<double>(c) / static_cast<double>(c_d)) / std::log(alpha);
  return static_cast<std::size_t>(std::ceil(steps));
}

}  // namespace car
