#include "car/detectors.hpp"

#include <cmath>
#include <string>

#include "car/error.hpp"
#include "car/kernels.hpp"

namespace car {

double hoeffding_bound(std::size_t n, double delta) {
  if (n < 1) throw ValidationError("n: must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw ValidationError("delta: must lie in (0, 1]");
  return std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(n)));
}

FhddmState::FhddmState(std::size_t window_size, double delta)
    : window_(window_size, 0), delta_(delta) {
  if (window_size < 1) throw ValidationError("fhddm window size: must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("fhddm delta: must lie in (0, 1)");
  epsilon_ = hoeffding_bound(window_size, delta);
}

void FhddmState::reset() {
  head_ = 0;
  filled_ = 0;
  correct_ = 0;
  p_max_ = 0.0;
}

double FhddmState::windowed_accuracy() const {
  return filled_ == 0 ? 0.0 : static_cast<double>(correct_) / static_cast<double>(filled_);
}

DriftSignal FhddmState::update(bool correct) {
  if (full()) correct_ -= window_[head_];
  window_[head_] = correct ? 1 : 0;
  correct_ += window_[head_];
  head_ = (head_ + 1) % window_.size();
  if (filled_ < window_.size()) ++filled_;
  if (!full()) return DriftSignal::kNoDrift;

  const double p = windowed_accuracy();
  if (p > p_max_) p_max_ = p;
  if (p_max_ - p > epsilon_) {
    reset();
    return DriftSignal::kDrift;
  }
  return DriftSignal::kNoDrift;
}

StabilizationWindow::StabilizationWindow(std::size_t capacity, double epsilon_s)
    : capacity_(capacity), epsilon_s_(epsilon_s) {
  if (capacity < 2) throw ValidationError("stabilization window size: must be >= 2");
  if (!(epsilon_s > 0.0)) throw ValidationError("stabilization threshold: must be > 0");
  scores_.reserve(capacity);
}

void StabilizationWindow::reset() {
  scores_.clear();
  head_ = 0;
}

StabilizationSignal StabilizationWindow::update(double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError("score: must lie in [0, 1], got " + std::to_string(score));
  }
  if (full()) {
    scores_[head_] = score;
    head_ = (head_ + 1) % capacity_;
  } else {
    scores_.push_back(score);
  }
  const auto var = variance();
  return var && *var < epsilon_s_ ? StabilizationSignal::kStabilized
                                  : StabilizationSignal::kNotStabilized;
}

std::optional<double> StabilizationWindow::variance() const {
  if (!full()) return std::nullopt;
  return kernels::mean_variance(scores_).variance;
}

std::vector<double> StabilizationWindow::scores() const {
  std::vector<double> ordered;
  ordered.reserve(scores_.size());
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    ordered.push_back(scores_[(head_ + i) % scores_.size()]);
  }
  return ordered;
}

}  // namespace car
