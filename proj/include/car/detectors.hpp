#pragma once

// Drift detection over per-sample correctness (FHDDM) and stabilization
// detection over per-chunk accuracy (variance threshold on a sliding window).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace car {

// sqrt(ln(1/delta) / (2n)). Throws ValidationError for n < 1 or delta
// outside (0, 1].
double hoeffding_bound(std::size_t n, double delta);

enum class DriftSignal { kNoDrift, kDrift };
enum class StabilizationSignal { kNotStabilized, kStabilized };

class FhddmState {
 public:
  explicit FhddmState(std::size_t window_size = 1000, double delta = 1e-6);

  // Pushes one prediction outcome. Returns kDrift when the windowed accuracy
  // has fallen more than epsilon below its maximum since the last reset; the
  // detector resets itself in that case.
  DriftSignal update(bool correct);
  void reset();

  std::size_t window_size() const { return window_.size(); }
  double delta() const { return delta_; }
  double epsilon() const { return epsilon_; }
  double p_max() const { return p_max_; }
  std::size_t filled() const { return filled_; }
  bool full() const { return filled_ == window_.size(); }
  // Fraction of correct outcomes in the window; 0 while empty.
  double windowed_accuracy() const;

 private:
  std::vector<std::uint8_t> window_;
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
  std::size_t correct_ = 0;
  double delta_;
  double epsilon_;
  double p_max_ = 0.0;
};

inline DriftSignal fhddm_update(FhddmState& state, bool correct) { return state.update(correct); }

class StabilizationWindow {
 public:
  explicit StabilizationWindow(std::size_t capacity = 30, double epsilon_s = 1e-4);

  // Throws ValidationError if score is outside [0, 1].
  StabilizationSignal update(double score);
  void reset();

  // Population variance of the window; nullopt until capacity scores are held.
  std::optional<double> variance() const;

  std::size_t capacity() const { return capacity_; }
  double epsilon_s() const { return epsilon_s_; }
  std::size_t size() const { return scores_.size(); }
  bool full() const { return scores_.size() == capacity_; }
  // Scores in arrival order, oldest first.
  std::vector<double> scores() const;

 private:
  std::size_t capacity_;
  double epsilon_s_;
  std::vector<double> scores_;  // ring buffer once full
  std::size_t head_ = 0;        // oldest element when full
};

inline std::optional<double> window_variance(const StabilizationWindow& w) { return w.variance(); }
inline StabilizationSignal vsdm_update(StabilizationWindow& w, double score) { return w.update(score); }

}  // namespace car
