#pragma once

// Test-then-train driver plus the post-hoc statistics computed from its traces:
// drift-anchored segmentation, Sample Restoration, the one-sided Wilcoxon
// signed-rank test and Gaussian smoothing of accuracy curves.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "car/detectors.hpp"
#include "car/ensemble.hpp"
#include "car/scheduler.hpp"
#include "car/stream.hpp"

namespace car {

struct ChunkTrace {
  std::size_t chunk_index = 0;  // stream chunk ordinal; 0 is the train-only chunk
  std::size_t chunk_size = 0;   // samples drawn from the stream for this chunk
  double accuracy = 0.0;
  bool drift_detected = false;
  bool stabilization_detected = false;
  std::size_t cumulative_samples = 0;  // stream samples consumed through this chunk

  friend bool operator==(const ChunkTrace&, const ChunkTrace&) = default;
};

struct RunRecord {
  std::string run_id;
  std::vector<ChunkTrace> traces;
  std::string config_snapshot;  // serialized experiment config, may be empty
  std::uint64_t seed = 0;
  std::vector<std::size_t> ground_truth_drifts;
  std::size_t train_only_samples = 0;
  std::size_t samples_consumed = 0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct RunOptions {
  bool car_enabled = true;
  // When false the stabilization detector never fires (drift still shrinks).
  bool stabilization_enabled = true;
  double noise_fraction = 0.0;
  bool oversample = false;
  std::uint64_t seed = 0;  // seeds the chunk-transform RNG
};

// Runs the stream to exhaustion. The first chunk only trains; every later
// chunk is tested (per-sample outcomes feed the drift detector, the chunk
// accuracy feeds the stabilization window), traced, used to pick the next
// chunk size, and then trained on. Throws ValidationError on an empty stream.
RunRecord test_then_train_run(StreamSource& stream, EnsembleModel& ensemble, FhddmState& fhddm,
                              StabilizationWindow& vsdm, ChunkSizeScheduler& scheduler,
                              const RunOptions& options);

// Half-open interval of trace positions.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Each drift detection opens a segment that runs to the next detection or
// the end of the record.
std::vector<Segment> segment_runs(const RunRecord& record);

struct RestorationPoint {
  std::size_t t_min = 0;
  double r = 0.0;
  std::size_t t_r = 0;
  std::size_t sr = 0;

  friend bool operator==(const RestorationPoint&, const RestorationPoint&) = default;
};

// Samples needed after the segment start until accuracy first reaches
// p * (best accuracy from the minimum onwards). Throws ValidationError on an
// empty segment, mismatched lengths or p outside (0, 1).
RestorationPoint sample_restoration(std::span<const double> accuracies,
                                    std::span<const std::size_t> chunk_sizes, double p);

struct SrEntry {
  std::size_t segment_start_index = 0;  // trace position of the opening detection
  std::size_t t_min = 0;
  double r = 0.0;
  std::size_t t_r = 0;
  std::size_t sr_value = 0;
  double p = 0.0;
};

struct SrReport {
  double p = 0.0;
  std::vector<SrEntry> entries;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

SrEntry sample_restoration_for(const RunRecord& record, const Segment& segment, double p);
SrReport sample_restoration_report(const RunRecord& record, double p);

// One slot per ground-truth drift: the segment opened by the first detection
// whose chunk ends inside the drift's catchment (drift position, midpoint to
// the next drift]. Detections before the drift are false alarms for it.
// Without ground truth every segment gets a slot in order. Unmatched drifts
// are nullopt.
std::vector<std::optional<Segment>> drift_aligned_segments(const RunRecord& record);

struct WilcoxonResult {
  double statistic = 0.0;  // rank sum of positive differences x - y
  double p_value = 1.0;    // P(statistic <= observed) under H0
  std::size_t n = 0;       // non-zero pairs used
  bool exact = true;
};

// One-sided test of H1: x tends to be smaller than y. Zero differences are
// dropped; ties share average ranks. Exact null distribution for n <= 25,
// tie-corrected normal approximation above. Throws ValidationError when the
// lengths differ or fewer than 5 non-zero pairs remain.
WilcoxonResult wilcoxon_one_sided_signed_rank(std::span<const double> x, std::span<const double> y);

// Gaussian filter truncated at 4 sigma with symmetric (reflect) boundaries.
std::vector<double> gaussian_smooth(std::span<const double> series, double sigma);

// Normalized kernel used by gaussian_smooth; length 2 * radius + 1.
std::vector<double> gaussian_kernel(double sigma);

}  // namespace car
