#include "car/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "car/error.hpp"

namespace car {

RunRecord test_then_train_run(StreamSource& stream, EnsembleModel& ensemble, FhddmState& fhddm,
                              StabilizationWindow& vsdm, ChunkSizeScheduler& scheduler,
                              const RunOptions& options) {
  if (stream.remaining() == 0) throw ValidationError("stream: no samples to process");
  if (!(options.noise_fraction >= 0.0 && options.noise_fraction <= 1.0)) {
    throw ValidationError("noise_fraction: must lie in [0, 1]");
  }

  RunRecord record;
  record.seed = options.seed;
  record.ground_truth_drifts = stream.ground_truth_drifts();

  std::seed_seq transform_seed{static_cast<std::uint32_t>(options.seed),
                               static_cast<std::uint32_t>(options.seed >> 32), 0x7472616eu};
  std::mt19937_64 rng(transform_seed);
  const auto prepare = [&](Chunk chunk) {
    if (options.noise_fraction > 0.0) {
      chunk = inject_label_noise(chunk, options.noise_fraction, stream.n_classes(), rng);
    }
    if (options.oversample) chunk = oversample_chunk(chunk, rng);
    return chunk;
  };

  const std::size_t base = scheduler.config().base_chunk_size;
  std::size_t next_size = options.car_enabled ? scheduler.current() : base;

  auto first = stream.next_chunk(next_size);
  record.train_only_samples = first->size();
  ensemble_process_chunk(ensemble, prepare(std::move(*first)));

  while (auto chunk = stream.next_chunk(next_size)) {
    ChunkTrace trace;
    trace.chunk_index = chunk->index;
    trace.chunk_size = chunk->size();
    trace.cumulative_samples = stream.cursor();
    const Chunk data = prepare(std::move(*chunk));

    std::size_t correct = 0;
    for (const Sample& s : data.samples) {
      const bool ok = ensemble_predict(ensemble, s.features) == s.label;
      correct += ok ? 1 : 0;
      if (fhddm.update(ok) == DriftSignal::kDrift) trace.drift_detected = true;
    }
    trace.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());

    if (options.stabilization_enabled) {
      trace.stabilization_detected = vsdm.update(trace.accuracy) == StabilizationSignal::kStabilized;
    }
    if (trace.drift_detected) vsdm.reset();
    next_size = options.car_enabled
                    ? scheduler.next(trace.drift_detected, trace.stabilization_detected)
                    : base;

    record.traces.push_back(trace);
    ensemble_process_chunk(ensemble, data);
  }
  record.samples_consumed = stream.cursor();
  return record;
}

std::vector<Segment> segment_runs(const RunRecord& record) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < record.traces.size(); ++i) {
    if (record.traces[i].drift_detected) starts.push_back(i);
  }
  std::vector<Segment> segments;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : record.traces.size();
    segments.push_back({starts[k], end});
  }
  return segments;
}

RestorationPoint sample_restoration(std::span<const double> accuracies,
                                    std::span<const std::size_t> chunk_sizes, double p) {
  if (accuracies.empty()) throw ValidationError("segment: must contain at least one chunk");
  if (accuracies.size() != chunk_sizes.size()) {
    throw ValidationError("segment: accuracies and chunk sizes differ in length");
  }
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("p: must lie in (0, 1)");

  RestorationPoint point;
  point.t_min = static_cast<std::size_t>(
      std::min_element(accuracies.begin(), accuracies.end()) - accuracies.begin());
  const double best = *std::max_element(accuracies.begin() + static_cast<std::ptrdiff_t>(point.t_min),
                                        accuracies.end());
  point.r = p * best;
  point.t_r = point.t_min;
  while (accuracies[point.t_r] < point.r) ++point.t_r;  // terminates: best >= r
  point.sr = std::accumulate(chunk_sizes.begin(),
                             chunk_sizes.begin() + static_cast<std::ptrdiff_t>(point.t_r) + 1,
                             std::size_t{0});
  return point;
}

SrEntry sample_restoration_for(const RunRecord& record, const Segment& segment, double p) {
  if (segment.end > record.traces.size() || segment.begin >= segment.end) {
    throw ValidationError("segment: out of range for this record");
  }
  std::vector<double> acc;
  std::vector<std::size_t> sizes;
  for (std::size_t i = segment.begin; i < segment.end; ++i) {
    acc.push_back(record.traces[i].accuracy);
    sizes.push_back(record.traces[i].chunk_size);
  }
  const RestorationPoint point = sample_restoration(acc, sizes, p);
  return {segment.begin, point.t_min, point.r, point.t_r, point.sr, p};
}

SrReport sample_restoration_report(const RunRecord& record, double p) {
  SrReport report;
  report.p = p;
  for (const Segment& s : segment_runs(record)) {
    report.entries.push_back(sample_restoration_for(record, s, p));
  }
  if (!report.entries.empty()) {
    double sum = 0.0;
    for (const SrEntry& e : report.entries) sum += static_cast<double>(e.sr_value);
    report.mean = sum / static_cast<double>(report.entries.size());
    double sq = 0.0;
    for (const SrEntry& e : report.entries) {
      const double d = static_cast<double>(e.sr_value) - report.mean;
      sq += d * d;
    }
    report.stddev = std::sqrt(sq / static_cast<double>(report.entries.size()));
  }
  return report;
}

std::vector<std::optional<Segment>> drift_aligned_segments(const RunRecord& record) {
  const auto segments = segment_runs(record);
  const auto& truth = record.ground_truth_drifts;
  if (truth.empty()) return {segments.begin(), segments.end()};

  std::vector<std::optional<Segment>> aligned(truth.size());
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const std::size_t lo = truth[j];
    const std::size_t hi =
        j + 1 < truth.size() ? (truth[j] + truth[j + 1]) / 2 : std::numeric_limits<std::size_t>::max();
    for (const Segment& s : segments) {
      const std::size_t at = record.traces[s.begin].cumulative_samples;
      if (at > lo && at <= hi) {
        aligned[j] = s;
        break;
      }
    }
  }
  return aligned;
}

WilcoxonResult wilcoxon_one_sided_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon: samples must have equal length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n < 5) {
    throw ValidationError("wilcoxon: need at least 5 non-zero differences, got " + std::to_string(n));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
  // Twice the average rank keeps tied ranks integral.
  std::vector<std::size_t> doubled_rank(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) doubled_rank[order[k]] = i + j + 2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  std::size_t doubled_stat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0.0) doubled_stat += doubled_rank[i];
  }

  WilcoxonResult result;
  result.n = n;
  result.statistic = static_cast<double>(doubled_stat) / 2.0;
  if (n <= 25) {
    const std::size_t max_sum = n * (n + 1);
    std::vector<double> counts(max_sum + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t rank : doubled_rank) {
      for (std::size_t s = reach + 1; s-- > 0;) {
        if (counts[s] != 0.0) counts[s + rank] += counts[s];
      }
      reach += rank;
    }
    double tail = 0.0;
    for (std::size_t s = 0; s <= doubled_stat; ++s) tail += counts[s];
    result.p_value = tail / std::ldexp(1.0, static_cast<int>(n));
    result.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (result.statistic - mean) / std::sqrt(var);
    result.p_value = 0.5 * std::erfc(-z / std::sqrt(2.0));
    result.exact = false;
  }
  return result;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("sigma: must be > 0");
  const auto radius = static_cast<std::ptrdiff_t>(4.0 * sigma + 0.5);
  std::vector<double> kernel;
  double total = 0.0;
  for (std::ptrdiff_t x = -radius; x <= radius; ++x) {
    const double w = std::exp(-0.5 * static_cast<double>(x * x) / (sigma * sigma));
    kernel.push_back(w);
    total += w;
  }
  for (double& w : kernel) w /= total;
  return kernel;
}

std::vector<double> gaussian_smooth(std::span<const double> series, double sigma) {
  if (series.empty()) throw ValidationError("series: must not be empty");
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  const auto reflect = [n](std::ptrdiff_t i) {
    const std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i - 1;
  };
  std::vector<double> out(series.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
      acc += kernel[static_cast<std::size_t>(k + radius)] *
             series[static_cast<std::size_t>(reflect(i + k))];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

}  // namespace car
