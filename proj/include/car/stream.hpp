#pragma once

// Labeled sample streams: synthetic drifting streams, CSV-backed streams, and
// the chunk-level transforms applied before test-then-train.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace car {

using ClassIndex = std::int32_t;

struct Sample {
  std::vector<double> features;
  ClassIndex label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Chunk {
  std::size_t index = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t n_features() const { return samples.empty() ? 0 : samples.front().features.size(); }

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

// Per-class sample counts, indexed by class. Length is max label + 1.
std::vector<std::size_t> class_counts(const Chunk& chunk);

enum class DriftType { kAbrupt, kGradual, kIncremental };

std::string to_string(DriftType type);
// Throws ValidationError on unknown names.
DriftType parse_drift_type(const std::string& name);

struct SyntheticStreamSpec {
  std::size_t n_samples = 150000;
  int n_classes = 2;
  int n_features = 20;
  int n_informative = 2;
  int n_redundant = 2;
  int n_drifts = 5;
  DriftType drift_type = DriftType::kAbrupt;
  bool recurring = false;
  double sigmoid_spacing = 5.0;
  double class_sep = 2.0;
  std::uint64_t seed = 0;

  // Throws ValidationError naming the first offending field.
  void validate() const;
};

// One concept: class centroids in the informative subspace plus the linear map
// producing the redundant features.
struct ConceptParams {
  std::vector<std::vector<double>> centroids;  // n_classes x n_informative
  std::vector<std::vector<double>> mixing;     // n_redundant x n_informative
};

// Pull-based, finite producer of samples. Owned by a single run loop.
class StreamSource {
 public:
  virtual ~StreamSource() = default;

  // Returns min(requested_size, remaining) samples, or nullopt once the
  // stream is exhausted. Throws ValidationError when requested_size < 1.
  std::optional<Chunk> next_chunk(std::size_t requested_size);

  std::size_t cursor() const { return cursor_; }
  std::size_t remaining() const { return n_samples() - cursor_; }
  std::size_t chunks_emitted() const { return chunks_emitted_; }

  virtual std::size_t n_samples() const = 0;
  virtual int n_features() const = 0;
  virtual int n_classes() const = 0;
  virtual const std::vector<std::size_t>& ground_truth_drifts() const = 0;

 protected:
  // Produces the sample at position cursor(). Called exactly once per index,
  // in increasing order.
  virtual Sample produce(std::size_t index) = 0;

 private:
  std::size_t cursor_ = 0;
  std::size_t chunks_emitted_ = 0;
};

// Weight of the incoming concept at sample_index for a drift centred on
// drift_center. Step function for abrupt drift, logistic otherwise.
double concept_mixture_weight(std::size_t sample_index, std::size_t drift_center,
                              std::size_t transition_width, double spacing, DriftType drift_type);

class SyntheticStream final : public StreamSource {
 public:
  explicit SyntheticStream(SyntheticStreamSpec spec);

  std::size_t n_samples() const override { return spec_.n_samples; }
  int n_features() const override { return spec_.n_features; }
  int n_classes() const override { return spec_.n_classes; }
  const std::vector<std::size_t>& ground_truth_drifts() const override { return drift_centers_; }

  const SyntheticStreamSpec& spec() const { return spec_; }
  const std::vector<ConceptParams>& concepts() const { return concepts_; }
  // Concept index used by segment k (0-based, n_drifts + 1 segments).
  std::size_t segment_concept(std::size_t segment) const;
  std::size_t transition_width() const { return transition_width_; }

 protected:
  Sample produce(std::size_t index) override;

 private:
  SyntheticStreamSpec spec_;
  std::vector<ConceptParams> concepts_;
  std::vector<std::size_t> drift_centers_;
  std::size_t transition_width_ = 1;
  std::mt19937_64 rng_;
};

std::unique_ptr<SyntheticStream> generate_synthetic_stream(const SyntheticStreamSpec& spec);

// Stream over an in-memory, fully parsed dataset.
class DatasetStream final : public StreamSource {
 public:
  DatasetStream(std::vector<Sample> samples, int n_features, int n_classes,
                std::vector<std::size_t> ground_truth_drifts);

  std::size_t n_samples() const override { return samples_.size(); }
  int n_features() const override { return n_features_; }
  int n_classes() const override { return n_classes_; }
  const std::vector<std::size_t>& ground_truth_drifts() const override { return drifts_; }

 protected:
  Sample produce(std::size_t index) override { return samples_[index]; }

 private:
  std::vector<Sample> samples_;
  int n_features_;
  int n_classes_;
  std::vector<std::size_t> drifts_;
};

// Loads a CSV with a header row. Every column except label_column is a
// numeric feature; label_column holds non-negative integer labels.
// metadata_path, when given, names a JSON sidecar with the ground-truth drift
// sample indices, either as a bare array or as {"ground_truth_drifts": [...]}.
std::unique_ptr<DatasetStream> load_dataset_stream(
    const std::filesystem::path& path, const std::string& label_column,
    const std::optional<std::filesystem::path>& metadata_path = std::nullopt);

// Reassigns the labels of exactly floor(fraction * size) distinct, uniformly
// chosen samples. Binary labels are flipped; with more classes the new label
// is drawn uniformly among the other classes.
Chunk inject_label_noise(const Chunk& chunk, double fraction, int n_classes, std::mt19937_64& rng);

// Appends with-replacement draws of every minority class until all present
// classes match the majority count. The original samples stay as a prefix.
Chunk oversample_chunk(const Chunk& chunk, std::mt19937_64& rng);

}  // namespace car
