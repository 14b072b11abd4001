#include "car/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "car/error.hpp"

namespace car {

std::vector<std::size_t> class_counts(const Chunk& chunk) {
  std::vector<std::size_t> counts;
  for (const Sample& s : chunk.samples) {
    const auto label = static_cast<std::size_t>(s.label);
    if (label >= counts.size()) counts.resize(label + 1, 0);
    ++counts[label];
  }
  return counts;
}

std::string to_string(DriftType type) {
  switch (type) {
    case DriftType::kAbrupt: return "abrupt";
    case DriftType::kGradual: return "gradual";
    case DriftType::kIncremental: return "incremental";
  }
  return "abrupt";
}

DriftType parse_drift_type(const std::string& name) {
  if (name == "abrupt") return DriftType::kAbrupt;
  if (name == "gradual") return DriftType::kGradual;
  if (name == "incremental") return DriftType::kIncremental;
  throw ValidationError("drift_type: unknown value '" + name + "'");
}

void SyntheticStreamSpec::validate() const {
  if (n_samples == 0) throw ValidationError("n_samples: must be > 0");
  if (n_classes < 2) throw ValidationError("n_classes: must be >= 2");
  if (n_features < 1) throw ValidationError("n_features: must be >= 1");
  if (n_informative < 1) throw ValidationError("n_informative: must be >= 1");
  if (n_redundant < 0) throw ValidationError("n_redundant: must be >= 0");
  if (n_informative + n_redundant > n_features) {
    throw ValidationError("n_informative: n_informative + n_redundant exceeds n_features");
  }
  if (n_drifts < 0) throw ValidationError("n_drifts: must be >= 0");
  if (static_cast<std::size_t>(n_drifts) >= n_samples) {
    throw ValidationError("n_drifts: must be smaller than n_samples");
  }
  if (!(sigmoid_spacing > 0.0) || !std::isfinite(sigmoid_spacing)) {
    throw ValidationError("sigmoid_spacing: must be a positive finite number");
  }
  if (!(class_sep > 0.0) || !std::isfinite(class_sep)) {
    throw ValidationError("class_sep: must be a positive finite number");
  }
}

std::optional<Chunk> StreamSource::next_chunk(std::size_t requested_size) {
  if (requested_size < 1) throw ValidationError("requested_size: must be >= 1");
  const std::size_t take = std::min(requested_size, remaining());
  if (take == 0) return std::nullopt;
  Chunk chunk;
  chunk.index = chunks_emitted_++;
  chunk.samples.reserve(take);
  for (std::size_t i = 0; i < take; ++i) chunk.samples.push_back(produce(cursor_++));
  return chunk;
}

double concept_mixture_weight(std::size_t sample_index, std::size_t drift_center,
                              std::size_t transition_width, double spacing, DriftType drift_type) {
  if (drift_type == DriftType::kAbrupt) return sample_index >= drift_center ? 1.0 : 0.0;
  const double half_width = static_cast<double>(transition_width) / 2.0;
  const double x =
      (static_cast<double>(sample_index) - static_cast<double>(drift_center)) / half_width;
  return 1.0 / (1.0 + std::exp(-spacing * x));
}

namespace {

// Class centroids sit on distinct vertices of the {-sep, +sep} hypercube
// whenever there are enough vertices for every class.
std::vector<std::vector<double>> draw_centroids(const SyntheticStreamSpec& spec,
                                                std::mt19937_64& rng) {
  const int dims = spec.n_informative;
  std::bernoulli_distribution coin(0.5);
  const bool distinct = dims < 31 && (1LL << dims) >= spec.n_classes;
  std::set<std::vector<double>> used;
  std::vector<std::vector<double>> centroids;
  while (static_cast<int>(centroids.size()) < spec.n_classes) {
    std::vector<double> vertex(static_cast<std::size_t>(dims));
    for (double& v : vertex) v = coin(rng) ? spec.class_sep : -spec.class_sep;
    if (distinct && !used.insert(vertex).second) continue;
    centroids.push_back(std::move(vertex));
  }
  return centroids;
}

ConceptParams draw_concept(const SyntheticStreamSpec& spec, std::mt19937_64& rng,
                           const ConceptParams* previous) {
  ConceptParams concept_params;
  do {
    concept_params.centroids = draw_centroids(spec, rng);
  } while (previous != nullptr && concept_params.centroids == previous->centroids);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  concept_params.mixing.assign(static_cast<std::size_t>(spec.n_redundant),
                               std::vector<double>(static_cast<std::size_t>(spec.n_informative)));
  for (auto& row : concept_params.mixing) {
    for (double& v : row) v = coeff(rng);
  }
  return concept_params;
}

}  // namespace

SyntheticStream::SyntheticStream(SyntheticStreamSpec spec) : spec_(spec) {
  spec_.validate();
  std::seed_seq concept_seed{static_cast<std::uint32_t>(spec_.seed),
                             static_cast<std::uint32_t>(spec_.seed >> 32), 0x636f6e63u};
  std::mt19937_64 concept_rng(concept_seed);
  std::seed_seq sample_seed{static_cast<std::uint32_t>(spec_.seed),
                            static_cast<std::uint32_t>(spec_.seed >> 32), 0x73616d70u};
  rng_.seed(sample_seed);

  const auto segments = static_cast<std::size_t>(spec_.n_drifts) + 1;
  const std::size_t n_concepts = spec_.recurring ? std::min<std::size_t>(segments, 2) : segments;
  for (std::size_t k = 0; k < n_concepts; ++k) {
    concepts_.push_back(
        draw_concept(spec_, concept_rng, concepts_.empty() ? nullptr : &concepts_.back()));
  }
  for (std::size_t k = 1; k < segments; ++k) drift_centers_.push_back(k * spec_.n_samples / segments);
  transition_width_ = std::max<std::size_t>(1, spec_.n_samples / segments / 10);
}

std::size_t SyntheticStream::segment_concept(std::size_t segment) const {
  return spec_.recurring ? segment % concepts_.size() : segment;
}

Sample SyntheticStream::produce(std::size_t index) {
  const auto n_inf = static_cast<std::size_t>(spec_.n_informative);
  std::uniform_int_distribution<ClassIndex> label_dist(0, spec_.n_classes - 1);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Nearest drift centre decides which pair of concepts is being mixed.
  std::size_t old_concept = 0;
  std::size_t new_concept = 0;
  double weight = 0.0;
  if (!drift_centers_.empty()) {
    auto it = std::lower_bound(drift_centers_.begin(), drift_centers_.end(), index);
    std::size_t j = static_cast<std::size_t>(it - drift_centers_.begin());
    if (j == drift_centers_.size() ||
        (j > 0 && index - drift_centers_[j - 1] < drift_centers_[j] - index)) {
      --j;
    }
    old_concept = segment_concept(j);
    new_concept = segment_concept(j + 1);
    weight = concept_mixture_weight(index, drift_centers_[j], transition_width_,
                                    spec_.sigmoid_spacing, spec_.drift_type);
  }

  Sample sample;
  sample.label = label_dist(rng_);
  const auto label = static_cast<std::size_t>(sample.label);

  std::vector<double> centroid(n_inf);
  std::vector<std::vector<double>> mixing;
  const ConceptParams& from = concepts_[old_concept];
  const ConceptParams& to = concepts_[new_concept];
  switch (spec_.drift_type) {
    case DriftType::kAbrupt:
    case DriftType::kGradual: {
      bool use_new = weight >= 1.0;
      if (spec_.drift_type == DriftType::kGradual) {
        use_new = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < weight;
      }
      const ConceptParams& c = use_new ? to : from;
      centroid = c.centroids[label];
      mixing = c.mixing;
      break;
    }
    case DriftType::kIncremental: {
      for (std::size_t d = 0; d < n_inf; ++d) {
        centroid[d] = (1.0 - weight) * from.centroids[label][d] + weight * to.centroids[label][d];
      }
      mixing = from.mixing;
      for (std::size_t r = 0; r < mixing.size(); ++r) {
        for (std::size_t d = 0; d < n_inf; ++d) {
          mixing[r][d] = (1.0 - weight) * from.mixing[r][d] + weight * to.mixing[r][d];
        }
      }
      break;
    }
  }

  sample.features.resize(static_cast<std::size_t>(spec_.n_features));
  for (std::size_t d = 0; d < n_inf; ++d) sample.features[d] = centroid[d] + normal(rng_);
  for (std::size_t r = 0; r < mixing.size(); ++r) {
    double v = 0.0;
    for (std::size_t d = 0; d < n_inf; ++d) v += mixing[r][d] * sample.features[d];
    sample.features[n_inf + r] = v;
  }
  for (std::size_t d = n_inf + mixing.size(); d < sample.features.size(); ++d) {
    sample.features[d] = normal(rng_);
  }
  return sample;
}

std::unique_ptr<SyntheticStream> generate_synthetic_stream(const SyntheticStreamSpec& spec) {
  return std::make_unique<SyntheticStream>(spec);
}

DatasetStream::DatasetStream(std::vector<Sample> samples, int n_features, int n_classes,
                             std::vector<std::size_t> ground_truth_drifts)
    : samples_(std::move(samples)),
      n_features_(n_features),
      n_classes_(n_classes),
      drifts_(std::move(ground_truth_drifts)) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::vector<std::size_t> load_drift_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open metadata file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("metadata " + path.string() + ": " + e.what());
  }
  const nlohmann::json& list = doc.is_object() ? doc.at("ground_truth_drifts") : doc;
  if (!list.is_array()) throw ValidationError("metadata " + path.string() + ": expected an array");
  std::vector<std::size_t> drifts;
  for (const auto& v : list) {
    if (!v.is_number_unsigned()) {
      throw ValidationError("metadata " + path.string() + ": drift indices must be non-negative integers");
    }
    drifts.push_back(v.get<std::size_t>());
  }
  std::sort(drifts.begin(), drifts.end());
  return drifts;
}

}  // namespace

std::unique_ptr<DatasetStream> load_dataset_stream(
    const std::filesystem::path& path, const std::string& label_column,
    const std::optional<std::filesystem::path>& metadata_path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open dataset " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing header row");
  const auto header = split_csv(line);
  const auto label_it = std::find(header.begin(), header.end(), std::string_view(label_column));
  if (label_it == header.end()) {
    throw ValidationError(path.string() + ": label column '" + label_column + "' not in header");
  }
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());
  const int n_features = static_cast<int>(header.size()) - 1;
  if (n_features < 1) throw ValidationError(path.string() + ": no feature columns");

  std::vector<Sample> samples;
  ClassIndex max_label = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      std::ostringstream msg;
      msg << path.string() << ": row " << line_no << " has " << cells.size() << " columns, expected "
          << header.size();
      throw ValidationError(msg.str());
    }
    Sample s;
    s.features.reserve(static_cast<std::size_t>(n_features));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string_view cell = cells[c];
      if (c == label_pos) {
        ClassIndex label = -1;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), label);
        if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || label < 0) {
          throw ValidationError(path.string() + ": row " + std::to_string(line_no) +
                                ": label '" + std::string(cell) + "' is not a non-negative integer");
        }
        s.label = label;
        max_label = std::max(max_label, label);
      } else {
        double value = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || cell.empty()) {
          throw ValidationError(path.string() + ": row " + std::to_string(line_no) + ": column '" +
                                std::string(header[c]) + "' value '" + std::string(cell) +
                                "' is not numeric");
        }
        s.features.push_back(value);
      }
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ValidationError(path.string() + ": no data rows");

  std::vector<std::size_t> drifts;
  if (metadata_path) drifts = load_drift_metadata(*metadata_path);
  return std::make_unique<DatasetStream>(std::move(samples), n_features, max_label + 1,
                                         std::move(drifts));
}

Chunk inject_label_noise(const Chunk& chunk, double fraction, int n_classes, std::mt19937_64& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("fraction: must lie in [0, 1]");
  if (n_classes < 2) throw ValidationError("n_classes: label noise needs at least 2 classes");
  Chunk out = chunk;
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(chunk.size())));
  if (k == 0) return out;

  std::vector<std::size_t> order(chunk.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
    ClassIndex& label = out.samples[order[i]].label;
    if (n_classes == 2) {
      label = 1 - label;
    } else {
      std::uniform_int_distribution<ClassIndex> other(0, n_classes - 2);
      const ClassIndex r = other(rng);
      label = r >= label ? r + 1 : r;
    }
  }
  return out;
}

Chunk oversample_chunk(const Chunk& chunk, std::mt19937_64& rng) {
  if (chunk.empty()) throw ValidationError("chunk: cannot oversample an empty chunk");
  const auto counts = class_counts(chunk);
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());

  Chunk out = chunk;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0 || counts[c] == majority) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (static_cast<std::size_t>(chunk.samples[i].label) == c) members.push_back(i);
    }
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (std::size_t extra = counts[c]; extra < majority; ++extra) {
      out.samples.push_back(chunk.samples[members[pick(rng)]]);
    }
  }
  return out;
}

}  // namespace car
