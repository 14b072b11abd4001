#pragma once

// Batch-trained base classifiers. One model is fitted per chunk and is
// immutable afterwards, so it can be shared read-only between ensembles and
// threads.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "car/stream.hpp"

namespace car {

enum class LearnerKind { kGaussianNb, kCart };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& name);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::kGaussianNb;
  int cart_max_depth = 8;
  int cart_min_split = 2;
  // Unset: 1e-9 * max(largest per-feature variance in the chunk, 1.0).
  std::optional<double> nb_variance_floor;

  void validate() const;
};

struct GaussianNbParams {
  std::vector<ClassIndex> classes;           // classes present in the training chunk
  std::vector<double> log_priors;            // per present class
  std::vector<std::vector<double>> means;    // per present class, per feature
  std::vector<std::vector<double>> variances;
  std::vector<std::vector<double>> inv_variances;
  std::vector<double> log_norm;              // log prior - 0.5 * sum(log(2 pi var))
  double variance_floor = 0.0;
};

struct CartNode {
  // Internal node: feature >= 0 and children set. Leaf: feature == -1.
  int feature = -1;
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  int depth = 0;
  std::vector<double> distribution;  // leaves only, length n_classes
};

struct CartParams {
  std::vector<CartNode> nodes;  // nodes[0] is the root
  int depth = 0;
};

class TrainedModel {
 public:
  TrainedModel(LearnerKind kind, int n_features, int n_classes, std::vector<ClassIndex> classes_seen,
               std::variant<GaussianNbParams, CartParams> params);

  LearnerKind kind() const { return kind_; }
  int n_features() const { return n_features_; }
  // Length of predict_proba output: largest class index seen in training + 1.
  int n_classes() const { return n_classes_; }
  const std::vector<ClassIndex>& classes_seen() const { return classes_seen_; }

  const GaussianNbParams* naive_bayes() const { return std::get_if<GaussianNbParams>(&params_); }
  const CartParams* cart() const { return std::get_if<CartParams>(&params_); }

  // Throws ValidationError on a feature-length mismatch.
  std::vector<double> predict_proba(std::span<const double> features) const;
  ClassIndex predict(std::span<const double> features) const;
  // Probability assigned to label; 0 for classes beyond n_classes().
  double probability_of(std::span<const double> features, ClassIndex label) const;

 private:
  void check_dimension(std::span<const double> features) const;

  LearnerKind kind_;
  int n_features_;
  int n_classes_;
  std::vector<ClassIndex> classes_seen_;
  std::variant<GaussianNbParams, CartParams> params_;
};

using ModelPtr = std::shared_ptr<const TrainedModel>;

// Throws ValidationError for an empty chunk or an invalid spec.
ModelPtr fit_batch(const LearnerSpec& spec, const Chunk& chunk);

// Same as fit_batch on the subset of chunk selected by indices.
ModelPtr fit_batch(const LearnerSpec& spec, const Chunk& chunk, std::span<const std::size_t> indices);

inline std::vector<double> predict_proba(const TrainedModel& model, std::span<const double> x) {
  return model.predict_proba(x);
}
inline ClassIndex predict(const TrainedModel& model, std::span<const double> x) {
  return model.predict(x);
}

// Index of the largest entry; ties go to the lowest index.
ClassIndex argmax(std::span<const double> values);

}  // namespace car
