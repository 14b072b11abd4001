#pragma once

// Chunk-based ensembles with a changing lineup. Each processed chunk trains one
// candidate member; members are re-weighted on the chunk and the committee is
// pruned back to capacity.
//
//   SEA  unweighted majority vote, lowest-accuracy member replaced
//   AWE  weights = MSE of a random guesser minus member MSE, clipped at 0
//   WAE  weights = accuracy decayed geometrically with member age

#include <cstddef>
#include <string>
#include <vector>

#include "car/learners.hpp"
#include "car/stream.hpp"

namespace car {

enum class EnsembleStrategy { kSea, kAwe, kWae };

std::string to_string(EnsembleStrategy strategy);
EnsembleStrategy parse_ensemble_strategy(const std::string& name);

struct EnsembleConfig {
  EnsembleStrategy strategy = EnsembleStrategy::kSea;
  std::size_t capacity = 10;
  LearnerSpec learner;
  double wae_age_decay = 0.05;
  // Folds used to score a candidate on the chunk it was trained on.
  std::size_t candidate_folds = 5;

  void validate() const;
};

struct Member {
  ModelPtr model;
  double weight = 1.0;
  std::size_t age = 0;  // chunks since admission; the newest member has age 0
};

class EnsembleModel {
 public:
  explicit EnsembleModel(EnsembleConfig config);

  const EnsembleConfig& config() const { return config_; }
  const std::vector<Member>& members() const { return members_; }
  std::vector<Member>& mutable_members() { return members_; }
  bool empty() const { return members_.empty(); }
  std::size_t size() const { return members_.size(); }

 private:
  EnsembleConfig config_;
  std::vector<Member> members_;  // admission order, oldest first
};

// Weighted vote over member predictions; ties go to the lowest class index
// among classes that received a vote. Throws RuntimeError when untrained.
ClassIndex ensemble_predict(const EnsembleModel& ensemble, std::span<const double> features);

// Fraction of chunk samples the model labels correctly.
double chunk_accuracy(const TrainedModel& model, const Chunk& chunk);

// MSE of a classifier predicting the class priors of chunk.
double random_guess_mse(const Chunk& chunk);

// max(0, random_guess_mse - mean (1 - p(true class))^2).
double awe_member_weight(const TrainedModel& model, const Chunk& chunk);

// accuracy * (1 - decay)^age
double wae_member_weight(double accuracy, std::size_t age, double decay);

// SEA admission: below capacity the candidate always joins; otherwise it
// replaces the worst member (oldest on ties) iff its accuracy is strictly
// higher. Every returned weight is 1. member_accuracies are aligned with
// current.
std::vector<Member> sea_select_members(std::vector<Member> current,
                                       const std::vector<double>& member_accuracies,
                                       ModelPtr candidate, double candidate_accuracy,
                                       std::size_t capacity);

// Score of a model trained on this chunk, estimated by contiguous k-fold
// cross-validation (resubstitution when the chunk is smaller than 2k).
// metric is accuracy for SEA/WAE and the AWE weight for AWE.
double candidate_score(const EnsembleConfig& config, const Chunk& chunk);

// Trains a member on chunk, re-weights existing members on chunk (before the
// new member has seen it), ages them, and prunes to capacity.
void ensemble_process_chunk(EnsembleModel& ensemble, const Chunk& chunk);

}  // namespace car
