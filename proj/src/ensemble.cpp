#include "car/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "car/error.hpp"
#include "car/kernels.hpp"

namespace car {

std::string to_string(EnsembleStrategy strategy) {
  switch (strategy) {
    case EnsembleStrategy::kSea: return "sea";
    case EnsembleStrategy::kAwe: return "awe";
    case EnsembleStrategy::kWae: return "wae";
  }
  return "sea";
}

EnsembleStrategy parse_ensemble_strategy(const std::string& name) {
  if (name == "sea") return EnsembleStrategy::kSea;
  if (name == "awe") return EnsembleStrategy::kAwe;
  if (name == "wae") return EnsembleStrategy::kWae;
  throw ValidationError("ensemble.strategy: unknown value '" + name + "'");
}

void EnsembleConfig::validate() const {
  if (capacity < 1) throw ValidationError("capacity: must be >= 1");
  if (!(wae_age_decay >= 0.0 && wae_age_decay <= 1.0)) {
    throw ValidationError("wae_age_decay: must lie in [0, 1]");
  }
  if (candidate_folds < 2) throw ValidationError("candidate_folds: must be >= 2");
  learner.validate();
}

EnsembleModel::EnsembleModel(EnsembleConfig config) : config_(std::move(config)) {
  config_.validate();
}

ClassIndex ensemble_predict(const EnsembleModel& ensemble, std::span<const double> features) {
  if (ensemble.empty()) throw RuntimeError("ensemble has no trained members");
  std::vector<double> votes;
  std::vector<bool> voted;
  for (const Member& m : ensemble.members()) {
    const auto cls = static_cast<std::size_t>(m.model->predict(features));
    if (cls >= votes.size()) {
      votes.resize(cls + 1, 0.0);
      voted.resize(cls + 1, false);
    }
    votes[cls] += m.weight;
    voted[cls] = true;
  }
  std::size_t best = votes.size();
  for (std::size_t c = 0; c < votes.size(); ++c) {
    if (!voted[c]) continue;
    if (best == votes.size() || votes[c] > votes[best]) best = c;
  }
  return static_cast<ClassIndex>(best);
}

namespace {

std::vector<ClassIndex> labels_of(const Chunk& chunk) {
  std::vector<ClassIndex> labels;
  labels.reserve(chunk.size());
  for (const Sample& s : chunk.samples) labels.push_back(s.label);
  return labels;
}

// Accumulated over a subset so that cross-validation folds can share it.
struct FoldScore {
  std::size_t correct = 0;
  double squared_error = 0.0;  // sum of (1 - p(true class))^2
  std::size_t n = 0;
};

FoldScore score_on(const TrainedModel& model, const Chunk& chunk, std::size_t begin,
                   std::size_t end) {
  FoldScore score;
  std::vector<ClassIndex> predicted;
  std::vector<ClassIndex> truth;
  predicted.reserve(end - begin);
  truth.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const Sample& s = chunk.samples[i];
    const auto proba = model.predict_proba(s.features);
    predicted.push_back(argmax(proba));
    truth.push_back(s.label);
    const double p_true =
        static_cast<std::size_t>(s.label) < proba.size() ? proba[static_cast<std::size_t>(s.label)] : 0.0;
    score.squared_error += (1.0 - p_true) * (1.0 - p_true);
  }
  score.correct = kernels::count_equal(predicted, truth);
  score.n = end - begin;
  return score;
}

}  // namespace

double chunk_accuracy(const TrainedModel& model, const Chunk& chunk) {
  if (chunk.empty()) throw ValidationError("chunk: must not be empty");
  std::vector<ClassIndex> predicted;
  predicted.reserve(chunk.size());
  for (const Sample& s : chunk.samples) predicted.push_back(model.predict(s.features));
  const auto truth = labels_of(chunk);
  return static_cast<double>(kernels::count_equal(predicted, truth)) /
         static_cast<double>(chunk.size());
}

double random_guess_mse(const Chunk& chunk) {
  if (chunk.empty()) throw ValidationError("chunk: must not be empty");
  const auto counts = class_counts(chunk);
  double mse = 0.0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(chunk.size());
    mse += p * (1.0 - p) * (1.0 - p);
  }
  return mse;
}

double awe_member_weight(const TrainedModel& model, const Chunk& chunk) {
  if (chunk.empty()) throw ValidationError("chunk: must not be empty");
  const FoldScore score = score_on(model, chunk, 0, chunk.size());
  const double mse_i = score.squared_error / static_cast<double>(score.n);
  return std::max(0.0, random_guess_mse(chunk) - mse_i);
}

double wae_member_weight(double accuracy, std::size_t age, double decay) {
  return accuracy * std::pow(1.0 - decay, static_cast<double>(age));
}

std::vector<Member> sea_select_members(std::vector<Member> current,
                                       const std::vector<double>& member_accuracies,
                                       ModelPtr candidate, double candidate_accuracy,
                                       std::size_t capacity) {
  if (member_accuracies.size() != current.size()) {
    throw ValidationError("member_accuracies: must align with current members");
  }
  for (Member& m : current) m.weight = 1.0;
  if (current.size() < capacity) {
    current.push_back({std::move(candidate), 1.0, 0});
    return current;
  }
  // First minimum is the oldest, members being kept in admission order.
  const auto worst = static_cast<std::size_t>(
      std::min_element(member_accuracies.begin(), member_accuracies.end()) -
      member_accuracies.begin());
  if (candidate_accuracy > member_accuracies[worst]) {
    current.erase(current.begin() + static_cast<std::ptrdiff_t>(worst));
    current.push_back({std::move(candidate), 1.0, 0});
  }
  return current;
}

double candidate_score(const EnsembleConfig& config, const Chunk& chunk) {
  if (chunk.empty()) throw ValidationError("chunk: must not be empty");
  const std::size_t n = chunk.size();
  const std::size_t k = config.candidate_folds;
  FoldScore total;
  if (n < 2 * k) {
    total = score_on(*fit_batch(config.learner, chunk), chunk, 0, n);
  } else {
    std::vector<std::size_t> train;
    train.reserve(n);
    for (std::size_t f = 0; f < k; ++f) {
      const std::size_t begin = f * n / k;
      const std::size_t end = (f + 1) * n / k;
      train.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (i < begin || i >= end) train.push_back(i);
      }
      const FoldScore fold = score_on(*fit_batch(config.learner, chunk, train), chunk, begin, end);
      total.correct += fold.correct;
      total.squared_error += fold.squared_error;
      total.n += fold.n;
    }
  }
  if (config.strategy == EnsembleStrategy::kAwe) {
    const double mse_i = total.squared_error / static_cast<double>(total.n);
    return std::max(0.0, random_guess_mse(chunk) - mse_i);
  }
  return static_cast<double>(total.correct) / static_cast<double>(total.n);
}

void ensemble_process_chunk(EnsembleModel& ensemble, const Chunk& chunk) {
  if (chunk.empty()) throw ValidationError("chunk: must not be empty");
  const EnsembleConfig& config = ensemble.config();
  std::vector<Member>& members = ensemble.mutable_members();

  std::vector<double> scores;
  scores.reserve(members.size());
  for (const Member& m : members) {
    scores.push_back(config.strategy == EnsembleStrategy::kAwe ? awe_member_weight(*m.model, chunk)
                                                               : chunk_accuracy(*m.model, chunk));
  }
  ModelPtr candidate = fit_batch(config.learner, chunk);
  const double candidate_value = candidate_score(config, chunk);
  for (Member& m : members) ++m.age;

  if (config.strategy == EnsembleStrategy::kSea) {
    members = sea_select_members(std::move(members), scores, std::move(candidate), candidate_value,
                                 config.capacity);
    return;
  }

  for (std::size_t i = 0; i < members.size(); ++i) {
    members[i].weight = config.strategy == EnsembleStrategy::kAwe
                            ? scores[i]
                            : wae_member_weight(scores[i], members[i].age, config.wae_age_decay);
  }
  members.push_back({std::move(candidate), candidate_value, 0});
  while (members.size() > config.capacity) {
    const auto worst = std::min_element(members.begin(), members.end(),
                                        [](const Member& a, const Member& b) {
                                          return a.weight < b.weight;
                                        });
    members.erase(worst);
  }
}

}  // namespace car
