#include "car/ensemble.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "car/error.hpp"
#include "test_support.hpp"

namespace car {
namespace {

using test::make_chunk;

// A model that always predicts `label`: trained on a single-class chunk.
ModelPtr constant_model(ClassIndex label) {
  return fit_batch(LearnerSpec{}, make_chunk({{0.0}, {1.0}}, {label, label}));
}

EnsembleModel with_members(std::vector<std::pair<ClassIndex, double>> spec) {
  EnsembleModel e(EnsembleConfig{});
  for (auto [label, weight] : spec) e.mutable_members().push_back({constant_model(label), weight, 0});
  return e;
}

const std::vector<double> kX{0.5};

TEST(EnsemblePredict, WeightedVoteExamples) {
  EXPECT_EQ(ensemble_predict(with_members({{0, 0.6}, {1, 0.4}}), kX), 0);
  EXPECT_EQ(ensemble_predict(with_members({{0, 0.3}, {1, 0.35}, {1, 0.35}}), kX), 1);
  EXPECT_EQ(ensemble_predict(with_members({{0, 0.5}, {1, 0.5}}), kX), 0);
  EXPECT_EQ(ensemble_predict(with_members({{2, 0.5}, {1, 0.5}}), kX), 1);
  EXPECT_EQ(ensemble_predict(with_members({{2, 1.0}}), kX), 2);
  EXPECT_THROW(ensemble_predict(EnsembleModel(EnsembleConfig{}), kX), RuntimeError);
}

TEST(EnsemblePredict, ZeroWeightsFallBackToLowestVotedClass) {
  EXPECT_EQ(ensemble_predict(with_members({{3, 0.0}, {2, 0.0}}), kX), 2);
}

TEST(EnsemblePredict, InvariantToPositiveWeightScaling) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<ClassIndex> label(0, 3);
  std::uniform_real_distribution<double> weight(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<ClassIndex, double>> spec;
    for (int i = 0; i < 1 + trial % 10; ++i) spec.emplace_back(label(rng), weight(rng));
    const ClassIndex before = ensemble_predict(with_members(spec), kX);
    // Powers of two keep the scaled sums exact.
    const double s = std::ldexp(1.0, static_cast<int>(std::log2(scale(rng))));
    for (auto& [l, w] : spec) w *= s;
    EXPECT_EQ(ensemble_predict(with_members(spec), kX), before);
  }
}

TEST(AweWeight, Examples) {
  const Chunk chunk = make_chunk({{0.0}, {1.0}, {2.0}, {3.0}}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(random_guess_mse(chunk), 0.25);

  LearnerSpec cart;
  cart.kind = LearnerKind::kCart;
  const auto perfect = fit_batch(cart, chunk);
  EXPECT_DOUBLE_EQ(awe_member_weight(*perfect, chunk), 0.25);

  const auto inverted = fit_batch(cart, make_chunk({{0.0}, {1.0}, {2.0}, {3.0}}, {1, 1, 0, 0}));
  EXPECT_EQ(awe_member_weight(*inverted, chunk), 0.0);

  // Symmetric NB model evaluated at its decision boundary outputs (0.5, 0.5).
  const auto coin = fit_batch(LearnerSpec{}, make_chunk({{-1.5}, {-0.5}, {0.5}, {1.5}}, {0, 0, 1, 1}));
  EXPECT_NEAR(awe_member_weight(*coin, make_chunk({{0.0}, {0.0}}, {0, 1})), 0.0, 1e-15);
}

TEST(AweWeight, BoundedByRandomGuessMse) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 40; ++trial) {
    const Chunk train = test::blob_chunk(rng, 2 + trial % 3, 2, 20, 2.0);
    const Chunk eval = test::blob_chunk(rng, 2 + trial % 3, 2, 20, 2.0);
    const auto model = fit_batch(LearnerSpec{}, train);
    const double w = awe_member_weight(*model, eval);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, random_guess_mse(eval));
  }
}

TEST(WaeWeight, Examples) {
  EXPECT_DOUBLE_EQ(wae_member_weight(0.8, 0, 0.05), 0.8);
  EXPECT_NEAR(wae_member_weight(0.8, 2, 0.05), 0.722, 1e-12);
  EXPECT_EQ(wae_member_weight(0.0, 5, 0.05), 0.0);
  EXPECT_DOUBLE_EQ(wae_member_weight(0.9, 7, 0.0), 0.9);
}

std::vector<Member> members_of(std::size_t n) {
  std::vector<Member> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({constant_model(0), 1.0, n - i});
  return out;
}

TEST(SeaSelect, AdmissionAndReplacement) {
  const ModelPtr cand = constant_model(1);

  auto nine = sea_select_members(members_of(9), std::vector<double>(9, 0.9), cand, 0.1, 10);
  EXPECT_EQ(nine.size(), 10u);
  EXPECT_EQ(nine.back().model, cand);

  std::vector<double> acc{0.9, 0.8, 0.6, 0.7, 0.9, 0.6, 0.95, 0.9, 0.9, 0.9};
  const auto base = members_of(10);
  auto replaced = sea_select_members(base, acc, cand, 0.8, 10);
  ASSERT_EQ(replaced.size(), 10u);
  EXPECT_EQ(replaced.back().model, cand);
  // The first (oldest) of the two 0.6 members goes.
  EXPECT_EQ(replaced[2].model, base[3].model);
  EXPECT_EQ(replaced[4].model, base[5].model);

  auto kept = sea_select_members(base, acc, cand, 0.5, 10);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(kept[i].model, base[i].model);
  auto equal = sea_select_members(base, acc, cand, 0.6, 10);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(equal[i].model, base[i].model);
  for (const Member& m : replaced) EXPECT_EQ(m.weight, 1.0);

  EXPECT_THROW(sea_select_members(base, {0.5}, cand, 0.5, 10), ValidationError);
}

EnsembleConfig config_for(EnsembleStrategy s, std::size_t capacity = 10) {
  EnsembleConfig c;
  c.strategy = s;
  c.capacity = capacity;
  return c;
}

TEST(EnsembleProcess, EmptyEnsembleAdmitsFirstCandidate) {
  std::mt19937_64 rng(33);
  const Chunk chunk = test::blob_chunk(rng, 2, 3, 50);
  for (auto s : {EnsembleStrategy::kSea, EnsembleStrategy::kAwe, EnsembleStrategy::kWae}) {
    EnsembleModel e(config_for(s));
    ensemble_process_chunk(e, chunk);
    ASSERT_EQ(e.size(), 1u);
    EXPECT_EQ(e.members()[0].age, 0u);
    EXPECT_THROW(ensemble_process_chunk(e, Chunk{}), ValidationError);
  }
}

TEST(EnsembleProcess, CapacityWeightsAndAgesHoldOverLongRuns) {
  std::mt19937_64 rng(34);
  for (auto s : {EnsembleStrategy::kSea, EnsembleStrategy::kAwe, EnsembleStrategy::kWae}) {
    EnsembleModel e(config_for(s, 4));
    for (int step = 0; step < 30; ++step) {
      const Chunk chunk = test::blob_chunk(rng, 2 + step % 2, 2, 5 + step % 20, 1.0 + step % 4);
      ensemble_process_chunk(e, chunk);
      ASSERT_LE(e.size(), 4u);
      ASSERT_EQ(e.size(), std::min<std::size_t>(step + 1, 4));
      for (std::size_t i = 0; i < e.size(); ++i) {
        const Member& m = e.members()[i];
        EXPECT_TRUE(std::isfinite(m.weight));
        EXPECT_GE(m.weight, 0.0);
        if (s == EnsembleStrategy::kSea) EXPECT_EQ(m.weight, 1.0);
        if (s == EnsembleStrategy::kAwe) EXPECT_LE(m.weight, 1.0);
        if (i > 0) EXPECT_GT(e.members()[i - 1].age, m.age);
      }
      const ClassIndex y = ensemble_predict(e, chunk.samples[0].features);
      EXPECT_GE(y, 0);
    }
  }
}

TEST(EnsembleProcess, FullWaeAtCapacityStaysAtCapacity) {
  std::mt19937_64 rng(35);
  EnsembleModel e(config_for(EnsembleStrategy::kWae));
  for (int i = 0; i < 10; ++i) ensemble_process_chunk(e, test::blob_chunk(rng, 2, 2, 30));
  ASSERT_EQ(e.size(), 10u);
  ensemble_process_chunk(e, test::blob_chunk(rng, 2, 2, 30));
  EXPECT_EQ(e.size(), 10u);
}

TEST(EnsembleProcess, Deterministic) {
  const auto run = [] {
    std::mt19937_64 rng(36);
    EnsembleModel e(config_for(EnsembleStrategy::kAwe, 3));
    std::vector<double> weights;
    for (int i = 0; i < 8; ++i) {
      ensemble_process_chunk(e, test::blob_chunk(rng, 3, 2, 25, 2.0));
      for (const auto& m : e.members()) weights.push_back(m.weight);
    }
    return weights;
  };
  EXPECT_EQ(run(), run());
}

TEST(CandidateScore, CrossValidatedAccuracyOnSeparableData) {
  Chunk chunk;
  for (int i = 0; i < 100; ++i) chunk.samples.push_back({{i % 2 == 0 ? -5.0 - i * 0.01 : 5.0 + i * 0.01}, i % 2});
  EXPECT_DOUBLE_EQ(candidate_score(config_for(EnsembleStrategy::kSea), chunk), 1.0);
  EXPECT_NEAR(candidate_score(config_for(EnsembleStrategy::kAwe), chunk), 0.25, 1e-12);
  // Below 2k samples the score falls back to resubstitution.
  const Chunk tiny = make_chunk({{-1.0}, {1.0}, {-1.1}}, {0, 1, 0});
  EXPECT_DOUBLE_EQ(candidate_score(config_for(EnsembleStrategy::kWae), tiny), 1.0);
}

TEST(EnsembleConfig, Validation) {
  EnsembleConfig c;
  c.capacity = 0;
  EXPECT_THROW(EnsembleModel{c}, ValidationError);
  c = {};
  c.wae_age_decay = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(parse_ensemble_strategy("foo"), ValidationError);
  EXPECT_EQ(parse_ensemble_strategy("wae"), EnsembleStrategy::kWae);
}

}  // namespace
}  // namespace car
