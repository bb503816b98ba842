/*
 * Copyright 2026 The CADS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <numeric>

#include "cads/optimizer.hpp"
#include "cads/split.hpp"
#include "cads/synthetic.hpp"
#include "gtest/gtest.h"

namespace cads::optimizer {
namespace {

SearchSpace TwoScoutSpace() {
  SearchSpace space;
  space.start_experts = {0, 1};
  return space;
}

// Smooth synthetic objective peaking at w = 0.8, zeta = 0.05.
Measurement Bowl(const PolicyConfig& c) {
  const double acc = 1.0 - (c.w - 0.8) * (c.w - 0.8) - (c.zeta - 0.05) * (c.zeta - 0.05);
  return {acc, 1.0};
}

TEST(Objective, PenalizesOverspend) {
  EXPECT_NEAR(Objective(0.88, 10.5, 10.0), -4.12, 1e-12);
  EXPECT_DOUBLE_EQ(Objective(0.88, 9.0, 10.0), 0.88);
  EXPECT_DOUBLE_EQ(Objective(0.88, 10.0, 10.0), 0.88);
}

TEST(BudgetViolated, FivePercentTolerance) {
  EXPECT_FALSE(BudgetViolated(10.4, 10.0));
  EXPECT_FALSE(BudgetViolated(10.5, 10.0));
  EXPECT_TRUE(BudgetViolated(10.6, 10.0));
}

TEST(BetterTrial, OrdersByObjectiveThenCostThenId) {
  const Trial a{3, {}, 0.9, 0.9, 5.0}, b{1, {}, 0.9, 0.9, 6.0}, c{0, {}, 0.8, 0.8, 1.0},
      d{2, {}, 0.9, 0.9, 5.0};
  EXPECT_TRUE(BetterTrial(a, b));
  EXPECT_TRUE(BetterTrial(b, c));
  EXPECT_TRUE(BetterTrial(d, a));
}

TEST(Decode, RepairsAlphaOrdering) {
  detail::Point p;
  p.x = {0.1, 0.6, 0.9, 0.7, 0.5, 2.0, 1.0, 0.01, 0.02};
  const auto space = TwoScoutSpace();
  const auto c = detail::Decode(p, space);
  EXPECT_EQ(c.alpha_singleton, 0.9);
  EXPECT_EQ(c.alpha_binary, 0.7);
  EXPECT_EQ(c.alpha_difficult, 0.6);
  EXPECT_TRUE(space.Contains(c));
}

TEST(Parzen, BandwidthAndNormalization) {
  const detail::ParzenEstimator est({0.2, 0.4, 0.9}, Bounds{0.0, 1.0});
  EXPECT_NEAR(est.sigma(), std::pow(3.0, -0.2), 1e-15);
  // Truncated mixture integrates to one on the box.
  double integral = 0.0;
  const int steps = 20000;
  for (int i = 0; i < steps; ++i) integral += std::exp(est.LogDensity((i + 0.5) / steps)) / steps;
  EXPECT_NEAR(integral, 1.0, 1e-6);
}

TEST(SmoothedFrequencies, AddOne) {
  const std::vector<std::size_t> obs = {0, 0, 2};
  const auto p = detail::SmoothedFrequencies(obs, 3);
  EXPECT_DOUBLE_EQ(p[0], 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(p[1], 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(p[2], 2.0 / 6.0);
}

TEST(Tpe, StartupPhaseIsUniform) {
  const auto space = TwoScoutSpace();
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(TpeSuggest({}, space, a), SampleUniform(space, b));
  std::vector<Trial> short_history(kStartupTrials - 1);
  std::mt19937_64 c(3), d(3);
  EXPECT_EQ(TpeSuggest(short_history, space, c), SampleUniform(space, d));
}

// Good trials sit at w near 0.9 and bad ones near 0.1; the rest is uniform.
std::vector<Trial> SeparatedHistory(std::mt19937_64& rng, const SearchSpace& space) {
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  std::vector<Trial> history;
  for (std::size_t i = 0; i < 40; ++i) {
    auto c = SampleUniform(space, rng);
    const bool good = i % 4 == 0;
    c.w = (good ? 0.9 : 0.1) + jitter(rng);
    history.push_back({i, c, good ? 1.0 : 0.0, 0.0, 0.0});
  }
  return history;
}

TEST(Tpe, ProposesFromGoodMode) {
  const auto space = TwoScoutSpace();
  std::size_t inside = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    std::mt19937_64 rng(rep);
    const auto history = SeparatedHistory(rng, space);
    inside += TpeSuggest(history, space, rng).w >= 0.5 ? 1 : 0;
  }
  EXPECT_GE(inside, 90u);
}

TEST(Tpe, ProposalsStayInSpace) {
  const auto space = TwoScoutSpace();
  const auto study = Optimize(1.0, 120, 4, space, Sampler::kTpe, Bowl);
  for (const auto& t : study.all_trials) ASSERT_TRUE(space.Contains(t.config));
}

TEST(Optimize, SingleTrialIsBest) {
  const auto space = TwoScoutSpace();
  const auto study = Optimize(1.0, 1, 11, space, Sampler::kTpe, Bowl);
  ASSERT_EQ(study.all_trials.size(), 1u);
  EXPECT_EQ(study.best_trial.trial_id, 0u);
  EXPECT_THROW(Optimize(1.0, 0, 11, space, Sampler::kTpe, Bowl), Error);
}

TEST(Optimize, ReproducibleAndBestIsMaximal) {
  const auto space = TwoScoutSpace();
  for (auto sampler : {Sampler::kTpe, Sampler::kRandom}) {
    const auto a = Optimize(0.5, 60, 21, space, sampler, Bowl);
    const auto b = Optimize(0.5, 60, 21, space, sampler, Bowl);
    ASSERT_EQ(a.all_trials.size(), b.all_trials.size());
    for (std::size_t i = 0; i < a.all_trials.size(); ++i) {
      EXPECT_EQ(a.all_trials[i].config, b.all_trials[i].config);
      EXPECT_EQ(a.all_trials[i].objective, b.all_trials[i].objective);
    }
    for (const auto& t : a.all_trials) EXPECT_FALSE(BetterTrial(t, a.best_trial));
  }
}

TEST(Optimize, TpeBeatsRandomOnSmoothObjective) {
  const auto space = TwoScoutSpace();
  std::vector<double> tpe, rnd;
  for (std::uint64_t s = 0; s < 5; ++s) {
    tpe.push_back(Optimize(1.0, 100, s, space, Sampler::kTpe, Bowl).best_trial.objective);
    rnd.push_back(Optimize(1.0, 100, s, space, Sampler::kRandom, Bowl).best_trial.objective);
  }
  EXPECT_GE(std::accumulate(tpe.begin(), tpe.end(), 0.0),
            std::accumulate(rnd.begin(), rnd.end(), 0.0));
}

class PoolTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = synthetic::GeneratePool(synthetic::MakePoolSpec(4, 6, 1500, 0.4, 17));
    split_ = SplitDataset(data_.n_samples(), 17);
    ctx_ = router::BuildPolicyContext(data_, split_.calibration_ids);
  }
  Dataset data_;
  SplitIndex split_;
  PolicyContext ctx_;
};

TEST_F(PoolTest, TrialObjectiveDecomposes) {
  const double budget = 0.8 * data_.total_cost() / data_.n_experts();
  const auto study = OptimizePolicy(data_, ctx_, split_.calibration_ids, budget, 25, 3,
                                    Sampler::kTpe);
  const auto space = SearchSpace::ForContext(ctx_);
  for (const auto& t : study.all_trials) {
    ASSERT_TRUE(space.Contains(t.config));
    ASSERT_NEAR(t.objective, t.accuracy - 10.0 * std::max(0.0, t.mean_gflops - budget), 1e-12);
    const auto m = EvaluatePolicy(data_, ctx_, t.config, split_.calibration_ids);
    ASSERT_EQ(m.accuracy, t.accuracy);
    ASSERT_EQ(m.mean_gflops, t.mean_gflops);
  }
  const auto again = OptimizePolicy(data_, ctx_, split_.calibration_ids, budget, 25, 3,
                                    Sampler::kTpe, {}, 3);
  EXPECT_EQ(again.best_trial.config, study.best_trial.config);
}

TEST_F(PoolTest, VerifyOnTestFlagsOnlyBeyondTolerance) {
  PolicyConfig cfg;
  cfg.start_expert = router::DefaultStartExpert(ctx_);
  const auto m = EvaluatePolicy(data_, ctx_, cfg, split_.test_ids);
  EXPECT_FALSE(VerifyOnTest(data_, ctx_, cfg, split_.test_ids, m.mean_gflops / 1.04).budget_violation);
  EXPECT_TRUE(VerifyOnTest(data_, ctx_, cfg, split_.test_ids, m.mean_gflops / 1.06).budget_violation);
  EXPECT_FALSE(
      VerifyOnTest(data_, ctx_, cfg, split_.test_ids, data_.total_cost()).budget_violation);
}

TEST(Optimize, TpeRecoversKnownGoodPolicy) {
  const auto data = synthetic::GeneratePool(synthetic::MakePoolSpec(4, 6, 3000, 0.8, 31));
  const auto split = SplitDataset(data.n_samples(), 31);
  const auto ctx = router::BuildPolicyContext(data, split.calibration_ids);
  PolicyConfig known;
  known.start_expert = router::DefaultStartExpert(ctx);
  const auto reference = EvaluatePolicy(data, ctx, known, split.calibration_ids);
  ASSERT_GE(reference.accuracy, 0.95);
  const double budget = reference.mean_gflops;
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto study = OptimizePolicy(data, ctx, split.calibration_ids, budget, kDefaultTrials,
                                      seed, Sampler::kTpe);
    hits += study.best_trial.objective >= 0.93 ? 1 : 0;
  }
  EXPECT_GE(hits, 9u);
}

TEST(StudyJson, ContainsTrials) {
  const auto study = Optimize(1.0, 3, 1, TwoScoutSpace(), Sampler::kRandom, Bowl);
  const auto j = ToJson(study);
  EXPECT_EQ(j["trials"].size(), 3u);
  EXPECT_EQ(j["sampler"], "random");
  EXPECT_TRUE(j["best_trial"]["config"].contains("alpha_singleton"));
}

}  // namespace
}  // namespace cads::optimizer
