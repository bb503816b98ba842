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

// Budget-constrained policy search. A Tree-structured Parzen Estimator over
// PolicyConfig maximizes accuracy minus a soft penalty of 10x the GFLOPs
// overshoot; uniform random search is kept as the baseline sampler.

#ifndef CADS_OPTIMIZER_HPP_
#define CADS_OPTIMIZER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "cads/core.hpp"
#include "cads/router.hpp"
#include "json.hpp"

namespace cads::optimizer {

using router::CascadeOptions;
using router::PolicyConfig;
using router::PolicyContext;

inline constexpr double kPenaltyWeight = 10.0;
inline constexpr double kBudgetTolerance = 1.05;
inline constexpr std::size_t kStartupTrials = 15;
inline constexpr double kGoodQuantile = 0.25;
inline constexpr std::size_t kCandidates = 24;
inline constexpr std::size_t kDefaultTrials = 200;

inline double Objective(double accuracy, double mean_gflops, double budget) {
  return accuracy - kPenaltyWeight * std::max(0.0, mean_gflops - budget);
}

inline bool BudgetViolated(double mean_gflops, double budget) {
  return mean_gflops > kBudgetTolerance * budget;
}

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct SearchSpace {
  Bounds zeta{0.01, 0.30};
  Bounds alpha{0.5, 0.98};
  Bounds w{0.0, 1.0};
  Bounds gamma{1.0, 10.0};
  Bounds beta{0.5, 5.0};
  Bounds delta{0.0, 0.1};
  Bounds delta_max{0.0, 0.2};
  std::vector<std::size_t> min_experts{1, 2, 3};
  std::vector<ExpertId> start_experts;  // scout-tier ids

  static SearchSpace ForContext(const PolicyContext& ctx) {
    SearchSpace space;
    space.start_experts = ctx.scouts();
    if (space.start_experts.empty()) throw ValidationError("expert pool has no scout-tier expert");
    return space;
  }

  bool Contains(const PolicyConfig& c) const {
    auto in = [](double v, Bounds b) { return v >= b.lo && v <= b.hi; };
    return in(c.zeta, zeta) && in(c.alpha_singleton, alpha) && in(c.alpha_binary, alpha) &&
           in(c.alpha_difficult, alpha) && c.alpha_singleton >= c.alpha_binary &&
           c.alpha_binary >= c.alpha_difficult && in(c.w, w) && in(c.gamma, gamma) &&
           in(c.beta, beta) && in(c.delta, delta) && in(c.delta_max, delta_max) &&
           std::find(min_experts.begin(), min_experts.end(), c.min_experts) != min_experts.end() &&
           std::find(start_experts.begin(), start_experts.end(), c.start_expert) !=
               start_experts.end();
  }
};

struct Trial {
  std::size_t trial_id = 0;
  PolicyConfig config;
  double objective = 0.0;
  double accuracy = 0.0;
  double mean_gflops = 0.0;
};

enum class Sampler { kTpe, kRandom };

inline std::string_view SamplerName(Sampler s) { return s == Sampler::kTpe ? "tpe" : "random"; }

struct StudyResult {
  Trial best_trial;
  std::vector<Trial> all_trials;
  double budget = 0.0;
  std::uint64_t seed = 0;
  Sampler sampler = Sampler::kTpe;
};

// Highest objective, then lower mean GFLOPs, then lower trial id.
inline bool BetterTrial(const Trial& a, const Trial& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.mean_gflops != b.mean_gflops) return a.mean_gflops < b.mean_gflops;
  return a.trial_id < b.trial_id;
}

namespace detail {

inline constexpr std::size_t kContinuousDims = 9;

// Continuous coordinates: zeta, three alphas (already sorted descending), w,
// gamma, beta, delta, delta_max. Categoricals are indices into the space's
// choice lists.
struct Point {
  std::array<double, kContinuousDims> x{};
  std::size_t min_experts = 0;
  std::size_t start_expert = 0;
};

inline std::array<Bounds, kContinuousDims> DimBounds(const SearchSpace& s) {
  return {s.zeta, s.alpha, s.alpha, s.alpha, s.w, s.gamma, s.beta, s.delta, s.delta_max};
}

inline std::size_t IndexOf(std::span<const std::size_t> choices, std::size_t value) {
  const auto it = std::find(choices.begin(), choices.end(), value);
  return it == choices.end() ? 0 : static_cast<std::size_t>(it - choices.begin());
}

inline Point Encode(const PolicyConfig& c, const SearchSpace& s) {
  Point p;
  p.x = {c.zeta, c.alpha_singleton, c.alpha_binary, c.alpha_difficult, c.w,
         c.gamma, c.beta,           c.delta,        c.delta_max};
  p.min_experts = IndexOf(s.min_experts, c.min_experts);
  p.start_expert = IndexOf(s.start_experts, c.start_expert);
  return p;
}

// Applies the alpha ordering repair.
inline PolicyConfig Decode(Point p, const SearchSpace& s) {
  std::sort(p.x.begin() + 1, p.x.begin() + 4, std::greater<>());
  PolicyConfig c;
  c.zeta = p.x[0];
  c.alpha_singleton = p.x[1];
  c.alpha_binary = p.x[2];
  c.alpha_difficult = p.x[3];
  c.w = p.x[4];
  c.gamma = p.x[5];
  c.beta = p.x[6];
  c.delta = p.x[7];
  c.delta_max = p.x[8];
  c.min_experts = s.min_experts[p.min_experts];
  c.start_expert = s.start_experts[p.start_expert];
  return c;
}

inline double NormalCdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Mixture of Gaussians truncated to [lo, hi], one component per observation,
// bandwidth (hi - lo) * m^(-1/5).
class ParzenEstimator {
 public:
  ParzenEstimator(std::vector<double> centers, Bounds bounds)
      : centers_(std::move(centers)), bounds_(bounds) {
    const double m = static_cast<double>(centers_.size());
    sigma_ = (bounds_.hi - bounds_.lo) * std::pow(m, -0.2);
    for (double mu : centers_) {
      const double mass = NormalCdf((bounds_.hi - mu) / sigma_) - NormalCdf((bounds_.lo - mu) / sigma_);
      log_mass_.push_back(std::log(std::max(mass, 1e-300)));
    }
  }

  double sigma() const { return sigma_; }

  double LogDensity(double x) const {
    constexpr double kLogSqrt2Pi = 0.91893853320467274178;
    double peak = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(centers_.size());
    for (std::size_t j = 0; j < centers_.size(); ++j) {
      const double z = (x - centers_[j]) / sigma_;
      terms[j] = -0.5 * z * z - kLogSqrt2Pi - std::log(sigma_) - log_mass_[j];
      peak = std::max(peak, terms[j]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - peak);
    return peak + std::log(sum / static_cast<double>(centers_.size()));
  }

  double Sample(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, centers_.size() - 1);
    const double mu = centers_[pick(rng)];
    std::normal_distribution<double> normal(mu, sigma_);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double x = normal(rng);
      if (x >= bounds_.lo && x <= bounds_.hi) return x;
    }
    return std::clamp(mu, bounds_.lo, bounds_.hi);
  }

 private:
  std::vector<double> centers_;
  Bounds bounds_;
  double sigma_ = 1.0;
  std::vector<double> log_mass_;
};

// Add-one smoothed frequencies over a categorical dimension.
inline std::vector<double> SmoothedFrequencies(std::span<const std::size_t> observed,
                                               std::size_t n_choices) {
  std::vector<double> p(n_choices, 1.0);
  for (std::size_t v : observed) p[v] += 1.0;
  const double total = static_cast<double>(observed.size() + n_choices);
  for (auto& v : p) v /= total;
  return p;
}

inline std::size_t SampleCategorical(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return probs.size() - 1;
}

struct Density {
  std::vector<ParzenEstimator> continuous;
  std::vector<double> min_experts;
  std::vector<double> start_expert;

  double LogDensity(const Point& p) const {
    double total = 0.0;
    for (std::size_t d = 0; d < continuous.size(); ++d) total += continuous[d].LogDensity(p.x[d]);
    return total + std::log(min_experts[p.min_experts]) + std::log(start_expert[p.start_expert]);
  }
};

inline Density FitDensity(std::span<const Point> points, const SearchSpace& s) {
  const auto bounds = DimBounds(s);
  Density density;
  for (std::size_t d = 0; d < kContinuousDims; ++d) {
    std::vector<double> centers;
    for (const auto& p : points) centers.push_back(p.x[d]);
    density.continuous.emplace_back(std::move(centers), bounds[d]);
  }
  std::vector<std::size_t> mins, starts;
  for (const auto& p : points) {
    mins.push_back(p.min_experts);
    starts.push_back(p.start_expert);
  }
  density.min_experts = SmoothedFrequencies(mins, s.min_experts.size());
  density.start_expert = SmoothedFrequencies(starts, s.start_experts.size());
  return density;
}

}  // namespace detail

inline PolicyConfig SampleUniform(const SearchSpace& space, std::mt19937_64& rng) {
  detail::Point p;
  const auto bounds = detail::DimBounds(space);
  for (std::size_t d = 0; d < detail::kContinuousDims; ++d) {
    p.x[d] = std::uniform_real_distribution<double>(bounds[d].lo, bounds[d].hi)(rng);
  }
  p.min_experts = std::uniform_int_distribution<std::size_t>(0, space.min_experts.size() - 1)(rng);
  p.start_expert =
      std::uniform_int_distribution<std::size_t>(0, space.start_experts.size() - 1)(rng);
  return detail::Decode(p, space);
}

// One TPE proposal. Falls back to uniform sampling during the startup phase.
inline PolicyConfig TpeSuggest(std::span<const Trial> history, const SearchSpace& space,
                               std::mt19937_64& rng) {
  if (history.size() < kStartupTrials) return SampleUniform(space, rng);

  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return history[a].objective > history[b].objective;
  });
  const auto n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(kGoodQuantile * static_cast<double>(history.size()))));

  std::vector<detail::Point> good, bad;
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto point = detail::Encode(history[order[r]].config, space);
    (r < n_good ? good : bad).push_back(point);
  }
  const auto l = detail::FitDensity(good, space);
  const auto g = detail::FitDensity(bad, space);

  detail::Point best;
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kCandidates; ++i) {
    detail::Point candidate;
    for (std::size_t d = 0; d < detail::kContinuousDims; ++d) {
      candidate.x[d] = l.continuous[d].Sample(rng);
    }
    candidate.min_experts = detail::SampleCategorical(l.min_experts, rng);
    candidate.start_expert = detail::SampleCategorical(l.start_expert, rng);
    const double ratio = l.LogDensity(candidate) - g.LogDensity(candidate);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = candidate;
    }
  }
  return detail::Decode(best, space);
}

struct Measurement {
  double accuracy = 0.0;
  double mean_gflops = 0.0;
};

// Sequential study; `evaluate(config)` returns the calibration measurement.
template <typename Evaluate>
StudyResult Optimize(double budget, std::size_t n_trials, std::uint64_t seed,
                     const SearchSpace& space, Sampler sampler, Evaluate&& evaluate) {
  if (n_trials < 1) throw Error("n_trials must be at least 1");
  StudyResult study;
  study.budget = budget;
  study.seed = seed;
  study.sampler = sampler;
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < n_trials; ++t) {
    const PolicyConfig config = sampler == Sampler::kTpe ? TpeSuggest(study.all_trials, space, rng)
                                                         : SampleUniform(space, rng);
    const Measurement m = evaluate(config);
    Trial trial{t, config, Objective(m.accuracy, m.mean_gflops, budget), m.accuracy,
                m.mean_gflops};
    study.all_trials.push_back(trial);
    if (t == 0 || BetterTrial(trial, study.best_trial)) study.best_trial = trial;
  }
  return study;
}

inline Measurement Measure(const Dataset& data, std::span<const router::CascadeTrace> traces) {
  Measurement m;
  if (traces.empty()) return m;
  std::size_t hits = 0;
  double cost = 0.0;
  for (const auto& t : traces) {
    hits += t.predicted_class == data.labels[t.sample_id] ? 1 : 0;
    cost += t.cost_gflops;
  }
  m.accuracy = static_cast<double>(hits) / traces.size();
  m.mean_gflops = cost / static_cast<double>(traces.size());
  return m;
}

inline Measurement EvaluatePolicy(const Dataset& data, const PolicyContext& ctx,
                                  const PolicyConfig& config, std::span<const std::size_t> ids,
                                  const CascadeOptions& options = {}, std::size_t threads = 1) {
  const router::CascadeEngine engine(ctx, config, options);
  const auto traces = router::RunCascadeOver(data, engine, ids, threads);
  return Measure(data, traces);
}

// Objective evaluation on the calibration split, which also fed the profiles.
inline StudyResult OptimizePolicy(const Dataset& data, const PolicyContext& ctx,
                                  std::span<const std::size_t> calibration_ids, double budget,
                                  std::size_t n_trials, std::uint64_t seed, Sampler sampler,
                                  const CascadeOptions& options = {}, std::size_t threads = 1) {
  const auto space = SearchSpace::ForContext(ctx);
  return Optimize(budget, n_trials, seed, space, sampler, [&](const PolicyConfig& config) {
    return EvaluatePolicy(data, ctx, config, calibration_ids, options, threads);
  });
}

struct TestReport {
  double accuracy = 0.0;
  double mean_gflops = 0.0;
  double budget = 0.0;
  bool budget_violation = false;
};

inline TestReport MakeTestReport(const Measurement& m, double budget) {
  return {m.accuracy, m.mean_gflops, budget, BudgetViolated(m.mean_gflops, budget)};
}

inline TestReport VerifyOnTest(const Dataset& data, const PolicyContext& ctx,
                               const PolicyConfig& config, std::span<const std::size_t> test_ids,
                               double budget, const CascadeOptions& options = {},
                               std::size_t threads = 1) {
  return MakeTestReport(EvaluatePolicy(data, ctx, config, test_ids, options, threads), budget);
}

inline nlohmann::json ToJson(const Trial& t) {
  return {{"trial_id", t.trial_id},
          {"config", router::ToJson(t.config)},
          {"objective", t.objective},
          {"accuracy", t.accuracy},
          {"mean_gflops", t.mean_gflops}};
}

inline nlohmann::json ToJson(const StudyResult& s) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : s.all_trials) trials.push_back(ToJson(t));
  return {{"budget", s.budget},
          {"seed", s.seed},
          {"sampler", std::string(SamplerName(s.sampler))},
          {"best_trial", ToJson(s.best_trial)},
          {"trials", trials}};
}

inline nlohmann::json ToJson(const TestReport& r) {
  return {{"accuracy", r.accuracy},
          {"mean_gflops", r.mean_gflops},
          {"budget", r.budget},
          {"tolerance", kBudgetTolerance},
          {"budget_violation", r.budget_violation}};
}

}  // namespace cads::optimizer

#endif  // CADS_OPTIMIZER_HPP_
