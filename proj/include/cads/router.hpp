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

// The sequential cascade: open with a scout, categorize the sample by the
// size of the latest expert's conformal set, pick the next expert by
// complementarity and efficiency, aggregate with hybrid weights and exit once
// the adjusted threshold is met.

#ifndef CADS_ROUTER_HPP_
#define CADS_ROUTER_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cads/conformal.hpp"
#include "cads/core.hpp"
#include "cads/parallel.hpp"
#include "cads/profiling.hpp"
#include "json.hpp"

namespace cads::router {

using conformal::PredictionSet;
using conformal::UncertaintyMeasure;
using profiling::ClassDifficulty;
using profiling::ComplementarityTable;
using profiling::ExpertProfile;

inline constexpr double kEpsilon = 0.01;
inline constexpr double kGlobalMix = 0.6;
inline constexpr double kLocalMix = 0.4;
inline constexpr double kAlphaCap = 0.98;
inline constexpr double kConsensusFraction = 0.8;
inline constexpr double kDifficultyScale = 0.1;

struct PolicyConfig {
  double zeta = 0.1;
  double alpha_singleton = 0.9;
  double alpha_binary = 0.8;
  double alpha_difficult = 0.7;
  double w = 0.5;
  double gamma = 1.0;
  double beta = 1.0;
  double delta = 0.02;
  double delta_max = 0.05;
  std::size_t min_experts = 1;
  ExpertId start_expert = 0;

  bool operator==(const PolicyConfig&) const = default;
};

enum class Category { kSingleton, kBinary, kDifficult };
enum class ExitReason { kConfidenceExit, kAllExpertsUsed };
enum class Weighting { kHybrid, kUniform };
enum class Granularity { kPairwise, kGlobal };

inline std::string_view CategoryName(Category c) {
  switch (c) {
    case Category::kSingleton:
      return "singleton";
    case Category::kBinary:
      return "binary";
    case Category::kDifficult:
      return "difficult";
  }
  return "unknown";
}

inline std::string_view ExitReasonName(ExitReason r) {
  return r == ExitReason::kConfidenceExit ? "confidence_exit" : "all_experts_used";
}

// Switches used by the ablation harness. Defaults are the full method.
struct CascadeOptions {
  UncertaintyMeasure measure = UncertaintyMeasure::kAps;
  Weighting weighting = Weighting::kHybrid;
  Granularity granularity = Granularity::kPairwise;
  bool consensus_boost = true;
  bool difficulty_adjustment = true;
};

// Uncertainty bucket edges for the non-APS measures.
inline constexpr double kSingletonBucket = 0.1;
inline constexpr double kBinaryBucket = 0.35;

struct CascadeTrace {
  std::size_t sample_id = 0;
  std::vector<ExpertId> consulted;
  ExitReason exit_reason = ExitReason::kAllExpertsUsed;
  std::vector<Category> category_history;
  std::vector<double> final_distribution;
  ClassId predicted_class = 0;
  double cost_gflops = 0.0;

  bool operator==(const CascadeTrace&) const = default;
};

struct EnsembleResult {
  std::vector<double> p_ens;
  ClassId c_star = 0;
  std::vector<double> weights;  // normalized, one per consulted expert
};

// Calibration-split state the cascade reads. Immutable once built.
struct PolicyContext {
  std::vector<ExpertProfile> profiles;
  ClassDifficulty difficulty;
  ComplementarityTable table;
  std::vector<conformal::ScoreCalibrator> calibrators;
  std::vector<double> costs;
  std::vector<Tier> tiers;
  std::size_t n_classes = 0;

  std::size_t n_experts() const { return costs.size(); }

  std::vector<ExpertId> scouts() const {
    std::vector<ExpertId> out;
    for (ExpertId k = 0; k < tiers.size(); ++k) {
      if (tiers[k] == Tier::kScout) out.push_back(k);
    }
    return out;
  }

  double max_efficiency() const {
    double best = 0.0;
    for (const auto& p : profiles) best = std::max(best, p.efficiency);
    return best;
  }

  std::vector<double> QHats(double zeta) const {
    std::vector<double> q(calibrators.size());
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = calibrators[k].Calibrate(zeta).q_hat;
    return q;
  }
};

inline PolicyContext BuildPolicyContext(const Dataset& data,
                                        std::span<const std::size_t> calibration_ids) {
  PolicyContext ctx;
  ctx.profiles = profiling::BuildProfiles(data, calibration_ids);
  ctx.difficulty = profiling::BuildClassDifficulty(ctx.profiles);
  ctx.table = profiling::BuildComplementarity(data, calibration_ids);
  for (ExpertId k = 0; k < data.n_experts(); ++k) {
    std::vector<double> scores;
    scores.reserve(calibration_ids.size());
    for (std::size_t id : calibration_ids) {
      scores.push_back(conformal::ApsScore(data.matrices[k].row(id), data.labels[id]));
    }
    ctx.calibrators.emplace_back(k, std::move(scores));
    ctx.costs.push_back(data.cost(k));
    ctx.tiers.push_back(data.tier(k));
  }
  ctx.n_classes = data.n_classes();
  return ctx;
}

// The scout with the highest calibration efficiency (lowest id on ties).
inline ExpertId DefaultStartExpert(const PolicyContext& ctx) {
  const auto scouts = ctx.scouts();
  if (scouts.empty()) throw ValidationError("expert pool has no scout-tier expert");
  ExpertId best = scouts.front();
  for (ExpertId k : scouts) {
    if (ctx.profiles[k].efficiency > ctx.profiles[best].efficiency) best = k;
  }
  return best;
}

inline void ValidatePolicy(const PolicyConfig& cfg, const PolicyContext& ctx) {
  if (!(cfg.zeta > 0.0 && cfg.zeta < 1.0)) throw ValidationError("zeta must lie in (0,1)");
  if (cfg.start_expert >= ctx.n_experts()) throw ValidationError("start_expert out of range");
  if (ctx.tiers[cfg.start_expert] != Tier::kScout) {
    throw ValidationError("start_expert must be a scout-tier expert");
  }
  if (cfg.min_experts < 1) throw ValidationError("min_experts must be at least 1");
  if (!(cfg.gamma >= 0.0 && cfg.beta > 0.0 && cfg.delta >= 0.0 && cfg.delta_max >= 0.0)) {
    throw ValidationError("weight exponents and boosts must be non-negative");
  }
}

inline std::pair<Category, double> Categorize(std::size_t set_size, const PolicyConfig& cfg) {
  if (set_size == 0) throw Error("prediction sets are never empty");
  if (set_size == 1) return {Category::kSingleton, cfg.alpha_singleton};
  if (set_size == 2) return {Category::kBinary, cfg.alpha_binary};
  return {Category::kDifficult, cfg.alpha_difficult};
}

inline Category BucketUncertainty(double u) {
  if (u < kSingletonBucket) return Category::kSingleton;
  if (u < kBinaryBucket) return Category::kBinary;
  return Category::kDifficult;
}

// Comp(current, candidate) as seen through the latest prediction set.
inline double ComplementarityFor(ExpertId current, ExpertId candidate,
                                 const PredictionSet& latest_set,
                                 const ComplementarityTable& table,
                                 Granularity granularity = Granularity::kPairwise) {
  if (granularity == Granularity::kPairwise && latest_set.size() == 2) {
    const ClassId c1 = latest_set.members[0], c2 = latest_set.members[1];
    const auto forward = table.Pairwise(c1, c2, current, candidate);
    const auto backward = table.Pairwise(c2, c1, current, candidate);
    if (forward || backward) {
      return std::max(forward.value_or(0.0), backward.value_or(0.0));
    }
  }
  return table.Global(current, candidate);
}

// argmax over `unused` of w * Comp + (1 - w) * eff / max_eff; lowest id wins ties.
inline ExpertId SelectNextExpert(ExpertId current, const PredictionSet& latest_set,
                                 std::span<const ExpertId> unused,
                                 const ComplementarityTable& table,
                                 std::span<const ExpertProfile> profiles, double w,
                                 Granularity granularity = Granularity::kPairwise) {
  if (unused.empty()) throw Error("no unused experts to select from");
  double max_eff = 0.0;
  for (const auto& p : profiles) max_eff = std::max(max_eff, p.efficiency);
  ExpertId best = unused.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (ExpertId candidate : unused) {
    if (candidate == current) throw Error("Comp(A,A) must never be consulted");
    const double eff_norm = max_eff > 0.0 ? profiles[candidate].efficiency / max_eff : 0.0;
    const double score =
        w * ComplementarityFor(current, candidate, latest_set, table, granularity) +
        (1.0 - w) * eff_norm;
    if (score > best_score || (score == best_score && candidate < best)) {
      best = candidate;
      best_score = score;
    }
  }
  return best;
}

// Hybrid weighted ensemble over the consulted experts. probs[j] belongs to
// consulted[j].
inline EnsembleResult Ensemble(std::span<const ExpertId> consulted,
                               std::span<const std::span<const double>> probs,
                               std::span<const ExpertProfile> profiles,
                               const PolicyConfig& cfg,
                               Weighting weighting = Weighting::kHybrid) {
  if (consulted.empty()) throw Error("ensemble needs at least one expert");
  const std::size_t n = consulted.size();
  const std::size_t n_classes = probs.front().size();
  EnsembleResult out;
  std::vector<double> raw(n, 1.0);

  if (weighting == Weighting::kHybrid) {
    std::vector<double> global(n);
    for (std::size_t j = 0; j < n; ++j) {
      global[j] = std::pow(profiles[consulted[j]].accuracy, cfg.gamma);
    }
    std::vector<double> aggregate(n_classes, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (ClassId c = 0; c < n_classes; ++c) aggregate[c] += global[j] * probs[j][c];
    }
    out.c_star = Argmax(aggregate);

    std::vector<double> local(n);
    double local_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      local[j] =
          std::pow(profiles[consulted[j]].per_class_accuracy[out.c_star] + kEpsilon, cfg.beta);
      local_sum += local[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      raw[j] = kGlobalMix * global[j] + kLocalMix * local[j] / local_sum;
    }
  }

  double total = 0.0;
  for (double w : raw) total += w;
  out.weights.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.weights[j] = raw[j] / total;

  out.p_ens.assign(n_classes, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (ClassId c = 0; c < n_classes; ++c) out.p_ens[c] += out.weights[j] * probs[j][c];
  }
  if (weighting == Weighting::kUniform) out.c_star = Argmax(out.p_ens);
  return out;
}

inline double ExitThreshold(double alpha_base, std::size_t n_consulted, double agreement_fraction,
                            double d_cstar, const PolicyConfig& cfg,
                            const CascadeOptions& options = {}) {
  double alpha = alpha_base;
  if (options.consensus_boost && agreement_fraction > kConsensusFraction) {
    alpha -= std::min(cfg.delta * static_cast<double>(n_consulted - 1), cfg.delta_max);
  }
  if (options.difficulty_adjustment) alpha += (d_cstar - 0.5) * kDifficultyScale;
  return std::min(alpha, kAlphaCap);
}

// Share of consulted experts voting for the modal argmax class.
inline double AgreementFraction(std::span<const ClassId> votes, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  std::size_t modal = 0;
  for (ClassId v : votes) modal = std::max(modal, ++counts[v]);
  return static_cast<double>(modal) / static_cast<double>(votes.size());
}

// Binds a policy to its calibration context. Run() is pure and reentrant.
class CascadeEngine {
 public:
  CascadeEngine(const PolicyContext& ctx, PolicyConfig cfg, CascadeOptions options = {})
      : ctx_(&ctx), cfg_(cfg), options_(options), q_hat_(ctx.QHats(cfg.zeta)) {
    ValidatePolicy(cfg_, ctx);
  }

  const PolicyConfig& config() const { return cfg_; }
  const CascadeOptions& options() const { return options_; }
  const std::vector<double>& q_hats() const { return q_hat_; }

  // `probs_of(k)` yields expert k's probability vector for this sample. It is
  // invoked at most once per expert and only for experts actually consulted.
  // The returned view must stay valid for the whole call.
  template <typename Source>
  CascadeTrace Run(Source&& probs_of, std::size_t sample_id = 0) const {
    static_assert(!std::is_same_v<std::invoke_result_t<Source&, ExpertId>, std::vector<double>>,
                  "source must return a view into storage that outlives Run()");
    const PolicyContext& ctx = *ctx_;
    const std::size_t n_experts = ctx.n_experts();
    CascadeTrace trace;
    trace.sample_id = sample_id;

    std::vector<ExpertId> unused;
    for (ExpertId k = 0; k < n_experts; ++k) {
      if (k != cfg_.start_expert) unused.push_back(k);
    }
    std::vector<std::span<const double>> probs;
    std::vector<ClassId> votes;
    ExpertId current = cfg_.start_expert;

    while (true) {
      trace.consulted.push_back(current);
      trace.cost_gflops += ctx.costs[current];
      probs.push_back(std::span<const double>(probs_of(current)));
      votes.push_back(Argmax(probs.back()));

      const PredictionSet latest = Uncertainty(probs.back(), current);
      const auto [category, alpha_base] = CategorizeSet(latest);
      trace.category_history.push_back(category);

      EnsembleResult ens = Ensemble(trace.consulted, probs, ctx.profiles, cfg_, options_.weighting);
      const std::size_t n = trace.consulted.size();
      const double alpha_final =
          ExitThreshold(alpha_base, n, AgreementFraction(votes, ctx.n_classes),
                        ctx.difficulty.difficulty[ens.c_star], cfg_, options_);
      const double confidence = *std::max_element(ens.p_ens.begin(), ens.p_ens.end());
      const bool stable = n < 2 || votes[n - 1] == votes[n - 2];

      if (n >= cfg_.min_experts && confidence >= alpha_final && stable) {
        trace.exit_reason = ExitReason::kConfidenceExit;
      } else if (unused.empty()) {
        trace.exit_reason = ExitReason::kAllExpertsUsed;
      } else {
        const ExpertId next = SelectNextExpert(current, latest, unused, ctx.table, ctx.profiles,
                                               cfg_.w, options_.granularity);
        unused.erase(std::find(unused.begin(), unused.end(), next));
        current = next;
        continue;
      }
      trace.predicted_class = Argmax(ens.p_ens);
      trace.final_distribution = std::move(ens.p_ens);
      return trace;
    }
  }

 private:
  // APS builds the conformal set; other measures map their bucket onto the
  // top-1/2/3 classes so selection sees a set of matching size.
  PredictionSet Uncertainty(std::span<const double> p, ExpertId k) const {
    if (options_.measure == UncertaintyMeasure::kAps) {
      return conformal::BuildPredictionSet(p, q_hat_[k]);
    }
    const Category bucket = BucketUncertainty(conformal::AlternativeUncertainty(p, options_.measure));
    const std::size_t size = std::min<std::size_t>(static_cast<std::size_t>(bucket) + 1, p.size());
    PredictionSet set;
    const auto order = conformal::RankClasses(p);
    set.members.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
    return set;
  }

  std::pair<Category, double> CategorizeSet(const PredictionSet& set) const {
    return Categorize(set.size(), cfg_);
  }

  const PolicyContext* ctx_;
  PolicyConfig cfg_;
  CascadeOptions options_;
  std::vector<double> q_hat_;
};

// Runs the cascade over every listed sample of a loaded dataset.
inline std::vector<CascadeTrace> RunCascadeOver(const Dataset& data, const CascadeEngine& engine,
                                                std::span<const std::size_t> ids,
                                                std::size_t threads = 1) {
  std::vector<CascadeTrace> traces(ids.size());
  ParallelFor(ids.size(), threads, [&](std::size_t j) {
    const std::size_t id = ids[j];
    traces[j] = engine.Run([&](ExpertId k) { return data.matrices[k].row(id); }, id);
  });
  return traces;
}

inline nlohmann::json ToJson(const PolicyConfig& c) {
  return {{"zeta", c.zeta},
          {"alpha_singleton", c.alpha_singleton},
          {"alpha_binary", c.alpha_binary},
          {"alpha_difficult", c.alpha_difficult},
          {"w", c.w},
          {"gamma", c.gamma},
          {"beta", c.beta},
          {"delta", c.delta},
          {"delta_max", c.delta_max},
          {"min_experts", c.min_experts},
          {"start_expert", c.start_expert},
          {"epsilon", kEpsilon}};
}

inline PolicyConfig PolicyFromJson(const nlohmann::json& j) {
  PolicyConfig c;
  try {
    c.zeta = j.value("zeta", c.zeta);
    c.alpha_singleton = j.value("alpha_singleton", c.alpha_singleton);
    c.alpha_binary = j.value("alpha_binary", c.alpha_binary);
    c.alpha_difficult = j.value("alpha_difficult", c.alpha_difficult);
    c.w = j.value("w", c.w);
    c.gamma = j.value("gamma", c.gamma);
    c.beta = j.value("beta", c.beta);
    c.delta = j.value("delta", c.delta);
    c.delta_max = j.value("delta_max", c.delta_max);
    c.min_experts = j.value("min_experts", c.min_experts);
    c.start_expert = j.value("start_expert", c.start_expert);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed policy config: ") + ex.what());
  }
  return c;
}

inline nlohmann::json ToJson(const CascadeTrace& t) {
  std::vector<std::string> categories;
  for (Category c : t.category_history) categories.emplace_back(CategoryName(c));
  return {{"sample_id", t.sample_id},
          {"consulted", t.consulted},
          {"exit_reason", std::string(ExitReasonName(t.exit_reason))},
          {"category_history", categories},
          {"final_distribution", t.final_distribution},
          {"predicted_class", t.predicted_class},
          {"cost_gflops", t.cost_gflops}};
}

}  // namespace cads::router

#endif  // CADS_ROUTER_HPP_
