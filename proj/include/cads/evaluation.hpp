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

// Baselines, report assembly, budget sweeps and ablations.

#ifndef CADS_EVALUATION_HPP_
#define CADS_EVALUATION_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cads/core.hpp"
#include "cads/optimizer.hpp"
#include "cads/parallel.hpp"
#include "cads/router.hpp"
#include "cads/split.hpp"
#include "json.hpp"

namespace cads::evaluation {

using router::CascadeOptions;
using router::PolicyConfig;
using router::PolicyContext;
using router::Weighting;

inline constexpr double kDefaultConfidenceThreshold = 0.9;

struct CostSummary {
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct EvaluationReport {
  std::string method;
  double accuracy = 0.0;
  double mean_gflops = 0.0;
  // Share of all expert calls per tier (scout, specialist, oracle).
  std::array<double, 3> tier_usage{};
  // Share of samples that consulted at least one expert of the tier.
  std::array<double, 3> tier_reach{};
  CostSummary costs;
  std::optional<double> budget;
  std::size_t n_samples = 0;
};

// Accumulates per-sample outcomes in index order.
class ReportBuilder {
 public:
  explicit ReportBuilder(const Dataset& data) : data_(&data) {}

  void Add(std::span<const ExpertId> consulted, ClassId predicted, ClassId truth, double cost) {
    hits_ += predicted == truth ? 1 : 0;
    costs_.push_back(cost);
    std::array<bool, 3> reached{};
    for (ExpertId k : consulted) {
      const auto tier = static_cast<std::size_t>(data_->tier(k));
      ++calls_[tier];
      reached[tier] = true;
    }
    for (std::size_t t = 0; t < 3; ++t) reach_[t] += reached[t] ? 1 : 0;
  }

  EvaluationReport Build(std::string method) const {
    EvaluationReport r;
    r.method = std::move(method);
    r.n_samples = costs_.size();
    if (costs_.empty()) return r;
    const double n = static_cast<double>(costs_.size());
    r.accuracy = static_cast<double>(hits_) / n;
    double total = 0.0;
    for (double c : costs_) total += c;
    r.mean_gflops = total / n;
    std::vector<double> sorted = costs_;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    r.costs = {sorted.front(),
               m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]), r.mean_gflops,
               sorted.back()};
    const double all_calls = static_cast<double>(calls_[0] + calls_[1] + calls_[2]);
    for (std::size_t t = 0; t < 3; ++t) {
      r.tier_usage[t] = all_calls > 0 ? static_cast<double>(calls_[t]) / all_calls : 0.0;
      r.tier_reach[t] = static_cast<double>(reach_[t]) / n;
    }
    return r;
  }

 private:
  const Dataset* data_;
  std::size_t hits_ = 0;
  std::vector<double> costs_;
  std::array<std::size_t, 3> calls_{};
  std::array<std::size_t, 3> reach_{};
};

// Expert ids by ascending cost, ties by id.
inline std::vector<ExpertId> CostOrder(const Dataset& data) {
  std::vector<ExpertId> order(data.n_experts());
  std::iota(order.begin(), order.end(), ExpertId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](ExpertId a, ExpertId b) { return data.cost(a) < data.cost(b); });
  return order;
}

inline double PrefixCost(const Dataset& data, std::span<const ExpertId> experts) {
  double cost = 0.0;
  for (ExpertId k : experts) cost += data.cost(k);
  return cost;
}

inline EvaluationReport RunSolo(const Dataset& data, std::span<const std::size_t> ids,
                                ExpertId k) {
  ReportBuilder builder(data);
  const ExpertId consulted[] = {k};
  for (std::size_t id : ids) {
    builder.Add(consulted, Argmax(data.matrices[k].row(id)), data.labels[id], data.cost(k));
  }
  return builder.Build("solo:" + data.manifest.experts[k].name);
}

// Softmax-confidence early exit over the cost-ordered pool.
inline EvaluationReport RunConfidenceCascade(const Dataset& data,
                                             std::span<const std::size_t> ids,
                                             double threshold = kDefaultConfidenceThreshold) {
  const auto order = CostOrder(data);
  ReportBuilder builder(data);
  std::vector<ExpertId> consulted;
  for (std::size_t id : ids) {
    consulted.clear();
    double cost = 0.0;
    ClassId predicted = 0;
    for (ExpertId k : order) {
      consulted.push_back(k);
      cost += data.cost(k);
      const auto row = data.matrices[k].row(id);
      predicted = Argmax(row);
      if (row[predicted] >= threshold) break;
    }
    builder.Add(consulted, predicted, data.labels[id], cost);
  }
  auto report = builder.Build("confidence");
  return report;
}

namespace detail {

inline EvaluationReport RunStaticEnsemble(const Dataset& data, std::span<const std::size_t> ids,
                                          std::span<const ExpertId> experts,
                                          std::span<const profiling::ExpertProfile> profiles,
                                          const PolicyConfig& cfg, Weighting weighting,
                                          std::string method) {
  ReportBuilder builder(data);
  const double cost = PrefixCost(data, experts);
  std::vector<std::span<const double>> probs(experts.size());
  for (std::size_t id : ids) {
    for (std::size_t j = 0; j < experts.size(); ++j) probs[j] = data.matrices[experts[j]].row(id);
    const auto ens = router::Ensemble(experts, probs, profiles, cfg, weighting);
    builder.Add(experts, Argmax(ens.p_ens), data.labels[id], cost);
  }
  return builder.Build(std::move(method));
}

}  // namespace detail

// One report per cost-ordered prefix; every sample consults the whole prefix
// and the prefix vectors are averaged uniformly.
inline std::vector<EvaluationReport> RunCumulativeCascade(const Dataset& data,
                                                          std::span<const std::size_t> ids) {
  const auto order = CostOrder(data);
  std::vector<EvaluationReport> reports;
  for (std::size_t size = 1; size <= order.size(); ++size) {
    reports.push_back(detail::RunStaticEnsemble(
        data, ids, std::span(order).first(size), {}, PolicyConfig{}, Weighting::kUniform,
        "cumulative:" + std::to_string(size)));
  }
  return reports;
}

// Every expert on every sample. Hybrid weighting needs calibration profiles
// and reads gamma/beta from `cfg`.
inline EvaluationReport RunFullEnsemble(const Dataset& data, std::span<const std::size_t> ids,
                                        Weighting weighting,
                                        std::span<const profiling::ExpertProfile> profiles = {},
                                        const PolicyConfig& cfg = {}) {
  if (weighting == Weighting::kHybrid && profiles.size() != data.n_experts()) {
    throw Error("hybrid weighting needs one profile per expert");
  }
  const auto order = CostOrder(data);
  return detail::RunStaticEnsemble(data, ids, order, profiles, cfg, weighting,
                                   weighting == Weighting::kHybrid ? "full:hybrid" : "full:uniform");
}

inline EvaluationReport ReportFromTraces(const Dataset& data,
                                         std::span<const router::CascadeTrace> traces,
                                         std::string method) {
  ReportBuilder builder(data);
  for (const auto& t : traces) {
    builder.Add(t.consulted, t.predicted_class, data.labels[t.sample_id], t.cost_gflops);
  }
  return builder.Build(std::move(method));
}

inline EvaluationReport RunCads(const Dataset& data, const PolicyContext& ctx,
                                const PolicyConfig& cfg, std::span<const std::size_t> ids,
                                const CascadeOptions& options = {}, std::size_t threads = 1,
                                std::vector<router::CascadeTrace>* traces_out = nullptr) {
  const router::CascadeEngine engine(ctx, cfg, options);
  auto traces = router::RunCascadeOver(data, engine, ids, threads);
  auto report = ReportFromTraces(data, traces, "cads");
  if (traces_out != nullptr) *traces_out = std::move(traces);
  return report;
}

// The cascade with its routing uncertainty swapped; APS is plain RunCads.
inline EvaluationReport RunCadsWithMeasure(conformal::UncertaintyMeasure measure,
                                           const Dataset& data, const PolicyContext& ctx,
                                           const PolicyConfig& cfg,
                                           std::span<const std::size_t> ids,
                                           CascadeOptions options = {}, std::size_t threads = 1) {
  options.measure = measure;
  auto report = RunCads(data, ctx, cfg, ids, options, threads);
  report.method = "cads:" + std::string(conformal::MeasureName(measure));
  return report;
}

// Everything a run needs: loaded data, the split and the calibration context.
struct Workspace {
  const Dataset* data = nullptr;
  SplitIndex split;
  PolicyContext ctx;

  static Workspace Build(const Dataset& data, std::uint64_t seed) {
    Workspace ws;
    ws.data = &data;
    ws.split = SplitDataset(data.n_samples(), seed);
    ws.ctx = router::BuildPolicyContext(data, ws.split.calibration_ids);
    return ws;
  }
};

struct BudgetResult {
  double budget = 0.0;
  optimizer::StudyResult study;
  optimizer::TestReport test;
  EvaluationReport report;  // CADS on the test split
  // Best calibration trial still over budget: the penalty could not be avoided.
  bool infeasible = false;
};

inline BudgetResult OptimizeAndVerify(const Workspace& ws, double budget, std::size_t trials,
                                      std::uint64_t seed,
                                      optimizer::Sampler sampler = optimizer::Sampler::kTpe,
                                      const CascadeOptions& options = {}, std::size_t threads = 1) {
  BudgetResult r;
  r.budget = budget;
  r.study = optimizer::OptimizePolicy(*ws.data, ws.ctx, ws.split.calibration_ids, budget, trials,
                                      seed, sampler, options, threads);
  r.report = RunCads(*ws.data, ws.ctx, r.study.best_trial.config, ws.split.test_ids, options,
                     threads);
  r.report.budget = budget;
  r.test = optimizer::MakeTestReport({r.report.accuracy, r.report.mean_gflops}, budget);
  r.infeasible = r.study.best_trial.mean_gflops > budget;
  return r;
}

struct SweepResult {
  std::vector<BudgetResult> budgets;
  std::vector<EvaluationReport> baselines;
};

inline std::vector<EvaluationReport> Baselines(const Workspace& ws) {
  const Dataset& data = *ws.data;
  const auto& ids = ws.split.test_ids;
  std::vector<EvaluationReport> out;
  for (ExpertId k = 0; k < data.n_experts(); ++k) out.push_back(RunSolo(data, ids, k));
  for (double threshold : {0.5, 0.7, 0.8, 0.9, 0.95, 0.99}) {
    auto r = RunConfidenceCascade(data, ids, threshold);
    std::ostringstream name;
    name << "confidence:" << threshold;
    r.method = name.str();
    out.push_back(std::move(r));
  }
  for (auto& r : RunCumulativeCascade(data, ids)) out.push_back(std::move(r));
  out.push_back(RunFullEnsemble(data, ids, Weighting::kUniform));
  out.push_back(RunFullEnsemble(data, ids, Weighting::kHybrid, ws.ctx.profiles));
  return out;
}

// Budget i is optimized with seed + i.
inline SweepResult SweepBudgets(const Workspace& ws, std::span<const double> budgets,
                                std::size_t trials, std::uint64_t seed, std::size_t threads = 1) {
  if (!std::is_sorted(budgets.begin(), budgets.end())) throw Error("budgets must be ascending");
  SweepResult sweep;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    sweep.budgets.push_back(OptimizeAndVerify(ws, budgets[i], trials, seed + i,
                                              optimizer::Sampler::kTpe, {}, threads));
  }
  sweep.baselines = Baselines(ws);
  return sweep;
}

struct AblationRow {
  std::string axis;
  std::string variant;
  EvaluationReport report;
  std::optional<PolicyConfig> config;
};

// measure: each uncertainty source tuned at the same budget.
// weighting: CADS and the full ensemble under hybrid vs uniform weights.
// exit: the tuned adaptive policy re-run with boost and difficulty disabled.
inline std::vector<AblationRow> Ablate(const Workspace& ws, const std::string& axis, double budget,
                                       std::size_t trials, std::uint64_t seed,
                                       std::size_t threads = 1) {
  std::vector<AblationRow> rows;
  auto tuned = [&](const std::string& variant, const CascadeOptions& options) {
    auto r = OptimizeAndVerify(ws, budget, trials, seed, optimizer::Sampler::kTpe, options,
                               threads);
    r.report.method = "cads:" + variant;
    rows.push_back({axis, variant, r.report, r.study.best_trial.config});
    return r;
  };
  using conformal::UncertaintyMeasure;
  if (axis == "measure") {
    for (auto m : {UncertaintyMeasure::kAps, UncertaintyMeasure::kMaxSoftmax,
                   UncertaintyMeasure::kEntropy, UncertaintyMeasure::kMargin}) {
      CascadeOptions options;
      options.measure = m;
      tuned(std::string(conformal::MeasureName(m)), options);
    }
  } else if (axis == "weighting") {
    CascadeOptions uniform;
    uniform.weighting = Weighting::kUniform;
    tuned("hybrid", {});
    tuned("uniform", uniform);
    const auto& ids = ws.split.test_ids;
    rows.push_back({axis, "full:hybrid",
                    RunFullEnsemble(*ws.data, ids, Weighting::kHybrid, ws.ctx.profiles), {}});
    rows.push_back({axis, "full:uniform", RunFullEnsemble(*ws.data, ids, Weighting::kUniform), {}});
  } else if (axis == "exit") {
    const auto adaptive = tuned("adaptive", {});
    CascadeOptions fixed;
    fixed.consensus_boost = false;
    fixed.difficulty_adjustment = false;
    auto report = RunCads(*ws.data, ws.ctx, adaptive.study.best_trial.config, ws.split.test_ids,
                          fixed, threads);
    report.method = "cads:fixed";
    report.budget = budget;
    rows.push_back({axis, "fixed", report, adaptive.study.best_trial.config});
  } else {
    throw ValidationError("unknown ablation axis '" + axis + "'");
  }
  return rows;
}

inline nlohmann::json ToJson(const EvaluationReport& r) {
  nlohmann::json j = {
      {"method", r.method},
      {"accuracy", r.accuracy},
      {"mean_gflops", r.mean_gflops},
      {"n_samples", r.n_samples},
      {"tier_usage", {{"scout", r.tier_usage[0]}, {"specialist", r.tier_usage[1]},
                      {"oracle", r.tier_usage[2]}}},
      {"tier_reach", {{"scout", r.tier_reach[0]}, {"specialist", r.tier_reach[1]},
                      {"oracle", r.tier_reach[2]}}},
      {"per_sample_costs",
       {{"min", r.costs.min}, {"median", r.costs.median}, {"mean", r.costs.mean},
        {"max", r.costs.max}}}};
  j["budget"] = r.budget ? nlohmann::json(*r.budget) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json ToJson(const BudgetResult& b) {
  return {{"budget", b.budget},
          {"infeasible", b.infeasible},
          {"best_trial", optimizer::ToJson(b.study.best_trial)},
          {"test", optimizer::ToJson(b.test)},
          {"report", ToJson(b.report)}};
}

inline constexpr const char* kCsvHeader =
    "budget,method,accuracy,mean_gflops,scout_share,specialist_share,oracle_share";

inline std::string CsvNumber(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

inline std::string CsvRow(const EvaluationReport& r) {
  std::string row = r.budget ? CsvNumber(*r.budget) : std::string{};
  row += "," + r.method + "," + CsvNumber(r.accuracy) + "," + CsvNumber(r.mean_gflops);
  for (double share : r.tier_usage) row += "," + CsvNumber(share);
  return row;
}

inline std::string ToCsv(std::span<const EvaluationReport> reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : reports) out += CsvRow(r) + "\n";
  return out;
}

}  // namespace cads::evaluation

#endif  // CADS_EVALUATION_HPP_
