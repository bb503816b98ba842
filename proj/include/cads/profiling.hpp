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

// Calibration-split statistics for each expert and expert pair: accuracy,
// per-class accuracy, efficiency, class difficulty and complementarity.

#ifndef CADS_PROFILING_HPP_
#define CADS_PROFILING_HPP_

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "cads/core.hpp"
#include "json.hpp"

namespace cads::profiling {

struct ExpertProfile {
  ExpertId expert_id = 0;
  double cost_gflops = 0.0;
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_support;
  // Set for classes with zero calibration support; their accuracy reads 0.
  std::vector<bool> unsupported_class;
  double efficiency = 0.0;
};

struct ClassDifficulty {
  std::vector<double> difficulty;
};

// Pairwise cells need this many conditioning samples to be trusted.
inline constexpr std::size_t kMinPairwiseSupport = 5;

// Comp(A,B) = P[B right | A wrong] globally and per (truth, A's prediction)
// class pair.
class ComplementarityTable {
 public:
  struct PairCell {
    std::vector<std::uint32_t> support;  // [A]: samples with y=c1 and A predicting c2
    std::vector<std::uint32_t> correct;  // [A*K+B]: ... on which B is right
  };

  ComplementarityTable() = default;
  ComplementarityTable(std::size_t n_experts, std::size_t n_classes,
                       std::size_t min_pairwise_support = kMinPairwiseSupport)
      : n_experts_(n_experts),
        n_classes_(n_classes),
        min_support_(min_pairwise_support),
        errors_(n_experts, 0),
        rescued_(n_experts * n_experts, 0) {}

  std::size_t n_experts() const { return n_experts_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t min_pairwise_support() const { return min_support_; }

  // Zero, and unsupported, when A never errs.
  double Global(ExpertId a, ExpertId b) const {
    return errors_[a] == 0 ? 0.0
                           : static_cast<double>(rescued_[a * n_experts_ + b]) / errors_[a];
  }
  bool GlobalSupported(ExpertId a) const { return errors_[a] > 0; }
  std::size_t ErrorCount(ExpertId a) const { return errors_[a]; }

  std::size_t PairwiseSupport(ClassId truth, ClassId predicted, ExpertId a) const {
    const auto* cell = Find(truth, predicted);
    return cell == nullptr ? 0 : cell->support[a];
  }

  // Conditioned on y = truth and A predicting `predicted`. Empty when the
  // conditioning event has fewer than min_pairwise_support samples.
  std::optional<double> Pairwise(ClassId truth, ClassId predicted, ExpertId a,
                                 ExpertId b) const {
    const auto* cell = Find(truth, predicted);
    if (cell == nullptr || cell->support[a] < min_support_ || cell->support[a] == 0) {
      return std::nullopt;
    }
    return static_cast<double>(cell->correct[a * n_experts_ + b]) / cell->support[a];
  }

  // Raw value with the zero-denominator convention, ignoring the support floor.
  double PairwiseRaw(ClassId truth, ClassId predicted, ExpertId a, ExpertId b) const {
    const auto* cell = Find(truth, predicted);
    if (cell == nullptr || cell->support[a] == 0) return 0.0;
    return static_cast<double>(cell->correct[a * n_experts_ + b]) / cell->support[a];
  }

  const std::unordered_map<std::size_t, PairCell>& cells() const { return pairwise_; }

  // Accumulates one calibration sample given every expert's argmax.
  void Add(ClassId truth, std::span<const ClassId> predicted) {
    for (ExpertId a = 0; a < n_experts_; ++a) {
      if (predicted[a] == truth) continue;
      ++errors_[a];
      PairCell& cell = CellFor(truth, predicted[a]);
      ++cell.support[a];
      for (ExpertId b = 0; b < n_experts_; ++b) {
        if (predicted[b] != truth) continue;
        ++rescued_[a * n_experts_ + b];
        ++cell.correct[a * n_experts_ + b];
      }
    }
  }

 private:
  std::size_t Key(ClassId c1, ClassId c2) const { return c1 * n_classes_ + c2; }

  const PairCell* Find(ClassId c1, ClassId c2) const {
    const auto it = pairwise_.find(Key(c1, c2));
    return it == pairwise_.end() ? nullptr : &it->second;
  }

  PairCell& CellFor(ClassId c1, ClassId c2) {
    auto [it, inserted] = pairwise_.try_emplace(Key(c1, c2));
    if (inserted) {
      it->second.support.assign(n_experts_, 0);
      it->second.correct.assign(n_experts_ * n_experts_, 0);
    }
    return it->second;
  }

  std::size_t n_experts_ = 0;
  std::size_t n_classes_ = 0;
  std::size_t min_support_ = kMinPairwiseSupport;
  std::vector<std::uint32_t> errors_;
  std::vector<std::uint32_t> rescued_;
  std::unordered_map<std::size_t, PairCell> pairwise_;
};

// argmax of every expert on every listed sample: result[k][j] for ids[j].
inline std::vector<std::vector<ClassId>> ArgmaxTable(const Dataset& data,
                                                     std::span<const std::size_t> ids) {
  std::vector<std::vector<ClassId>> out(data.n_experts(), std::vector<ClassId>(ids.size()));
  for (ExpertId k = 0; k < data.n_experts(); ++k) {
    for (std::size_t j = 0; j < ids.size(); ++j) out[k][j] = Argmax(data.matrices[k].row(ids[j]));
  }
  return out;
}

inline std::vector<ExpertProfile> BuildProfiles(const Dataset& data,
                                                std::span<const std::size_t> ids) {
  if (ids.empty()) throw Error("cannot profile on an empty calibration set");
  const std::size_t n_classes = data.n_classes();
  std::vector<ExpertProfile> profiles;
  for (ExpertId k = 0; k < data.n_experts(); ++k) {
    ExpertProfile p;
    p.expert_id = k;
    p.cost_gflops = data.cost(k);
    p.per_class_support.assign(n_classes, 0);
    std::vector<std::size_t> hits(n_classes, 0);
    std::size_t total_hits = 0;
    for (std::size_t id : ids) {
      const ClassId y = data.labels[id];
      ++p.per_class_support[y];
      if (Argmax(data.matrices[k].row(id)) == y) {
        ++hits[y];
        ++total_hits;
      }
    }
    p.accuracy = static_cast<double>(total_hits) / ids.size();
    p.per_class_accuracy.assign(n_classes, 0.0);
    p.unsupported_class.assign(n_classes, false);
    for (ClassId c = 0; c < n_classes; ++c) {
      if (p.per_class_support[c] == 0) {
        p.unsupported_class[c] = true;
      } else {
        p.per_class_accuracy[c] = static_cast<double>(hits[c]) / p.per_class_support[c];
      }
    }
    p.efficiency = p.accuracy / p.cost_gflops;
    profiles.push_back(std::move(p));
  }
  return profiles;
}

// d_c = 1 - mean over experts of per-class accuracy, clamped to [0,1].
inline ClassDifficulty BuildClassDifficulty(std::span<const ExpertProfile> profiles) {
  if (profiles.empty()) throw Error("class difficulty needs at least one profile");
  const std::size_t n_classes = profiles.front().per_class_accuracy.size();
  ClassDifficulty d;
  d.difficulty.assign(n_classes, 0.0);
  for (ClassId c = 0; c < n_classes; ++c) {
    double mean = 0.0;
    for (const auto& p : profiles) mean += p.per_class_accuracy[c];
    mean /= static_cast<double>(profiles.size());
    d.difficulty[c] = std::clamp(1.0 - mean, 0.0, 1.0);
  }
  return d;
}

inline ComplementarityTable BuildComplementarity(
    const Dataset& data, std::span<const std::size_t> ids,
    std::size_t min_pairwise_support = kMinPairwiseSupport) {
  ComplementarityTable table(data.n_experts(), data.n_classes(), min_pairwise_support);
  std::vector<ClassId> predicted(data.n_experts());
  for (std::size_t id : ids) {
    for (ExpertId k = 0; k < data.n_experts(); ++k) predicted[k] = Argmax(data.matrices[k].row(id));
    table.Add(data.labels[id], predicted);
  }
  return table;
}

inline nlohmann::json ToJson(const ExpertProfile& p) {
  std::vector<std::size_t> unsupported;
  for (std::size_t c = 0; c < p.unsupported_class.size(); ++c) {
    if (p.unsupported_class[c]) unsupported.push_back(c);
  }
  return {{"expert", p.expert_id},
          {"gflops", p.cost_gflops},
          {"accuracy", p.accuracy},
          {"efficiency", p.efficiency},
          {"per_class_accuracy", p.per_class_accuracy},
          {"per_class_support", p.per_class_support},
          {"unsupported_classes", unsupported}};
}

inline nlohmann::json ToJson(const ComplementarityTable& t) {
  const std::size_t k = t.n_experts();
  nlohmann::json global = nlohmann::json::array();
  for (ExpertId a = 0; a < k; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (ExpertId b = 0; b < k; ++b) row.push_back(t.Global(a, b));
    global.push_back(std::move(row));
  }
  std::vector<std::size_t> errors(k);
  for (ExpertId a = 0; a < k; ++a) errors[a] = t.ErrorCount(a);

  // Sorted by key so the bundle is byte-stable.
  std::vector<std::size_t> keys;
  for (const auto& [key, cell] : t.cells()) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  nlohmann::json pairwise = nlohmann::json::array();
  for (std::size_t key : keys) {
    const auto& cell = t.cells().at(key);
    const ClassId truth = key / t.n_classes(), predicted = key % t.n_classes();
    nlohmann::json values = nlohmann::json::array();
    for (ExpertId a = 0; a < k; ++a) {
      nlohmann::json row = nlohmann::json::array();
      for (ExpertId b = 0; b < k; ++b) row.push_back(t.PairwiseRaw(truth, predicted, a, b));
      values.push_back(std::move(row));
    }
    pairwise.push_back({{"truth", truth},
                        {"predicted", predicted},
                        {"support", cell.support},
                        {"values", values}});
  }
  return {{"global", global},
          {"error_counts", errors},
          {"min_pairwise_support", t.min_pairwise_support()},
          {"pairwise", pairwise}};
}

}  // namespace cads::profiling

#endif  // CADS_PROFILING_HPP_
