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

// Seeded generator for synthetic expert pools: perturbed one-hot softmax
// outputs whose argmax accuracy is controlled per expert and per class.

#ifndef CADS_SYNTHETIC_HPP_
#define CADS_SYNTHETIC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cads/core.hpp"

namespace cads::synthetic {

struct SyntheticExpertSpec {
  std::string name;
  Tier tier = Tier::kScout;
  double cost_gflops = 1.0;
  double params_millions = 0.0;
  // Argmax accuracy on hard samples of classes outside `strong_classes`.
  double base_accuracy = 0.7;
  std::vector<ClassId> strong_classes;
  double strong_accuracy = 0.9;
  // Errors on a true class listed here always land on the mapped class.
  std::map<ClassId, ClassId> confusions;
};

struct SyntheticPoolSpec {
  std::string dataset = "synthetic";
  std::size_t n_classes = 10;
  std::size_t n_samples = 20000;
  // Easy samples are answered correctly and near one-hot by every expert.
  double easy_fraction = 0.0;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  std::vector<SyntheticExpertSpec> experts;

  std::size_t n_experts() const { return experts.size(); }
};

// Logit shaping. The target class always wins the argmax; wrong answers are
// less confident and keep the truth as a strong runner-up.
inline constexpr double kCorrectMargin = 4.0;
inline constexpr double kWrongMargin = 2.0;
inline constexpr double kTruthRunnerUp = 0.6;
inline constexpr double kMinLogitGap = 0.05;
inline constexpr double kEasyTemperatureScale = 0.15;

inline void ValidateSpec(const SyntheticPoolSpec& spec) {
  if (spec.experts.empty()) throw ValidationError("synthetic pool needs at least one expert");
  if (spec.n_classes < 2) throw ValidationError("synthetic pool needs at least 2 classes");
  if (spec.n_samples < 1) throw ValidationError("synthetic pool needs at least 1 sample");
  if (!(spec.easy_fraction >= 0.0 && spec.easy_fraction <= 1.0)) {
    throw ValidationError("easy_fraction must lie in [0,1]");
  }
  if (!(spec.temperature > 0.0)) throw ValidationError("temperature must be positive");
  const double chance = 1.0 / static_cast<double>(spec.n_classes);
  for (std::size_t k = 0; k < spec.experts.size(); ++k) {
    const auto& e = spec.experts[k];
    if (!(e.cost_gflops > 0.0)) throw ValidationError("cost must be positive", e.name);
    for (double a : {e.base_accuracy, e.strong_accuracy}) {
      if (!(a > chance && a <= 1.0)) throw ValidationError("accuracy must lie in (1/C, 1]", e.name);
    }
    for (ClassId c : e.strong_classes) {
      if (c >= spec.n_classes) throw ValidationError("strong class out of range", e.name);
    }
    for (const auto& [from, to] : e.confusions) {
      if (from >= spec.n_classes || to >= spec.n_classes || from == to) {
        throw ValidationError("invalid confusion mapping", e.name);
      }
    }
    if (k > 0) {
      const auto& prev = spec.experts[k - 1];
      if (e.tier < prev.tier) throw ValidationError("experts must be listed by tier", e.name);
      if (e.tier != prev.tier && !(e.cost_gflops > prev.cost_gflops)) {
        throw ValidationError("cost must increase with tier", e.name);
      }
    }
  }
}

inline Dataset GeneratePool(const SyntheticPoolSpec& spec) {
  ValidateSpec(spec);
  const std::size_t n = spec.n_samples, n_classes = spec.n_classes, n_experts = spec.n_experts();
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<ClassId> pick_class(0, n_classes - 1);
  std::uniform_int_distribution<ClassId> pick_other(0, n_classes - 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::vector<bool>> strong(n_experts, std::vector<bool>(n_classes, false));
  for (std::size_t k = 0; k < n_experts; ++k) {
    for (ClassId c : spec.experts[k].strong_classes) strong[k][c] = true;
  }

  Dataset data;
  data.labels.resize(n);
  std::vector<std::vector<float>> raw(n_experts, std::vector<float>(n * n_classes));
  std::vector<double> logits(n_classes);

  for (std::size_t i = 0; i < n; ++i) {
    const ClassId y = pick_class(rng);
    data.labels[i] = y;
    const bool easy = unit(rng) < spec.easy_fraction;
    const double temperature = easy ? spec.temperature * kEasyTemperatureScale : spec.temperature;
    for (std::size_t k = 0; k < n_experts; ++k) {
      const auto& e = spec.experts[k];
      const double accuracy = strong[k][y] ? e.strong_accuracy : e.base_accuracy;
      const bool correct = easy || unit(rng) < accuracy;
      ClassId target = y;
      if (!correct) {
        if (const auto it = e.confusions.find(y); it != e.confusions.end()) {
          target = it->second;
        } else {
          target = pick_other(rng);
          if (target >= y) ++target;
        }
      }
      for (auto& z : logits) z = noise(rng);
      logits[target] += correct ? kCorrectMargin : kWrongMargin;
      if (!correct) logits[y] += kTruthRunnerUp;

      // Force the target to win by a visible gap.
      const auto best = std::max_element(logits.begin(), logits.end());
      std::swap(*best, logits[target]);
      double runner_up = -std::numeric_limits<double>::infinity();
      for (ClassId c = 0; c < n_classes; ++c) {
        if (c != target) runner_up = std::max(runner_up, logits[c]);
      }
      logits[target] = std::max(logits[target], runner_up + kMinLogitGap);

      const double top = logits[target];
      double sum = 0.0;
      for (auto& z : logits) {
        z = std::exp((z - top) / temperature);
        sum += z;
      }
      float* row = raw[k].data() + i * n_classes;
      for (ClassId c = 0; c < n_classes; ++c) row[c] = static_cast<float>(logits[c] / sum);
    }
  }

  data.manifest.dataset = spec.dataset;
  data.manifest.labels_path = "labels.txt";
  for (std::size_t k = 0; k < n_experts; ++k) {
    const auto& e = spec.experts[k];
    data.manifest.experts.push_back({e.name, e.tier, e.params_millions, e.cost_gflops,
                                     "expert_" + std::to_string(k) + ".cadspred", "synthetic"});
    data.matrices.emplace_back(n, n_classes, std::move(raw[k]), e.name);
  }
  ValidateDataset(data);
  return data;
}

struct CatalogEntry {
  const char* name;
  Tier tier;
  double params_millions;
  double gflops;
};

// Reference pool of twelve backbones with their published per-sample cost.
inline constexpr std::array<CatalogEntry, 12> kExpertCatalog = {{
    {"MobileNetV3 Small", Tier::kScout, 2.5, 0.01},
    {"EfficientNet-Lite0", Tier::kScout, 4.7, 0.04},
    {"GhostNet", Tier::kScout, 5.2, 0.05},
    {"MobileViT", Tier::kSpecialist, 5.6, 0.50},
    {"ConvNeXt V2 Atto", Tier::kSpecialist, 3.7, 0.55},
    {"EVA-02 Tiny", Tier::kSpecialist, 5.7, 1.70},
    {"EfficientNetV2-S", Tier::kSpecialist, 21.5, 2.80},
    {"Swin V2 Tiny", Tier::kOracle, 28.3, 4.50},
    {"DINOv2 ViT-Small", Tier::kOracle, 21.0, 4.60},
    {"MaxViT Tiny", Tier::kOracle, 30.9, 5.00},
    {"ConvNeXt V2 Base", Tier::kOracle, 89.0, 15.4},
    {"DINOv2 ViT-Base", Tier::kOracle, 86.0, 17.6},
}};

// Pool drawn from the catalog: evenly spaced entries (geometric costs past
// twelve experts), accuracy rising with cost, and each expert strong on a
// rotating half of the classes.
inline SyntheticPoolSpec MakePoolSpec(std::size_t n_experts, std::size_t n_classes,
                                      std::size_t n_samples, double easy_fraction,
                                      std::uint64_t seed) {
  if (n_experts < 1) throw ValidationError("synthetic pool needs at least one expert");
  SyntheticPoolSpec spec;
  spec.n_classes = n_classes;
  spec.n_samples = n_samples;
  spec.easy_fraction = easy_fraction;
  spec.seed = seed;
  const double chance = 1.0 / static_cast<double>(n_classes);
  for (std::size_t k = 0; k < n_experts; ++k) {
    const double t = n_experts == 1 ? 0.0 : static_cast<double>(k) / (n_experts - 1);
    SyntheticExpertSpec e;
    if (n_experts <= kExpertCatalog.size()) {
      const auto& entry = kExpertCatalog[static_cast<std::size_t>(std::lround(t * 11.0))];
      e.name = entry.name;
      e.tier = entry.tier;
      e.params_millions = entry.params_millions;
      e.cost_gflops = entry.gflops;
    } else {
      e.name = "expert-" + std::to_string(k);
      e.tier = t < 1.0 / 3 ? Tier::kScout : (t < 2.0 / 3 ? Tier::kSpecialist : Tier::kOracle);
      e.cost_gflops = 0.01 * std::pow(1760.0, t);
    }
    e.base_accuracy = std::max(0.40 + 0.35 * t, chance + 0.05);
    e.strong_accuracy = std::min(e.base_accuracy + 0.20, 0.97);
    const std::size_t half = std::max<std::size_t>(1, n_classes / 2);
    for (std::size_t j = 0; j < half; ++j) {
      e.strong_classes.push_back((k * 3 + j) % n_classes);
    }
    spec.experts.push_back(std::move(e));
  }
  return spec;
}

// The reference pool: 6 catalog experts, 10 classes, 20000 samples.
inline SyntheticPoolSpec StandardPoolSpec(std::uint64_t seed = 1) {
  return MakePoolSpec(6, 10, 20000, 0.5, seed);
}

inline SyntheticPoolSpec EasyPoolSpec(std::uint64_t seed = 1) {
  return MakePoolSpec(6, 10, 20000, 0.8, seed);
}

inline SyntheticPoolSpec HeterogeneousPoolSpec(std::uint64_t seed = 1) {
  return MakePoolSpec(6, 10, 20000, 0.0, seed);
}

// Two experts strong on complementary halves of the classes, 0.80 each overall.
inline SyntheticPoolSpec DisjointPoolSpec(std::uint64_t seed = 1, std::size_t n_samples = 20000) {
  SyntheticPoolSpec spec;
  spec.dataset = "synthetic-disjoint";
  spec.n_classes = 10;
  spec.n_samples = n_samples;
  spec.seed = seed;
  SyntheticExpertSpec a{"scout-low-half", Tier::kScout, 1.0, 5.0, 0.65, {0, 1, 2, 3, 4}, 0.95, {}};
  SyntheticExpertSpec b{"specialist-high-half", Tier::kSpecialist, 1.5, 10.0, 0.65,
                        {5, 6, 7, 8, 9}, 0.95, {}};
  spec.experts = {a, b};
  return spec;
}

}  // namespace cads::synthetic

#endif  // CADS_SYNTHETIC_HPP_
