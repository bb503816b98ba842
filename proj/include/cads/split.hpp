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

#ifndef CADS_SPLIT_HPP_
#define CADS_SPLIT_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "cads/core.hpp"

namespace cads {

inline constexpr std::size_t kMinSplitSamples = 10;

// round(0.30 * n), halves rounded up, in integer arithmetic.
inline constexpr std::size_t CalibrationSize(std::size_t n_samples) {
  return (3 * n_samples + 5) / 10;
}

// Deterministic 30/70 calibration/test split. Both id lists come back sorted.
//
// With `stratify_labels` the calibration quota is spread over classes by
// largest remainder, so the total stays round(0.30 * n).
inline SplitIndex SplitDataset(std::size_t n_samples, std::uint64_t seed,
                               const LabelVector* stratify_labels = nullptr) {
  if (n_samples < kMinSplitSamples) {
    throw ValidationError("instance too small to split: " + std::to_string(n_samples) +
                          " samples, need at least " + std::to_string(kMinSplitSamples));
  }
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_cal = CalibrationSize(n_samples);
  SplitIndex split;
  split.seed = seed;
  std::vector<char> is_cal(n_samples, 0);

  if (stratify_labels == nullptr) {
    for (std::size_t i = 0; i < n_cal; ++i) is_cal[order[i]] = 1;
  } else {
    const auto& labels = *stratify_labels;
    if (labels.size() != n_samples) throw ValidationError("label count does not match n_samples");
    const std::size_t n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t id : order) by_class[labels[id]].push_back(id);

    std::vector<std::size_t> quota(n_classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double exact = static_cast<double>(by_class[c].size()) * n_cal / n_samples;
      quota[c] = static_cast<std::size_t>(exact);
      assigned += quota[c];
      remainders.emplace_back(exact - quota[c], c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n_cal; ++r, ++assigned) ++quota[remainders[r].second];
    for (std::size_t c = 0; c < n_classes; ++c) {
      for (std::size_t j = 0; j < quota[c]; ++j) is_cal[by_class[c][j]] = 1;
    }
  }

  for (std::size_t i = 0; i < n_samples; ++i) {
    (is_cal[i] ? split.calibration_ids : split.test_ids).push_back(i);
  }
  return split;
}

}  // namespace cads

#endif  // CADS_SPLIT_HPP_
