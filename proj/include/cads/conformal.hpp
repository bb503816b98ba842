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

// Split conformal prediction with Adaptive Prediction Sets (APS) scores.
//
// Non-randomized APS: a sample's score is the probability mass of all classes
// ranked at or above its true class. Classes are ranked by descending
// probability, ties broken by ascending class index.

#ifndef CADS_CONFORMAL_HPP_
#define CADS_CONFORMAL_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "cads/core.hpp"
#include "json.hpp"

namespace cads::conformal {

struct ConformalCalibration {
  ExpertId expert_id = 0;
  double zeta = 0.1;
  double q_hat = 1.0;
  std::size_t n_calibration = 0;
  double level = 1.0;
};

struct PredictionSet {
  // Ordered by descending probability of the generating expert.
  std::vector<ClassId> members;
  std::size_t size() const { return members.size(); }
};

enum class UncertaintyMeasure { kAps, kMaxSoftmax, kEntropy, kMargin };

inline std::string_view MeasureName(UncertaintyMeasure m) {
  switch (m) {
    case UncertaintyMeasure::kAps:
      return "aps";
    case UncertaintyMeasure::kMaxSoftmax:
      return "max_softmax";
    case UncertaintyMeasure::kEntropy:
      return "entropy";
    case UncertaintyMeasure::kMargin:
      return "margin";
  }
  return "unknown";
}

// Writes the class ranking into `order` (resized to probs.size()).
inline void RankClasses(std::span<const double> probs, std::vector<ClassId>& order) {
  order.resize(probs.size());
  std::iota(order.begin(), order.end(), ClassId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassId a, ClassId b) { return probs[a] > probs[b]; });
}

inline std::vector<ClassId> RankClasses(std::span<const double> probs) {
  std::vector<ClassId> order;
  RankClasses(probs, order);
  return order;
}

inline double ApsScore(std::span<const double> probs, ClassId true_label) {
  const auto order = RankClasses(probs);
  double cumulative = 0.0;
  for (ClassId c : order) {
    cumulative += probs[c];
    if (c == true_label) break;
  }
  return std::min(cumulative, 1.0);
}

// Rank (1-based) of the conservative quantile among n sorted scores:
// min(ceil((n+1)(1-zeta)), n).
inline std::size_t QuantileRank(std::size_t n, double zeta) {
  // The small offset keeps products like 10 * 0.9 from rounding up a whole rank.
  const double target = std::ceil(static_cast<double>(n + 1) * (1.0 - zeta) - 1e-9);
  if (target <= 1.0) return 1;
  return std::min(static_cast<std::size_t>(target), n);
}

inline double ConformalLevel(std::size_t n, double zeta) {
  const double target = std::ceil(static_cast<double>(n + 1) * (1.0 - zeta) - 1e-9);
  return std::min(target / static_cast<double>(n), 1.0);
}

// q_hat from scores that are already sorted ascending.
inline ConformalCalibration CalibrateSorted(std::span<const double> sorted_scores, double zeta,
                                            ExpertId expert_id = 0) {
  if (sorted_scores.empty()) throw Error("cannot calibrate on an empty score list");
  if (!(zeta > 0.0 && zeta < 1.0)) throw Error("zeta must lie in (0,1)");
  const std::size_t n = sorted_scores.size();
  ConformalCalibration cal;
  cal.expert_id = expert_id;
  cal.zeta = zeta;
  cal.n_calibration = n;
  cal.level = ConformalLevel(n, zeta);
  cal.q_hat = std::clamp(sorted_scores[QuantileRank(n, zeta) - 1], 0.0, 1.0);
  return cal;
}

inline ConformalCalibration Calibrate(std::vector<double> scores, double zeta,
                                      ExpertId expert_id = 0) {
  std::sort(scores.begin(), scores.end());
  return CalibrateSorted(scores, zeta, expert_id);
}

// Smallest ranked prefix whose cumulative mass reaches q_hat. Never empty;
// falls back to every class when rounding keeps the total just below q_hat.
inline PredictionSet BuildPredictionSet(std::span<const double> probs, double q_hat) {
  PredictionSet set;
  const auto order = RankClasses(probs);
  double cumulative = 0.0;
  for (ClassId c : order) {
    set.members.push_back(c);
    cumulative += probs[c];
    if (cumulative >= q_hat) break;
  }
  return set;
}

inline PredictionSet BuildPredictionSet(std::span<const double> probs,
                                        const ConformalCalibration& cal) {
  return BuildPredictionSet(probs, cal.q_hat);
}

// Higher means more uncertain; every measure lands in [0,1].
inline double AlternativeUncertainty(std::span<const double> probs, UncertaintyMeasure measure) {
  const std::size_t n = probs.size();
  double top = 0.0, second = 0.0;
  for (double p : probs) {
    if (p > top) {
      second = top;
      top = p;
    } else if (p > second) {
      second = p;
    }
  }
  switch (measure) {
    case UncertaintyMeasure::kMaxSoftmax:
      return std::clamp(1.0 - top, 0.0, 1.0);
    case UncertaintyMeasure::kMargin:
      return std::clamp(1.0 - (top - second), 0.0, 1.0);
    case UncertaintyMeasure::kEntropy: {
      double h = 0.0;
      for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
      }
      return n < 2 ? 0.0 : std::clamp(h / std::log(static_cast<double>(n)), 0.0, 1.0);
    }
    case UncertaintyMeasure::kAps:
      break;
  }
  throw Error("APS has no scalar uncertainty; use BuildPredictionSet");
}

// Holds one expert's sorted calibration scores so q_hat can be recomputed for
// any zeta without rescoring.
class ScoreCalibrator {
 public:
  ScoreCalibrator() = default;
  ScoreCalibrator(ExpertId expert_id, std::vector<double> scores)
      : expert_id_(expert_id), sorted_(std::move(scores)) {
    if (sorted_.empty()) throw Error("cannot calibrate on an empty score list");
    std::sort(sorted_.begin(), sorted_.end());
  }

  ConformalCalibration Calibrate(double zeta) const {
    return CalibrateSorted(sorted_, zeta, expert_id_);
  }
  const std::vector<double>& sorted_scores() const { return sorted_; }
  ExpertId expert_id() const { return expert_id_; }

 private:
  ExpertId expert_id_ = 0;
  std::vector<double> sorted_;
};

inline nlohmann::json ToJson(const ConformalCalibration& cal) {
  return {{"expert", cal.expert_id},
          {"zeta", cal.zeta},
          {"q_hat", cal.q_hat},
          {"n", cal.n_calibration},
          {"level", cal.level}};
}

}  // namespace cads::conformal

#endif  // CADS_CONFORMAL_HPP_
