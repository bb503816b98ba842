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

// Domain types shared by every stage of the engine: expert manifest entries,
// per-expert probability tables, label vectors and the calibration/test split.

#ifndef CADS_CORE_HPP_
#define CADS_CORE_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cads {

using ExpertId = std::size_t;
using ClassId = std::size_t;

// Base error for everything the engine rejects.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that violates a structural invariant. Carries the offending
// expert and row when known so the CLI can surface them.
class ValidationError : public Error {
 public:
  ValidationError(std::string message, std::string expert = {},
                  std::optional<std::size_t> row = std::nullopt)
      : Error(Format(message, expert, row)),
        expert_(std::move(expert)),
        row_(row) {}

  const std::string& expert() const { return expert_; }
  std::optional<std::size_t> row() const { return row_; }

 private:
  static std::string Format(const std::string& message,
                            const std::string& expert,
                            std::optional<std::size_t> row) {
    std::string out;
    if (!expert.empty()) out += "expert '" + expert + "': ";
    if (row) out += "row " + std::to_string(*row) + ": ";
    return out + message;
  }

  std::string expert_;
  std::optional<std::size_t> row_;
};

enum class Tier { kScout, kSpecialist, kOracle };

inline constexpr std::string_view TierName(Tier tier) {
  switch (tier) {
    case Tier::kScout:
      return "scout";
    case Tier::kSpecialist:
      return "specialist";
    case Tier::kOracle:
      return "oracle";
  }
  return "unknown";
}

inline Tier ParseTier(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "scout") return Tier::kScout;
  if (lower == "specialist") return Tier::kSpecialist;
  if (lower == "oracle") return Tier::kOracle;
  throw ValidationError("unknown tier '" + std::string(name) + "'");
}

struct ExpertManifestEntry {
  std::string name;
  Tier tier = Tier::kScout;
  double params_millions = 0.0;
  double cost_gflops = 0.0;
  std::string predictions_path;
  // Optional provenance written by exporters; carried through untouched.
  std::string gflops_source;
};

struct Manifest {
  std::string dataset;
  std::string labels_path;
  std::vector<ExpertManifestEntry> experts;
  // Hash of the exported sample order, when the exporter recorded one.
  std::string order_hash;
};

// Absolute tolerance on |row sum - 1| accepted (and renormalized) on load.
inline constexpr double kRowSumTolerance = 1e-4;

// N x C probability table for one expert.
//
// The float32 values are kept exactly as stored on disk so that writing and
// re-reading a matrix is bit-identical. Every consumer reads the renormalized
// double view, whose rows sum to one up to rounding.
class PredictionMatrix {
 public:
  PredictionMatrix() = default;

  // Validates and renormalizes. `name` only decorates error messages.
  PredictionMatrix(std::size_t n_samples, std::size_t n_classes,
                   std::vector<float> raw, std::string_view name = {})
      : n_samples_(n_samples), n_classes_(n_classes), raw_(std::move(raw)) {
    const std::string who(name);
    if (n_samples_ < 1) throw ValidationError("matrix has no samples", who);
    if (n_classes_ < 2) throw ValidationError("matrix needs at least 2 classes", who);
    if (raw_.size() != n_samples_ * n_classes_) {
      throw ValidationError("value count " + std::to_string(raw_.size()) +
                                " does not match " + std::to_string(n_samples_) +
                                "x" + std::to_string(n_classes_),
                            who);
    }
    normalized_.resize(raw_.size());
    for (std::size_t i = 0; i < n_samples_; ++i) {
      double sum = 0.0;
      for (std::size_t c = 0; c < n_classes_; ++c) {
        const double p = raw_[i * n_classes_ + c];
        if (!(p >= 0.0 && p <= 1.0)) {
          throw ValidationError("probability " + std::to_string(p) +
                                    " outside [0,1] at class " + std::to_string(c),
                                who, i);
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw ValidationError("row sums to " + std::to_string(sum) +
                                  ", beyond tolerance 1e-4",
                              who, i);
      }
      for (std::size_t c = 0; c < n_classes_; ++c) {
        normalized_[i * n_classes_ + c] = raw_[i * n_classes_ + c] / sum;
      }
    }
  }

  std::size_t n_samples() const { return n_samples_; }
  std::size_t n_classes() const { return n_classes_; }

  std::span<const double> row(std::size_t i) const {
    return {normalized_.data() + i * n_classes_, n_classes_};
  }
  std::span<const float> raw_row(std::size_t i) const {
    return {raw_.data() + i * n_classes_, n_classes_};
  }
  const std::vector<float>& raw() const { return raw_; }

 private:
  std::size_t n_samples_ = 0;
  std::size_t n_classes_ = 0;
  std::vector<float> raw_;
  std::vector<double> normalized_;
};

using LabelVector = std::vector<ClassId>;

struct SplitIndex {
  std::vector<std::size_t> calibration_ids;
  std::vector<std::size_t> test_ids;
  std::uint64_t seed = 0;
};

// A loaded, validated manifest: one matrix per expert (manifest order) and the
// shared labels.
struct Dataset {
  Manifest manifest;
  std::vector<PredictionMatrix> matrices;
  LabelVector labels;

  std::size_t n_experts() const { return matrices.size(); }
  std::size_t n_samples() const { return labels.size(); }
  std::size_t n_classes() const {
    return matrices.empty() ? 0 : matrices.front().n_classes();
  }
  double cost(ExpertId k) const { return manifest.experts[k].cost_gflops; }
  Tier tier(ExpertId k) const { return manifest.experts[k].tier; }

  double total_cost() const {
    double total = 0.0;
    for (const auto& e : manifest.experts) total += e.cost_gflops;
    return total;
  }
};

// Argmax with ties broken by the lowest index.
template <typename T>
inline std::size_t Argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

inline std::size_t Argmax(const std::vector<double>& values) {
  return Argmax(std::span<const double>(values));
}

// Cross-object checks shared by the loader and in-memory constructors.
inline void ValidateDataset(const Dataset& data) {
  if (data.matrices.empty()) throw ValidationError("manifest lists no experts");
  if (data.matrices.size() != data.manifest.experts.size()) {
    throw ValidationError("matrix count does not match manifest expert count");
  }
  const auto& first = data.matrices.front();
  for (std::size_t k = 0; k < data.matrices.size(); ++k) {
    const auto& entry = data.manifest.experts[k];
    const auto& m = data.matrices[k];
    if (!(entry.cost_gflops > 0.0)) {
      throw ValidationError("gflops must be positive", entry.name);
    }
    if (!(entry.params_millions >= 0.0)) {
      throw ValidationError("params_millions must be non-negative", entry.name);
    }
    if (m.n_samples() != first.n_samples() || m.n_classes() != first.n_classes()) {
      throw ValidationError(
          "dimension mismatch: " + std::to_string(m.n_samples()) + "x" +
              std::to_string(m.n_classes()) + " vs " +
              std::to_string(first.n_samples()) + "x" +
              std::to_string(first.n_classes()) + " of '" +
              data.manifest.experts.front().name + "'",
          entry.name);
    }
  }
  if (data.labels.size() != first.n_samples()) {
    throw ValidationError("label count " + std::to_string(data.labels.size()) +
                          " does not match sample count " +
                          std::to_string(first.n_samples()));
  }
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] >= first.n_classes()) {
      throw ValidationError("label " + std::to_string(data.labels[i]) +
                                " out of range for " +
                                std::to_string(first.n_classes()) + " classes",
                            "labels", i);
    }
  }
}

}  // namespace cads

#endif  // CADS_CORE_HPP_
