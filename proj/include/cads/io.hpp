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

// Readers and writers for the on-disk inputs: the JSON expert manifest, the
// CADSPRED binary prediction format (or CSV), and newline-delimited labels.

#ifndef CADS_IO_HPP_
#define CADS_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cads/core.hpp"
#include "json.hpp"

namespace cads::io {

namespace fs = std::filesystem;

inline constexpr std::array<char, 8> kPredMagic = {'C', 'A', 'D', 'S',
                                                   'P', 'R', 'E', 'D'};
inline constexpr std::uint32_t kPredVersion = 1;

namespace detail {

template <typename UInt>
void PutLE(std::string& out, UInt value) {
  for (std::size_t b = 0; b < sizeof(UInt); ++b) {
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
  }
}

template <typename UInt>
UInt GetLE(const unsigned char* p) {
  UInt value = 0;
  for (std::size_t b = 0; b < sizeof(UInt); ++b) {
    value |= static_cast<UInt>(p[b]) << (8 * b);
  }
  return value;
}

inline std::string ReadFile(const fs::path& path, const std::string& who) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file " + path.string(), who);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void WriteFile(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

// Serializes raw float32 values in the CADSPRED layout.
inline std::string EncodePredictions(const PredictionMatrix& m) {
  std::string out(kPredMagic.begin(), kPredMagic.end());
  detail::PutLE<std::uint32_t>(out, kPredVersion);
  detail::PutLE<std::uint64_t>(out, m.n_samples());
  detail::PutLE<std::uint64_t>(out, m.n_classes());
  out.reserve(out.size() + m.raw().size() * 4);
  for (float v : m.raw()) detail::PutLE<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline PredictionMatrix DecodePredictions(const std::string& bytes,
                                          const std::string& who = {}) {
  constexpr std::size_t kHeader = 8 + 4 + 8 + 8;
  if (bytes.size() < kHeader ||
      std::memcmp(bytes.data(), kPredMagic.data(), kPredMagic.size()) != 0) {
    throw ValidationError("missing CADSPRED magic", who);
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = detail::GetLE<std::uint32_t>(p + 8);
  if (version != kPredVersion) {
    throw ValidationError("unsupported CADSPRED version " + std::to_string(version), who);
  }
  const auto n = detail::GetLE<std::uint64_t>(p + 12);
  const auto c = detail::GetLE<std::uint64_t>(p + 20);
  if (c != 0 && n > (bytes.size() - kHeader) / 4 / c) {
    throw ValidationError("truncated CADSPRED payload", who);
  }
  const std::size_t count = static_cast<std::size_t>(n * c);
  if (bytes.size() != kHeader + count * 4) {
    throw ValidationError("CADSPRED payload size " + std::to_string(bytes.size() - kHeader) +
                              " does not match header " + std::to_string(n) + "x" +
                              std::to_string(c),
                          who);
  }
  std::vector<float> raw(count);
  for (std::size_t i = 0; i < count; ++i) {
    raw[i] = std::bit_cast<float>(detail::GetLE<std::uint32_t>(p + kHeader + 4 * i));
  }
  return PredictionMatrix(n, c, std::move(raw), who);
}

// CSV with header c0,...,c{C-1}.
inline PredictionMatrix DecodePredictionsCsv(const std::string& text,
                                             const std::string& who = {}) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV", who);
  std::size_t n_classes = 0;
  {
    std::istringstream header(detail::Trim(line));
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (detail::Trim(cell) != "c" + std::to_string(n_classes)) {
        throw ValidationError("bad CSV header cell '" + cell + "'", who);
      }
      ++n_classes;
    }
  }
  std::vector<float> raw;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = detail::Trim(line);
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(cells, cell, ',')) {
      try {
        raw.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw ValidationError("unparsable value '" + cell + "'", who, row);
      }
      ++count;
    }
    if (count != n_classes) {
      throw ValidationError("expected " + std::to_string(n_classes) + " values, got " +
                                std::to_string(count),
                            who, row);
    }
    ++row;
  }
  return PredictionMatrix(row, n_classes, std::move(raw), who);
}

inline PredictionMatrix ReadPredictions(const fs::path& path, const std::string& who = {}) {
  const std::string bytes = detail::ReadFile(path, who);
  if (bytes.size() >= kPredMagic.size() &&
      std::memcmp(bytes.data(), kPredMagic.data(), kPredMagic.size()) == 0) {
    return DecodePredictions(bytes, who);
  }
  return DecodePredictionsCsv(bytes, who);
}

inline void WritePredictions(const fs::path& path, const PredictionMatrix& m) {
  detail::WriteFile(path, EncodePredictions(m));
}

inline LabelVector ReadLabels(const fs::path& path) {
  std::istringstream in(detail::ReadFile(path, "labels"));
  LabelVector labels;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = detail::Trim(line);
    if (line.empty()) continue;
    std::size_t pos = 0;
    long long value = -1;
    try {
      value = std::stoll(line, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != line.size() || value < 0) {
      throw ValidationError("bad label '" + line + "'", "labels", row);
    }
    labels.push_back(static_cast<ClassId>(value));
    ++row;
  }
  return labels;
}

inline void WriteLabels(const fs::path& path, const LabelVector& labels) {
  std::string out;
  for (ClassId y : labels) {
    out += std::to_string(y);
    out += '\n';
  }
  detail::WriteFile(path, out);
}

inline nlohmann::json ManifestToJson(const Manifest& m) {
  nlohmann::json experts = nlohmann::json::array();
  for (const auto& e : m.experts) {
    nlohmann::json j = {{"name", e.name},
                        {"tier", std::string(TierName(e.tier))},
                        {"params_millions", e.params_millions},
                        {"gflops", e.cost_gflops},
                        {"predictions", e.predictions_path}};
    if (!e.gflops_source.empty()) j["gflops_source"] = e.gflops_source;
    experts.push_back(std::move(j));
  }
  nlohmann::json out = {{"dataset", m.dataset}, {"labels", m.labels_path}, {"experts", experts}};
  if (!m.order_hash.empty()) out["order_hash"] = m.order_hash;
  return out;
}

inline Manifest ManifestFromJson(const nlohmann::json& j) {
  Manifest m;
  try {
    m.dataset = j.value("dataset", std::string{});
    m.labels_path = j.at("labels").get<std::string>();
    m.order_hash = j.value("order_hash", std::string{});
    for (const auto& e : j.at("experts")) {
      ExpertManifestEntry entry;
      entry.name = e.at("name").get<std::string>();
      try {
        entry.tier = ParseTier(e.at("tier").get<std::string>());
        entry.params_millions = e.value("params_millions", 0.0);
        entry.cost_gflops = e.at("gflops").get<double>();
        entry.predictions_path = e.at("predictions").get<std::string>();
        entry.gflops_source = e.value("gflops_source", std::string{});
      } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("malformed entry: ") + ex.what(), entry.name);
      }
      if (!(entry.cost_gflops > 0.0)) throw ValidationError("gflops must be positive", entry.name);
      if (!(entry.params_millions >= 0.0)) {
        throw ValidationError("params_millions must be non-negative", entry.name);
      }
      m.experts.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

// Loads a manifest and everything it references. Relative paths resolve
// against the manifest's directory. Experts come back in manifest order.
inline Dataset LoadManifest(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("manifest not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::ReadFile(path, "manifest"));
  } catch (const nlohmann::json::parse_error& ex) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + ex.what());
  }
  Dataset data;
  data.manifest = ManifestFromJson(j);
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };
  for (const auto& entry : data.manifest.experts) {
    const fs::path pred = resolve(entry.predictions_path);
    if (!fs::exists(pred)) {
      throw ValidationError("prediction file not found: " + pred.string(), entry.name);
    }
    data.matrices.push_back(ReadPredictions(pred, entry.name));
  }
  const fs::path labels = resolve(data.manifest.labels_path);
  if (!fs::exists(labels)) throw ValidationError("labels file not found: " + labels.string());
  data.labels = ReadLabels(labels);
  ValidateDataset(data);
  return data;
}

// Writes manifest.json, labels.txt and one .cadspred per expert into `dir`,
// rewriting the manifest paths to the files just written.
inline fs::path SaveDataset(const fs::path& dir, Dataset data) {
  fs::create_directories(dir);
  data.manifest.labels_path = "labels.txt";
  WriteLabels(dir / "labels.txt", data.labels);
  for (std::size_t k = 0; k < data.matrices.size(); ++k) {
    auto& entry = data.manifest.experts[k];
    entry.predictions_path = "expert_" + std::to_string(k) + ".cadspred";
    WritePredictions(dir / entry.predictions_path, data.matrices[k]);
  }
  const fs::path manifest = dir / "manifest.json";
  detail::WriteFile(manifest, ManifestToJson(data.manifest).dump(2) + "\n");
  return manifest;
}

}  // namespace cads::io

#endif  // CADS_IO_HPP_
