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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cads/cads.hpp"
#include "reference_cascade.hpp"
#include "test_util.hpp"

namespace cads::acceptance {
namespace {

namespace fs = std::filesystem;
namespace ev = evaluation;
using profiling::ExpertProfile;
using router::PolicyConfig;
using router::Weighting;

constexpr std::size_t kTrials = 200;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::vector<std::size_t> AllIds(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

std::size_t Threads() { return DefaultThreads(); }

// 1
Outcome Coverage() {
  const auto data = synthetic::GeneratePool(synthetic::MakePoolSpec(6, 10, 4000, 0.3, 11));
  const std::vector<std::size_t> cal_ids = AllIds(2000);
  std::vector<std::size_t> eval_ids(2000);
  std::iota(eval_ids.begin(), eval_ids.end(), std::size_t{2000});
  bool pass = true;
  std::string detail;
  for (double zeta : {0.05, 0.1, 0.2}) {
    const double floor = (1 - zeta) - 3 * std::sqrt(zeta * (1 - zeta) / 2000.0);
    double worst = 1.0;
    for (ExpertId k = 0; k < data.n_experts(); ++k) {
      std::vector<double> scores;
      for (auto i : cal_ids) scores.push_back(conformal::ApsScore(data.matrices[k].row(i), data.labels[i]));
      const auto cal = conformal::Calibrate(scores, zeta, k);
      std::size_t covered = 0;
      for (auto i : eval_ids) {
        const auto set = conformal::BuildPredictionSet(data.matrices[k].row(i), cal);
        covered += std::count(set.members.begin(), set.members.end(), data.labels[i]) > 0;
      }
      worst = std::min(worst, covered / 2000.0);
    }
    pass = pass && worst >= floor;
    detail += Fmt("zeta=%.2f min coverage %.4f >= %.4f; ", zeta, worst, floor);
  }
  return {pass, detail};
}

// 2
Outcome OracleEquivalence() {
  const Dataset data = reference::OracleFixture();
  const auto ids = AllIds(data.n_samples());
  const auto ctx = router::BuildPolicyContext(data, ids);
  const auto fixture = reference::FromDataset(data, ids);
  std::size_t compared = 0, mismatched = 0, escalated = 0;
  for (const auto& cfg : reference::OracleConfigs()) {
    const auto expected = reference::RunAll(fixture, cfg);
    const auto actual = router::RunCascadeOver(data, router::CascadeEngine(ctx, cfg), ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ++compared;
      mismatched += actual[i] == expected[i] ? 0 : 1;
      escalated += actual[i].consulted.size() > 1;
    }
  }
  std::size_t supported_cells = 0;
  for (const auto& [key, cell] : ctx.table.cells()) {
    supported_cells += ctx.table.PairwiseSupport(key / data.n_classes(), key % data.n_classes(), 0) >=
                       profiling::kMinPairwiseSupport;
  }
  return {mismatched == 0 && escalated > 0,
          Fmt("%zu traces compared, %zu mismatched, %zu escalated, %zu supported pairwise cells",
              compared, mismatched, escalated, supported_cells)};
}

double MedianPoolCost(const Dataset& data) {
  std::vector<double> costs;
  for (ExpertId k = 0; k < data.n_experts(); ++k) costs.push_back(data.cost(k));
  return Median(costs);
}

// 3
Outcome BudgetCompliance(const Dataset& standard, const ev::Workspace& ws) {
  const double median = MedianPoolCost(standard);
  bool pass = true;
  std::string detail;
  for (double mult : {0.5, 1.0, 2.0}) {
    const auto start = std::chrono::steady_clock::now();
    const double budget = mult * median;
    const auto r = ev::OptimizeAndVerify(ws, budget, kTrials, 1, optimizer::Sampler::kTpe, {},
                                         Threads());
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = r.test.mean_gflops <= optimizer::kBudgetTolerance * budget && secs < 180;
    pass = pass && ok;
    detail += Fmt("B=%.4f test %.4f GFLOPs acc %.4f%s (%.1fs); ", budget, r.test.mean_gflops,
                  r.test.accuracy, r.infeasible ? " [no feasible trial]" : "", secs);
  }
  return {pass, detail};
}

// 4
Outcome ComplementarityLift() {
  const auto data = synthetic::GeneratePool(synthetic::DisjointPoolSpec(1));
  const auto ws = ev::Workspace::Build(data, 1);
  double best_solo = 0.0;
  for (ExpertId k = 0; k < data.n_experts(); ++k) {
    best_solo = std::max(best_solo, ev::RunSolo(data, ws.split.test_ids, k).accuracy);
  }
  const double budget = 0.75 * data.total_cost();
  const auto r = ev::OptimizeAndVerify(ws, budget, kTrials, 1, optimizer::Sampler::kTpe, {},
                                       Threads());
  return {r.report.accuracy >= best_solo + 0.02 && !r.test.budget_violation,
          Fmt("CADS %.4f at %.4f GFLOPs (B=%.4f) vs best solo %.4f", r.report.accuracy,
              r.report.mean_gflops, budget, best_solo)};
}

// 5
Outcome CostReduction(const ev::Workspace& ws) {
  const Dataset& data = *ws.data;
  const auto full = ev::RunFullEnsemble(data, ws.split.test_ids, Weighting::kHybrid,
                                        ws.ctx.profiles);
  const double cap = full.mean_gflops / 5.0;
  const auto r = ev::OptimizeAndVerify(ws, cap, kTrials, 1, optimizer::Sampler::kTpe, {},
                                       Threads());
  const bool pass = r.report.accuracy >= full.accuracy - 0.005 && r.report.mean_gflops <= cap;
  return {pass, Fmt("CADS %.4f at %.4f GFLOPs vs full:hybrid %.4f at %.4f (cap %.4f, %.1fx cheaper)",
                    r.report.accuracy, r.report.mean_gflops, full.accuracy, full.mean_gflops, cap,
                    full.mean_gflops / r.report.mean_gflops)};
}

// 6
Outcome WeightingAblation() {
  const auto data = synthetic::GeneratePool(synthetic::HeterogeneousPoolSpec(1));
  const auto ws = ev::Workspace::Build(data, 1);
  const auto hybrid = ev::RunFullEnsemble(data, ws.split.test_ids, Weighting::kHybrid,
                                          ws.ctx.profiles);
  const auto uniform = ev::RunFullEnsemble(data, ws.split.test_ids, Weighting::kUniform);
  return {hybrid.accuracy >= uniform.accuracy,
          Fmt("hybrid %.4f vs uniform %.4f", hybrid.accuracy, uniform.accuracy)};
}

// 7
Outcome ExitAblation(const ev::Workspace& ws) {
  const auto full = ev::RunFullEnsemble(*ws.data, ws.split.test_ids, Weighting::kHybrid,
                                        ws.ctx.profiles);
  const auto rows = ev::Ablate(ws, "exit", full.mean_gflops / 5.0, kTrials, 1, Threads());
  const auto& adaptive = rows.at(0).report;
  const auto& fixed = rows.at(1).report;
  return {adaptive.mean_gflops <= fixed.mean_gflops && adaptive.accuracy >= fixed.accuracy,
          Fmt("adaptive %.4f at %.4f GFLOPs vs fixed %.4f at %.4f", adaptive.accuracy,
              adaptive.mean_gflops, fixed.accuracy, fixed.mean_gflops)};
}

// 8
Outcome EnsembleIdentities() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t c = 2 + t % 9;
    std::vector<double> acc(c);
    for (auto& a : acc) a = unit(rng);
    const std::vector<ExpertProfile> profiles = {
        {0, 1.0, unit(rng), acc, std::vector<std::size_t>(c, 5), std::vector<bool>(c, false), 1.0},
        {1, 2.0, unit(rng), std::vector<double>(acc.rbegin(), acc.rend()),
         std::vector<std::size_t>(c, 5), std::vector<bool>(c, false), 1.0}};
    PolicyConfig cfg;
    cfg.gamma = 1 + 9 * unit(rng);
    cfg.beta = 0.5 + 4.5 * unit(rng);
    const auto p = testing::RandomSimplex(c, rng);
    const std::vector<ExpertId> one = {0}, two = {0, 1};
    const std::vector<std::span<const double>> single = {p}, pair = {p, p};
    const auto a = router::Ensemble(one, single, profiles, cfg);
    const auto b = router::Ensemble(two, pair, profiles, cfg);
    for (std::size_t k = 0; k < c; ++k) {
      worst = std::max({worst, std::abs(a.p_ens[k] - p[k]), std::abs(b.p_ens[k] - p[k])});
    }
  }

  const auto data = synthetic::GeneratePool(synthetic::MakePoolSpec(6, 10, 3000, 0.5, 8));
  const auto ids = AllIds(data.n_samples());
  const auto prefixes = ev::RunCumulativeCascade(data, ids);
  const auto order = ev::CostOrder(data);
  const auto solo = ev::RunSolo(data, ids, order.front());
  const auto uniform = ev::RunFullEnsemble(data, ids, Weighting::kUniform);
  auto gap = [](const ev::EvaluationReport& x, const ev::EvaluationReport& y) {
    return std::max(std::abs(x.accuracy - y.accuracy), std::abs(x.mean_gflops - y.mean_gflops));
  };
  double prefix_cost = 0.0, cost_gap = 0.0;
  for (std::size_t k = 0; k < prefixes.size(); ++k) {
    prefix_cost += data.cost(order[k]);
    cost_gap = std::max(cost_gap, std::abs(prefixes[k].mean_gflops - prefix_cost));
  }
  const double prefix_gap = std::max({gap(prefixes.front(), solo), gap(prefixes.back(), uniform),
                                      cost_gap});
  return {worst <= 1e-12 && prefix_gap <= 1e-12,
          Fmt("max ensemble deviation %.3g, max prefix deviation %.3g", worst, prefix_gap)};
}

// 9
Outcome TpeSanity(const Dataset& standard, const ev::Workspace& ws) {
  const double budget = MedianPoolCost(standard);
  const auto space = optimizer::SearchSpace::ForContext(ws.ctx);
  std::vector<double> tpe, rnd;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (auto sampler : {optimizer::Sampler::kTpe, optimizer::Sampler::kRandom}) {
      const auto study = optimizer::OptimizePolicy(standard, ws.ctx, ws.split.calibration_ids,
                                                   budget, kTrials, seed, sampler, {}, Threads());
      (sampler == optimizer::Sampler::kTpe ? tpe : rnd).push_back(study.best_trial.objective);
    }
  }

  // Density-ratio property: total separation in w keeps proposals in the good mode.
  std::size_t inside = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    std::mt19937_64 rng(rep);
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    std::vector<optimizer::Trial> history;
    for (std::size_t i = 0; i < 40; ++i) {
      auto c = optimizer::SampleUniform(space, rng);
      const bool good = i % 4 == 0;
      c.w = (good ? 0.9 : 0.1) + jitter(rng);
      history.push_back({i, c, good ? 1.0 : 0.0, 0.0, 0.0});
    }
    inside += optimizer::TpeSuggest(history, space, rng).w >= 0.5 ? 1 : 0;
  }
  const double tpe_median = Median(tpe), rnd_median = Median(rnd);
  return {tpe_median >= rnd_median && inside >= 90,
          Fmt("median best objective TPE %.5f vs random %.5f; good-mode proposals %zu/100",
              tpe_median, rnd_median, inside)};
}

// 10
int Shell(const std::string& args) {
  const std::string cmd = std::string(CADS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome CliDeterminism() {
  const fs::path root = testing::TempDir("acceptance_cli");
  const std::string work = (root / "work").string();
  const std::string manifest = " --manifest " + work + "/pool/manifest.json";
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"pool", "synth --experts 6 --classes 10 --samples 3000 --easy-frac 0.5 --seed 7"},
      {"profile", "profile --seed 7" + manifest},
      {"calibrate", "calibrate --seed 7 --zeta 0.1" + manifest},
      {"optimize", "optimize --seed 7 --budget 2 --trials 40" + manifest},
      {"cads", "evaluate --method cads --traces --seed 7 --config " + work +
                   "/optimize/study.json" + manifest},
      {"confidence", "evaluate --method confidence --seed 7" + manifest},
      {"cumulative", "evaluate --method cumulative --seed 7" + manifest},
      {"full", "evaluate --method full --seed 7" + manifest},
      {"solo", "evaluate --method solo --seed 7" + manifest},
      {"sweep", "sweep --budgets 0.5,2,10 --trials 20 --seed 7" + manifest},
      {"ablate", "ablate --axis exit --budget 2 --trials 20 --seed 7" + manifest},
  };
  auto pipeline = [&] {
    fs::remove_all(work);
    for (const auto& [out, args] : steps) {
      if (Shell(args + " --out " + work + "/" + out) != 0) return false;
    }
    return true;
  };
  if (!pipeline()) return {false, "first pipeline run failed"};
  fs::rename(work, root / "first");
  if (!pipeline()) return {false, "second pipeline run failed"};

  std::size_t files = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(root / "first")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root / "first");
    std::string a = Slurp(entry.path()), b = Slurp(fs::path(work) / rel);
    if (rel.filename() == "run.json") {
      auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
      ja.erase("provenance");
      jb.erase("provenance");
      a = ja.dump();
      b = jb.dump();
    }
    ++files;
    if (a != b) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  fs::remove_all(root);
  return {differing == 0 && files > 20,
          Fmt("%zu files compared, %zu differ%s%s", files, differing,
              first_diff.empty() ? "" : ", first: ", first_diff.c_str())};
}

}  // namespace
}  // namespace cads::acceptance

// Usage: acceptance_test [--known-failure N]...
// Known failures still print FAIL; the exit code is zero only when the failing
// set equals the known set exactly.
int main(int argc, char** argv) {
  using namespace cads::acceptance;
  using Clock = std::chrono::steady_clock;
  std::set<int> known, failed;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--known-failure" && i + 1 < argc) {
      known.insert(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--known-failure N]...\n", argv[0]);
      return 2;
    }
  }
  auto report = [&](int id, const char* name, double limit_s, const std::function<Outcome()>& fn) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool pass = o.pass && secs < limit_s;
    if (!pass) failed.insert(id);
    std::printf("%s criterion %d (%s): %s [%.2fs, limit %.0fs]%s\n", pass ? "PASS" : "FAIL", id,
                name, o.detail.c_str(), secs, limit_s,
                known.count(id) ? " (known failure)" : "");
    std::fflush(stdout);
  };

  const cads::Dataset standard = cads::synthetic::GeneratePool(cads::synthetic::StandardPoolSpec(1));
  const auto standard_ws = cads::evaluation::Workspace::Build(standard, 1);
  const cads::Dataset easy = cads::synthetic::GeneratePool(cads::synthetic::EasyPoolSpec(1));
  const auto easy_ws = cads::evaluation::Workspace::Build(easy, 1);

  report(1, "conformal coverage", 5, Coverage);
  report(2, "oracle equivalence", 1, OracleEquivalence);
  report(3, "budget compliance", 540, [&] { return BudgetCompliance(standard, standard_ws); });
  report(4, "complementarity lift", 120, ComplementarityLift);
  report(5, "cost reduction", 120, [&] { return CostReduction(easy_ws); });
  report(6, "weighting ablation", 30, WeightingAblation);
  report(7, "exit-logic ablation", 60, [&] { return ExitAblation(easy_ws); });
  report(8, "ensemble identities", 1, EnsembleIdentities);
  report(9, "tpe sanity", 600, [&] { return TpeSanity(standard, standard_ws); });
  report(10, "cli determinism", 60, CliDeterminism);
  std::printf("%zu of 10 criteria failed", failed.size());
  if (!known.empty()) std::printf(", %zu listed as known", known.size());
  std::printf("\n");
  return failed == known ? 0 : 1;
}
