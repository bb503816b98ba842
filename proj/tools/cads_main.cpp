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

// Command-line front end: profile, calibrate, optimize, evaluate, sweep,
// synth, ablate and validate.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cads/cads.hpp"

namespace {

namespace fs = std::filesystem;
using cads::Dataset;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string manifest;
  std::string out = "cads_out";
  std::uint64_t seed = 1;
  std::size_t threads = cads::DefaultThreads();
  bool verbose = false;
};

// Result files plus the provenance record, which alone carries wall-clock data.
class Run {
 public:
  Run(const Common& common, std::string command, std::vector<std::string> argv)
      : common_(common), command_(std::move(command)), argv_(std::move(argv)),
        started_(std::chrono::system_clock::now()) {}

  void Log(const std::string& message) const {
    if (common_.verbose) std::clog << "[cads " << command_ << "] " << message << "\n";
  }

  void Input(const std::string& key, json value) { inputs_[key] = std::move(value); }

  void Write(const std::string& name, const std::string& bytes) {
    fs::create_directories(common_.out);
    const fs::path path = fs::path(common_.out) / name;
    std::ofstream out(path, std::ios::binary);
    out << bytes;
    if (!out) throw cads::Error("cannot write " + path.string());
    outputs_.push_back(name);
    Log("wrote " + path.string());
  }

  void Produced(const std::string& name) { outputs_.push_back(name); }

  void WriteJson(const std::string& name, const json& j) { Write(name, j.dump(2) + "\n"); }

  void Finish(int exit_code, const std::string& error = {}) {
    const auto finished = std::chrono::system_clock::now();
    json record = {
        {"command", command_},
        {"argv", argv_},
        {"seed", common_.seed},
        {"threads", common_.threads},
        {"inputs", inputs_},
        {"outputs", outputs_},
        {"exit_code", exit_code},
        {"versions", {{"cads", kVersion}, {"cadspred", cads::io::kPredVersion}}},
        {"provenance",
         {{"started_at", Timestamp(started_)},
          {"finished_at", Timestamp(finished)},
          {"elapsed_ms",
           std::chrono::duration_cast<std::chrono::milliseconds>(finished - started_).count()}}}};
    if (!error.empty()) record["error"] = error;
    try {
      fs::create_directories(common_.out);
      std::ofstream(fs::path(common_.out) / "run.json") << record.dump(2) << "\n";
    } catch (const fs::filesystem_error&) {
    }
  }

 private:
  static std::string Timestamp(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
  }

  const Common& common_;
  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::system_clock::time_point started_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

Dataset Load(const Common& common, Run& run) {
  if (common.manifest.empty()) throw cads::ValidationError("--manifest is required");
  Dataset data = cads::io::LoadManifest(common.manifest);
  run.Input("manifest", common.manifest);
  run.Input("dataset", data.manifest.dataset);
  if (!data.manifest.order_hash.empty()) run.Input("order_hash", data.manifest.order_hash);
  run.Input("shape", {{"experts", data.n_experts()},
                      {"samples", data.n_samples()},
                      {"classes", data.n_classes()}});
  run.Log("loaded " + std::to_string(data.n_experts()) + " experts, " +
          std::to_string(data.n_samples()) + " samples");
  return data;
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cads::ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw cads::ValidationError(path + " is not valid JSON: " + e.what());
  }
}

// Accepts a bare policy, a policy.json, or a study.json (its best trial).
cads::router::PolicyConfig LoadPolicy(const std::string& path, const cads::router::PolicyContext& ctx) {
  if (path.empty()) {
    cads::router::PolicyConfig cfg;
    cfg.start_expert = cads::router::DefaultStartExpert(ctx);
    return cfg;
  }
  json j = ReadJsonFile(path);
  if (j.contains("best_trial")) j = j["best_trial"]["config"];
  if (j.contains("config")) j = j["config"];
  return cads::router::PolicyFromJson(j);
}

cads::conformal::UncertaintyMeasure ParseMeasure(const std::string& name) {
  using cads::conformal::UncertaintyMeasure;
  for (auto m : {UncertaintyMeasure::kAps, UncertaintyMeasure::kMaxSoftmax,
                 UncertaintyMeasure::kEntropy, UncertaintyMeasure::kMargin}) {
    if (cads::conformal::MeasureName(m) == name) return m;
  }
  throw cads::ValidationError("unknown measure '" + name + "'");
}

std::string ReportsCsv(const std::vector<cads::evaluation::EvaluationReport>& reports) {
  return cads::evaluation::ToCsv(reports);
}

json ReportsJson(const std::vector<cads::evaluation::EvaluationReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) out.push_back(cads::evaluation::ToJson(r));
  return out;
}

json SplitJson(const cads::evaluation::Workspace& ws, std::uint64_t seed) {
  return {{"seed", seed},
          {"n_calibration", ws.split.calibration_ids.size()},
          {"n_test", ws.split.test_ids.size()}};
}

int CmdValidate(const Common& common, Run& run) {
  const Dataset data = Load(common, run);
  std::cout << "valid: " << data.n_experts() << " experts, " << data.n_samples() << " samples, "
            << data.n_classes() << " classes\n";
  return 0;
}

struct SynthArgs {
  std::size_t experts = 6;
  std::size_t classes = 10;
  std::size_t samples = 20000;
  double easy_frac = 0.5;
  double temperature = 1.0;
  std::string preset;
};

int CmdSynth(const Common& common, Run& run, const SynthArgs& a) {
  using namespace cads::synthetic;
  SyntheticPoolSpec spec;
  if (a.preset.empty()) {
    spec = MakePoolSpec(a.experts, a.classes, a.samples, a.easy_frac, common.seed);
    spec.temperature = a.temperature;
  } else if (a.preset == "standard") {
    spec = StandardPoolSpec(common.seed);
  } else if (a.preset == "easy") {
    spec = EasyPoolSpec(common.seed);
  } else if (a.preset == "heterogeneous") {
    spec = HeterogeneousPoolSpec(common.seed);
  } else {
    spec = DisjointPoolSpec(common.seed, a.samples);
  }
  run.Input("synthetic", {{"preset", a.preset.empty() ? "custom" : a.preset},
                          {"experts", spec.n_experts()},
                          {"classes", spec.n_classes},
                          {"samples", spec.n_samples},
                          {"easy_fraction", spec.easy_fraction},
                          {"temperature", spec.temperature}});
  const Dataset data = GeneratePool(spec);
  const fs::path manifest = cads::io::SaveDataset(common.out, data);
  run.Produced("manifest.json");
  run.Produced("labels.txt");
  for (std::size_t k = 0; k < data.n_experts(); ++k) {
    run.Produced("expert_" + std::to_string(k) + ".cadspred");
  }
  run.Log("wrote " + manifest.string());
  return 0;
}

int CmdProfile(const Common& common, Run& run, double zeta) {
  const Dataset data = Load(common, run);
  const auto ws = cads::evaluation::Workspace::Build(data, common.seed);
  json profiles = json::array();
  for (const auto& p : ws.ctx.profiles) profiles.push_back(cads::profiling::ToJson(p));
  json calibration = json::array();
  for (const auto& c : ws.ctx.calibrators) calibration.push_back(cads::conformal::ToJson(c.Calibrate(zeta)));
  json names = json::array();
  for (const auto& e : data.manifest.experts) names.push_back(e.name);
  run.WriteJson("profile.json", {{"split", SplitJson(ws, common.seed)},
                                 {"experts", names},
                                 {"profiles", profiles},
                                 {"class_difficulty", ws.ctx.difficulty.difficulty},
                                 {"complementarity", cads::profiling::ToJson(ws.ctx.table)},
                                 {"calibration", calibration}});
  return 0;
}

int CmdCalibrate(const Common& common, Run& run, double zeta) {
  const Dataset data = Load(common, run);
  const auto ws = cads::evaluation::Workspace::Build(data, common.seed);
  json experts = json::array();
  for (const auto& c : ws.ctx.calibrators) experts.push_back(cads::conformal::ToJson(c.Calibrate(zeta)));
  run.WriteJson("calibration.json",
                {{"split", SplitJson(ws, common.seed)}, {"zeta", zeta}, {"experts", experts}});
  return 0;
}

struct OptimizeArgs {
  double budget = 0.0;
  std::size_t trials = cads::optimizer::kDefaultTrials;
  std::string sampler = "tpe";
  std::string measure = "aps";
};

int CmdOptimize(const Common& common, Run& run, const OptimizeArgs& a) {
  const Dataset data = Load(common, run);
  const auto ws = cads::evaluation::Workspace::Build(data, common.seed);
  cads::router::CascadeOptions options;
  options.measure = ParseMeasure(a.measure);
  const auto sampler =
      a.sampler == "tpe" ? cads::optimizer::Sampler::kTpe : cads::optimizer::Sampler::kRandom;
  const auto result = cads::evaluation::OptimizeAndVerify(ws, a.budget, a.trials, common.seed,
                                                          sampler, options, common.threads);
  run.Log("best objective " + std::to_string(result.study.best_trial.objective));
  json study = cads::optimizer::ToJson(result.study);
  study["split"] = SplitJson(ws, common.seed);
  study["measure"] = a.measure;
  study["infeasible"] = result.infeasible;
  study["test"] = cads::optimizer::ToJson(result.test);
  run.WriteJson("study.json", study);
  run.WriteJson("policy.json", cads::router::ToJson(result.study.best_trial.config));
  run.WriteJson("report.json", cads::evaluation::ToJson(result.report));
  run.Write("report.csv", ReportsCsv(std::vector{result.report}));
  if (result.test.budget_violation) {
    std::cerr << "warning: test mean " << result.test.mean_gflops << " GFLOPs exceeds "
              << cads::optimizer::kBudgetTolerance << " x budget " << a.budget << "\n";
  }
  return 0;
}

struct EvaluateArgs {
  std::string method;
  std::string config;
  double threshold = cads::evaluation::kDefaultConfidenceThreshold;
  std::string weighting = "hybrid";
  std::vector<std::size_t> experts;
  std::string measure = "aps";
  bool traces = false;
};

int CmdEvaluate(const Common& common, Run& run, const EvaluateArgs& a) {
  namespace ev = cads::evaluation;
  const Dataset data = Load(common, run);
  const auto ws = ev::Workspace::Build(data, common.seed);
  const auto& ids = ws.split.test_ids;
  std::vector<ev::EvaluationReport> reports;
  if (a.method == "cads") {
    if (!a.config.empty()) run.Input("config", a.config);
    const auto cfg = LoadPolicy(a.config, ws.ctx);
    cads::router::CascadeOptions options;
    options.measure = ParseMeasure(a.measure);
    std::vector<cads::router::CascadeTrace> traces;
    auto report = ev::RunCads(data, ws.ctx, cfg, ids, options, common.threads, &traces);
    if (options.measure != cads::conformal::UncertaintyMeasure::kAps) {
      report.method = "cads:" + a.measure;
    }
    reports.push_back(report);
    if (a.traces) {
      std::string lines;
      for (const auto& t : traces) lines += cads::router::ToJson(t).dump() + "\n";
      run.Write("traces.jsonl", lines);
    }
  } else if (a.method == "confidence") {
    auto r = ev::RunConfidenceCascade(data, ids, a.threshold);
    r.method = "confidence:" + ev::CsvNumber(a.threshold);
    reports.push_back(r);
  } else if (a.method == "cumulative") {
    reports = ev::RunCumulativeCascade(data, ids);
  } else if (a.method == "full") {
    reports.push_back(a.weighting == "uniform"
                          ? ev::RunFullEnsemble(data, ids, cads::router::Weighting::kUniform)
                          : ev::RunFullEnsemble(data, ids, cads::router::Weighting::kHybrid,
                                                ws.ctx.profiles));
  } else {
    std::vector<std::size_t> experts = a.experts;
    if (experts.empty()) {
      for (cads::ExpertId k = 0; k < data.n_experts(); ++k) experts.push_back(k);
    }
    for (auto k : experts) {
      if (k >= data.n_experts()) throw cads::ValidationError("expert index out of range");
      reports.push_back(ev::RunSolo(data, ids, k));
    }
  }
  run.WriteJson("report.json", {{"split", SplitJson(ws, common.seed)},
                                {"reports", ReportsJson(reports)}});
  run.Write("report.csv", ReportsCsv(reports));
  return 0;
}

std::vector<double> ParseBudgets(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0.0)) {
      throw CLI::ValidationError("--budgets", "not a positive number: '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--budgets", "empty list");
  if (!std::is_sorted(out.begin(), out.end())) {
    throw CLI::ValidationError("--budgets", "budgets must be ascending");
  }
  return out;
}

int CmdSweep(const Common& common, Run& run, const std::vector<double>& budgets,
             std::size_t trials) {
  namespace ev = cads::evaluation;
  const Dataset data = Load(common, run);
  const auto ws = ev::Workspace::Build(data, common.seed);
  const auto sweep = ev::SweepBudgets(ws, budgets, trials, common.seed, common.threads);
  std::vector<ev::EvaluationReport> rows;
  json per_budget = json::array();
  for (const auto& b : sweep.budgets) {
    rows.push_back(b.report);
    per_budget.push_back(ev::ToJson(b));
  }
  rows.insert(rows.end(), sweep.baselines.begin(), sweep.baselines.end());
  run.WriteJson("sweep.json", {{"split", SplitJson(ws, common.seed)},
                               {"trials", trials},
                               {"budgets", per_budget},
                               {"baselines", ReportsJson(sweep.baselines)}});
  run.Write("sweep.csv", ReportsCsv(rows));
  return 0;
}

int CmdAblate(const Common& common, Run& run, const std::string& axis, double budget,
              std::size_t trials) {
  namespace ev = cads::evaluation;
  const Dataset data = Load(common, run);
  const auto ws = ev::Workspace::Build(data, common.seed);
  const auto rows = ev::Ablate(ws, axis, budget, trials, common.seed, common.threads);
  std::vector<ev::EvaluationReport> reports;
  json out = json::array();
  for (const auto& r : rows) {
    reports.push_back(r.report);
    json j = {{"variant", r.variant}, {"report", ev::ToJson(r.report)}};
    j["config"] = r.config ? cads::router::ToJson(*r.config) : json(nullptr);
    out.push_back(j);
  }
  run.WriteJson("ablation.json", {{"axis", axis},
                                  {"budget", budget},
                                  {"trials", trials},
                                  {"split", SplitJson(ws, common.seed)},
                                  {"rows", out}});
  run.Write("ablation.csv", ReportsCsv(reports));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-constrained adaptive cascade inference", "cads"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--manifest", common.manifest, "Expert pool manifest (JSON)");
  app.add_option("--out", common.out, "Output directory")->capture_default_str();
  app.add_option("--seed", common.seed, "Split and search seed")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("-v,--verbose", common.verbose, "Log progress to stderr");

  auto* validate = app.add_subcommand("validate", "Check a manifest and its files");
  validate->add_option("manifest_path", common.manifest, "Manifest to check");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic expert pool");
  synth->add_option("--experts", synth_args.experts)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--classes", synth_args.classes)->check(CLI::Range(2, 1 << 20))->capture_default_str();
  synth->add_option("--samples", synth_args.samples)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--easy-frac", synth_args.easy_frac)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  synth->add_option("--temperature", synth_args.temperature)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--preset", synth_args.preset, "Named pool (overrides shape flags)")
      ->check(CLI::IsMember({"standard", "easy", "heterogeneous", "disjoint"}));

  double zeta = 0.1;
  auto* profile = app.add_subcommand("profile", "Expert profiles, difficulty, complementarity");
  profile->add_option("--zeta", zeta)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  auto* calibrate = app.add_subcommand("calibrate", "Conformal thresholds per expert");
  calibrate->add_option("--zeta", zeta)->check(CLI::Range(0.0, 1.0))->capture_default_str();

  OptimizeArgs opt_args;
  auto* optimize = app.add_subcommand("optimize", "Tune the routing policy under a budget");
  optimize->add_option("--budget", opt_args.budget, "Mean GFLOPs per sample")
      ->required()
      ->check(CLI::PositiveNumber);
  optimize->add_option("--trials", opt_args.trials)->check(CLI::PositiveNumber)->capture_default_str();
  optimize->add_option("--sampler", opt_args.sampler)
      ->check(CLI::IsMember({"tpe", "random"}))
      ->capture_default_str();
  optimize->add_option("--measure", opt_args.measure)
      ->check(CLI::IsMember({"aps", "max_softmax", "entropy", "margin"}))
      ->capture_default_str();

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a method on the test split");
  evaluate->add_option("--method", eval_args.method)
      ->required()
      ->check(CLI::IsMember({"cads", "confidence", "cumulative", "full", "solo"}));
  evaluate->add_option("--config", eval_args.config, "Policy JSON, policy.json or study.json");
  evaluate->add_option("--threshold", eval_args.threshold)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  evaluate->add_option("--weighting", eval_args.weighting)
      ->check(CLI::IsMember({"hybrid", "uniform"}))
      ->capture_default_str();
  evaluate->add_option("--expert", eval_args.experts, "Solo expert indices (default: all)");
  evaluate->add_option("--measure", eval_args.measure)
      ->check(CLI::IsMember({"aps", "max_softmax", "entropy", "margin"}))
      ->capture_default_str();
  evaluate->add_flag("--traces", eval_args.traces, "Write per-sample traces.jsonl");

  std::string budgets_text = "0.1,0.5,1,2,5,10";
  std::size_t trials = cads::optimizer::kDefaultTrials;
  auto* sweep = app.add_subcommand("sweep", "Optimize and verify across budgets");
  sweep->add_option("--budgets", budgets_text)->capture_default_str();
  sweep->add_option("--trials", trials)->check(CLI::PositiveNumber)->capture_default_str();

  std::string axis;
  double ablate_budget = 1.0;
  auto* ablate = app.add_subcommand("ablate", "Ablation along one axis");
  ablate->add_option("--axis", axis)
      ->required()
      ->check(CLI::IsMember({"measure", "weighting", "exit"}));
  ablate->add_option("--budget", ablate_budget)->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_option("--trials", trials)->check(CLI::PositiveNumber)->capture_default_str();

  std::vector<double> budgets;
  try {
    app.parse(argc, argv);
    if (sweep->parsed()) budgets = ParseBudgets(budgets_text);
    if (validate->parsed() && common.manifest.empty()) {
      throw CLI::RequiredError("manifest_path");
    }
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  Run run(common, sub->get_name(), std::vector<std::string>(argv, argv + argc));
  int rc = 0;
  try {
    if (validate->parsed()) rc = CmdValidate(common, run);
    if (synth->parsed()) rc = CmdSynth(common, run, synth_args);
    if (profile->parsed()) rc = CmdProfile(common, run, zeta);
    if (calibrate->parsed()) rc = CmdCalibrate(common, run, zeta);
    if (optimize->parsed()) rc = CmdOptimize(common, run, opt_args);
    if (evaluate->parsed()) rc = CmdEvaluate(common, run, eval_args);
    if (sweep->parsed()) rc = CmdSweep(common, run, budgets, trials);
    if (ablate->parsed()) rc = CmdAblate(common, run, axis, ablate_budget, trials);
  } catch (const cads::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    run.Finish(1, e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    run.Finish(1, e.what());
    return 1;
  }
  run.Finish(rc);
  return rc;
}
