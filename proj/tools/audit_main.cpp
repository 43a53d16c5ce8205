// Copyright 2026 The EHR Audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Links only the C interface.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ehraudit/ehraudit.h"

namespace {

using nlohmann::json;

constexpr int kExitError = 1;

int ReportError(ehra_status s) {
  std::cerr << "audit: error [" << ehra_status_name(s) << "]: " << ehra_last_error() << "\n";
  return kExitError;
}

std::vector<std::string> SplitCommas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Numbers stay numbers so numeric statics perturb as numbers.
json ScalarFromText(const std::string& s) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(s, &used);
    if (used == s.size()) return i;
    const double d = std::stod(s, &used);
    if (used == s.size()) return d;
  } catch (const std::exception&) {
  }
  return s;
}

int Finish(ehra_status s, ehra_result* r, bool print_report) {
  if (s != EHRA_OK) return ReportError(s);
  for (size_t i = 0; i < ehra_result_warning_count(r); ++i) {
    std::cerr << "audit: warning: " << ehra_result_warning(r, i) << "\n";
  }
  const json report = json::parse(ehra_result_report(r));
  if (print_report) {
    std::cout << ehra_result_report(r);
  } else {
    const json& summary = report.contains("verdicts") ? report["verdicts"] : report["controls"];
    for (const auto& [name, v] : summary.items()) {
      std::cout << name << ": " << (v.is_object() ? (v["ok"].get<bool>() ? "ok" : "FAILED")
                                                  : v.get<std::string>())
                << "\n";
    }
  }
  const int code = ehra_result_exit_code(r);
  ehra_result_free(r);
  return code;
}

struct CommonFlags {
  std::string model = "toy:";
  std::string cohort;
  std::string embeddings;
  std::string categories;
  std::string config;
  std::string output_dir;
  std::string record_replay;
  std::optional<int> n_samples;
  std::optional<int> horizon;
  std::optional<std::size_t> max_patients;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> setups;
  std::optional<double> lambda;
  std::optional<std::string> solver;
};

void AddCommon(CLI::App* app, CommonFlags& f) {
  app->add_option("--model", f.model, "Model URI (toy:, replay:, bridge:, echo:)");
  app->add_option("--cohort", f.cohort, "Cohort JSONL file");
  app->add_option("--embeddings", f.embeddings, "Code embedding table");
  app->add_option("--categories", f.categories, "Sensitive category JSON file");
  app->add_option("--config", f.config, "JSON file with shared config fields");
  app->add_option("--output-dir", f.output_dir, "Directory for report files");
  app->add_option("--record-replay", f.record_replay, "Record model calls to this replay file");
  app->add_option("--n-samples", f.n_samples, "Samples per prompt");
  app->add_option("--horizon", f.horizon, "Generated tokens per sample");
  app->add_option("--max-patients", f.max_patients, "Cap on audited patients");
  app->add_option("--mode", f.mode, "sample or greedy")->check(CLI::IsMember({"sample", "greedy"}));
  app->add_option("--seed", f.seed, "Root seed");
  app->add_option("--setups", f.setups, "Comma-separated prompt setups");
  app->add_option("--lambda-per-hour", f.lambda, "Time penalty of the transport cost");
  app->add_option("--solver", f.solver, "exact or sinkhorn")->check(CLI::IsMember({"exact", "sinkhorn"}));
}

json ManifestFromCommon(const CommonFlags& f, const std::string& test) {
  json m{{"model", f.model}, {"tests", json::array({test})}};
  if (!f.cohort.empty()) m["cohort"] = f.cohort;
  if (!f.embeddings.empty()) m["embeddings"] = f.embeddings;
  if (!f.categories.empty()) m["categories"] = f.categories;
  if (!f.output_dir.empty()) m["output_dir"] = f.output_dir;
  if (!f.record_replay.empty()) m["record_replay"] = f.record_replay;
  json config = json::object();
  if (!f.config.empty()) {
    std::FILE* fp = std::fopen(f.config.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open config '" + f.config + "'");
    std::string text;
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof(buf), fp)) > 0;) text.append(buf, n);
    std::fclose(fp);
    config = json::parse(text);
  }
  if (f.seed) config["seed"] = *f.seed;
  if (f.lambda) config["lambda_per_hour"] = *f.lambda;
  if (f.solver) config["solver"] = *f.solver;
  m["config"] = config;
  json section = json::object();
  if (f.n_samples) section["n_samples"] = *f.n_samples;
  if (f.horizon) section["horizon"] = *f.horizon;
  if (f.max_patients) section["max_patients"] = *f.max_patients;
  if (f.mode) section["mode"] = *f.mode;
  if (f.setups) section["setups"] = SplitCommas(*f.setups);
  m[test] = section;
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box memorization and privacy audit for EHR foundation models"};
  app.require_subcommand(1);
  app.fallthrough();
  int workers = ehra_workers_from_env();
  if (workers < 1) {
    std::cerr << "audit: error [invalid_argument]: " << ehra_last_error() << "\n";
    return 1;
  }
  app.add_option("--workers", workers, "Worker threads (default: AUDIT_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  bool print_report = false;
  app.add_flag("--print-report", print_report, "Write report.json to stdout");

  std::string manifest_path, output_override;
  auto* run = app.add_subcommand("run", "Run the tests selected by a manifest");
  run->add_option("--manifest", manifest_path, "Manifest JSON file")->required();
  run->add_option("--output-dir", output_override, "Overrides the manifest output_dir");

  CommonFlags flags[6];
  CLI::App* tests[6];
  const char* names[6] = {"t1", "t2", "t3", "t4", "t5", "t6"};
  const char* descriptions[6] = {
      "Generative memorization by trajectory distance",
      "Sensitive attribute hit rates from stripped prompts",
      "Embedding probes for sensitive attributes",
      "Membership inference with Min-K% scores",
      "Perturbation of a prompt identifier",
      "Subgroup and rare-code audit"};
  for (int i = 0; i < 6; ++i) {
    tests[i] = app.add_subcommand(names[i], descriptions[i]);
    AddCommon(tests[i], flags[i]);
  }
  std::string adjudications;
  tests[1]->add_option("--adjudications", adjudications, "JSONL dispositions for flagged prompts");
  std::optional<std::string> prefix_lens, fractions;
  std::optional<int> repeats;
  tests[2]->add_option("--prefix-lens", prefix_lens, "Comma-separated prefix lengths");
  tests[2]->add_option("--fractions", fractions, "Comma-separated fractions or 'test'");
  tests[2]->add_option("--repeats", repeats, "Repeats per cell");
  std::string members, nonmembers;
  std::optional<double> min_k, risk_bound;
  std::optional<std::size_t> max_sequences;
  tests[3]->add_option("--members", members, "Member cohort JSONL");
  tests[3]->add_option("--nonmembers", nonmembers, "Non-member cohort JSONL");
  tests[3]->add_option("--min-k", min_k, "Fraction of lowest log-probabilities");
  tests[3]->add_option("--risk-bound", risk_bound, "AUROC at or above which the test fails");
  tests[3]->add_option("--max-sequences", max_sequences, "Cap per group");
  std::string identifier = "statics:age", grid, prompt_tokens, prompt_statics, prompt_category;
  tests[4]->add_option("--identifier", identifier, "statics:<name> or token:<index>");
  tests[4]->add_option("--grid", grid, "Comma-separated values or start:stop:step")->required();
  tests[4]->add_option("--prompt", prompt_tokens, "Comma-separated prompt tokens");
  tests[4]->add_option("--prompt-statics", prompt_statics, "Prompt statics as a JSON object");
  tests[4]->add_option("--category", prompt_category, "Category scored on the prompt");
  std::optional<double> elderly_age;
  bool no_rare = false;
  tests[5]->add_option("--elderly-age", elderly_age, "Age threshold of the elderly subgroup");
  tests[5]->add_flag("--no-rare-code", no_rare, "Skip the rare-code subgroup");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-cohort", "Check a cohort JSONL file");
  validate->add_option("file", validate_path, "Cohort JSONL file")->required();

  std::string demo_dir, demo_sections;
  std::optional<std::uint64_t> demo_seed;
  std::optional<int> demo_train, demo_test;
  auto* demo = app.add_subcommand("toy-demo", "Positive-control suite on the synthetic model");
  demo->add_option("--output-dir", demo_dir, "Directory for report files");
  demo->add_option("--sections", demo_sections, "Comma-separated subset of t2,t3,t4,t5,fidelity");
  demo->add_option("--seed", demo_seed, "Root seed");
  demo->add_option("--n-train", demo_train, "Train-tagged toy records");
  demo->add_option("--n-test", demo_test, "Test-tagged toy records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitError;
  }

  try {
    if (*run) {
      if (output_override.empty()) {
        ehra_result* r = nullptr;
        const ehra_status s = ehra_run_file(manifest_path.c_str(), workers, &r);
        return Finish(s, r, print_report);
      }
      std::FILE* fp = std::fopen(manifest_path.c_str(), "rb");
      if (!fp) {
        std::cerr << "audit: error [io_error]: cannot open '" << manifest_path << "'\n";
        return kExitError;
      }
      std::string text;
      char buf[4096];
      for (std::size_t n; (n = std::fread(buf, 1, sizeof(buf), fp)) > 0;) text.append(buf, n);
      std::fclose(fp);
      json m = json::parse(text);
      m["output_dir"] = output_override;
      std::string base = manifest_path;
      const auto slash = base.find_last_of('/');
      base = slash == std::string::npos ? "." : base.substr(0, slash);
      // The override is relative to the working directory, not the manifest.
      if (!output_override.empty() && output_override.front() != '/') {
        char cwd[4096];
        if (getcwd(cwd, sizeof(cwd))) m["output_dir"] = std::string(cwd) + "/" + output_override;
      }
      ehra_result* r = nullptr;
      const ehra_status s = ehra_run(m.dump().c_str(), base.c_str(), workers, &r);
      return Finish(s, r, print_report);
    }
    for (int i = 0; i < 6; ++i) {
      if (!*tests[i]) continue;
      json m = ManifestFromCommon(flags[i], names[i]);
      json& sec = m[names[i]];
      if (i == 1 && !adjudications.empty()) m["adjudications"] = adjudications;
      if (i == 2) {
        sec.erase("n_samples");
        sec.erase("horizon");
        sec.erase("max_patients");
        sec.erase("mode");
        sec.erase("setups");
        if (prefix_lens) {
          json lens = json::array();
          for (const auto& s : SplitCommas(*prefix_lens)) lens.push_back(std::stoi(s));
          sec["prefix_lens"] = lens;
        }
        if (fractions) sec["fractions"] = SplitCommas(*fractions);
        if (repeats) sec["repeats"] = *repeats;
      }
      if (i == 3) {
        sec = json::object();
        if (!members.empty()) sec["members"] = members;
        if (!nonmembers.empty()) sec["nonmembers"] = nonmembers;
        if (min_k) sec["min_k"] = *min_k;
        if (risk_bound) sec["risk_bound"] = *risk_bound;
        if (max_sequences) sec["max_sequences"] = *max_sequences;
      }
      if (i == 4) {
        sec.erase("setups");
        sec["identifier"] = identifier;
        if (grid.find(':') != std::string::npos && grid.find(',') == std::string::npos) {
          double a = 0, b = 0, c = 1;
          if (std::sscanf(grid.c_str(), "%lf:%lf:%lf", &a, &b, &c) < 2) {
            std::cerr << "audit: error [invalid_argument]: bad --grid range '" << grid << "'\n";
            return kExitError;
          }
          sec["grid"] = {{"start", a}, {"stop", b}, {"step", c}};
        } else {
          json g = json::array();
          for (const auto& s : SplitCommas(grid)) g.push_back(ScalarFromText(s));
          sec["grid"] = g;
        }
        if (!prompt_tokens.empty() || !prompt_statics.empty()) {
          json p{{"id", "cli"}, {"tokens", SplitCommas(prompt_tokens)}};
          if (!prompt_statics.empty()) p["statics"] = json::parse(prompt_statics);
          if (!prompt_category.empty()) p["category"] = prompt_category;
          sec["prompts"] = json::array({p});
        }
      }
      if (i == 5) {
        sec.erase("setups");
        if (elderly_age) sec["elderly_age"] = *elderly_age;
        if (no_rare) sec["rare_code"] = false;
      }
      ehra_result* r = nullptr;
      const ehra_status s = ehra_run(m.dump().c_str(), ".", workers, &r);
      return Finish(s, r, print_report);
    }
    if (*validate) {
      char* report = nullptr;
      int ok = 0;
      const ehra_status s = ehra_validate_cohort(validate_path.c_str(), &report, &ok);
      if (s != EHRA_OK) return ReportError(s);
      std::cout << report << "\n";
      ehra_string_free(report);
      return ok ? 0 : kExitError;
    }
    if (*demo) {
      json o = json::object();
      if (!demo_dir.empty()) o["output_dir"] = demo_dir;
      if (!demo_sections.empty()) o["sections"] = SplitCommas(demo_sections);
      if (demo_seed) o["seed"] = *demo_seed;
      if (demo_train) o["n_train"] = *demo_train;
      if (demo_test) o["n_test"] = *demo_test;
      ehra_result* r = nullptr;
      const ehra_status s = ehra_toy_demo(o.dump().c_str(), workers, &r);
      return Finish(s, r, print_report);
    }
  } catch (const std::exception& e) {
    std::cerr << "audit: error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
