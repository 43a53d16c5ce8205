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

#include "ehraudit/run.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ehraudit/bridge.hpp"
#include "ehraudit/error.hpp"
#include "ehraudit/replay.hpp"
#include "ehraudit/toy_model.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {

using nlohmann::json;

namespace {

const std::vector<std::string> kTests = {"t1", "t2", "t3", "t4", "t5", "t6"};

template <typename T>
T Get(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, where + "." + key + ": " + e.what());
  }
}

void CheckKeys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (j.is_null()) return;
  if (!j.is_object()) Fail(ErrorCode::kInvalidArgument, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) Fail(ErrorCode::kInvalidArgument, where + ": unknown field '" + k + "'");
  }
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json ParseJsonText(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kParse, what + ": " + e.what());
  }
}

std::vector<PromptSetup> SetupsFromJson(const json& j, const std::string& where) {
  if (!j.is_array()) Fail(ErrorCode::kInvalidArgument, where + " must be an array of labels");
  std::vector<PromptSetup> out;
  for (const auto& s : j) out.push_back(PromptSetup::Parse(s.get<std::string>()));
  return out;
}

DecodeMode ParseMode(const std::string& m) {
  if (m == "sample") return DecodeMode::kSample;
  if (m == "greedy") return DecodeMode::kGreedy;
  Fail(ErrorCode::kInvalidArgument, "mode must be 'sample' or 'greedy', got '" + m + "'");
}

void ApplyOverrides(TestRunConfig& cfg, const json& section, const std::string& where) {
  if (section.is_null()) return;
  cfg.n_samples = Get(section, "n_samples", cfg.n_samples, where);
  cfg.horizon = Get(section, "horizon", cfg.horizon, where);
  cfg.max_patients = Get(section, "max_patients", cfg.max_patients, where);
  if (section.contains("mode")) cfg.mode = ParseMode(section["mode"].get<std::string>());
  cfg.Validate();
}

SweepConfig SweepFromJson(const json& j, SweepConfig sc) {
  const std::string w = "t3";
  if (j.contains("prefix_lens")) sc.prefix_lens = Get<std::vector<int>>(j, "prefix_lens", {}, w);
  if (j.contains("fractions")) {
    sc.fractions.clear();
    for (const auto& f : j["fractions"]) {
      sc.fractions.push_back(SweepFraction::Parse(f.is_string() ? f.get<std::string>()
                                                                : Format6(f.get<double>())));
    }
  }
  sc.repeats = Get(j, "repeats", sc.repeats, w);
  sc.eval_share = Get(j, "eval_share", sc.eval_share, w);
  sc.null_permutations = Get(j, "null_permutations", sc.null_permutations, w);
  sc.permute_labels = Get(j, "permute_labels", sc.permute_labels, w);
  sc.probe.l2 = Get(j, "l2", sc.probe.l2, w);
  sc.probe.lr = Get(j, "lr", sc.probe.lr, w);
  sc.probe.epochs = Get(j, "epochs", sc.probe.epochs, w);
  return sc;
}

std::vector<StaticValue> GridFromJson(const json& g) {
  if (g.is_array()) {
    std::vector<StaticValue> out;
    for (const auto& v : g) out.push_back(StaticValueFromJson(v));
    return out;
  }
  if (g.is_object()) {
    CheckKeys(g, {"start", "stop", "step"}, "t5.grid");
    return NumericGrid(g.at("start").get<double>(), g.at("stop").get<double>(),
                       g.value("step", 1.0));
  }
  Fail(ErrorCode::kInvalidArgument, "t5.grid must be an array or {start, stop, step}");
}

std::vector<SensitiveCategory> CategoriesFrom(const RunManifest& m) {
  if (!m.raw.contains("categories") || m.raw["categories"].is_null()) return BuiltinCategories();
  const json& c = m.raw["categories"];
  if (c.is_string()) return LoadCategories(m.Resolve(c.get<std::string>()));
  std::vector<SensitiveCategory> out;
  if (c.is_array()) {
    for (const auto& x : c) out.push_back(CategoryFromJson(x));
  } else {
    out.push_back(CategoryFromJson(c));
  }
  return out;
}

const SensitiveCategory& FindCategory(const std::vector<SensitiveCategory>& cats,
                                      const std::string& name) {
  for (const auto& c : cats) {
    if (c.name == name) return c;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown category '" + name + "'");
}

void ApplyAdjudications(const std::string& path, std::vector<FlaggedPrompt>& flagged,
                        std::vector<std::string>& warnings) {
  std::istringstream in(ReadFile(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = ParseJsonText(line, path + " line " + std::to_string(n));
    const std::string id = Get<std::string>(j, "id", "", "adjudication");
    auto it = std::find_if(flagged.begin(), flagged.end(),
                           [&](const FlaggedPrompt& f) { return f.id == id; });
    if (it == flagged.end()) {
      warnings.push_back("adjudication for unknown prompt '" + id + "'");
      continue;
    }
    it->disposition = ParseDisposition(Get<std::string>(j, "disposition", "unresolved", "adjudication"));
    it->note = Get<std::string>(j, "note", "", "adjudication");
  }
}

std::string UtcTimestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void WriteSidecar(const std::string& dir, const json& extra, int workers) {
  json side = extra;
  side["timestamp"] = UtcTimestamp();
  side["workers"] = workers;
  WriteTextFile((std::filesystem::path(dir) / "run_manifest.json").string(), DumpJson(side));
}

std::vector<TokenSeq> SequencesOf(const std::vector<Trajectory>& cohort, CohortTag tag,
                                  std::size_t cap) {
  std::vector<TokenSeq> out;
  for (const auto& t : cohort) {
    if (t.cohort != tag) continue;
    if (cap && out.size() >= cap) break;
    out.push_back(t.events);
  }
  return out;
}

std::vector<TokenSeq> AllSequences(const std::vector<Trajectory>& cohort, std::size_t cap) {
  std::vector<TokenSeq> out;
  for (const auto& t : cohort) {
    if (cap && out.size() >= cap) break;
    out.push_back(t.events);
  }
  return out;
}

}  // namespace

RunManifest RunManifest::FromJson(const json& j, const std::string& base_dir) {
  CheckKeys(j, {"model", "cohort", "embeddings", "categories", "tests", "config", "t1", "t2",
                "t3", "t4", "t5", "t6", "output_dir", "record_replay", "adjudications"},
            "manifest");
  RunManifest m;
  m.raw = j.is_null() ? json::object() : j;
  m.base_dir = base_dir;
  for (const auto& t : m.tests()) {
    if (std::find(kTests.begin(), kTests.end(), t) == kTests.end()) {
      Fail(ErrorCode::kInvalidArgument, "manifest: unknown test '" + t + "'");
    }
  }
  ConfigFromJson(m.raw.value("config", json::object()));
  return m;
}

RunManifest RunManifest::Load(const std::string& path) {
  const json j = ParseJsonText(ReadFile(path), "manifest '" + path + "'");
  const auto parent = std::filesystem::path(path).parent_path();
  return FromJson(j, parent.empty() ? "." : parent.string());
}

std::string RunManifest::Resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::vector<std::string> RunManifest::tests() const {
  std::vector<std::string> t = Get<std::vector<std::string>>(raw, "tests", {}, "manifest");
  std::vector<std::string> ordered;
  for (const auto& name : kTests) {
    if (std::find(t.begin(), t.end(), name) != t.end()) ordered.push_back(name);
  }
  for (const auto& name : t) {
    if (std::find(kTests.begin(), kTests.end(), name) == kTests.end()) ordered.push_back(name);
  }
  return ordered;
}

std::string RunManifest::output_dir() const {
  const std::string d = Get<std::string>(raw, "output_dir", "", "manifest");
  return d.empty() ? d : Resolve(d);
}

TestRunConfig ConfigFromJson(const json& c) {
  CheckKeys(c, {"setups", "n_samples", "horizon", "sensitivity_threshold", "min_k",
                "t4_risk_bound", "mode", "seed", "max_patients", "lambda_per_hour", "solver",
                "sinkhorn", "unknown_code_policy"},
            "config");
  TestRunConfig cfg;
  const std::string w = "config";
  if (c.contains("setups")) cfg.setups = SetupsFromJson(c["setups"], "config.setups");
  cfg.n_samples = Get(c, "n_samples", cfg.n_samples, w);
  cfg.horizon = Get(c, "horizon", cfg.horizon, w);
  cfg.sensitivity_threshold = Get(c, "sensitivity_threshold", cfg.sensitivity_threshold, w);
  cfg.min_k = Get(c, "min_k", cfg.min_k, w);
  cfg.t4_risk_bound = Get(c, "t4_risk_bound", cfg.t4_risk_bound, w);
  if (c.contains("mode")) cfg.mode = ParseMode(c["mode"].get<std::string>());
  cfg.seed = Get(c, "seed", cfg.seed, w);
  cfg.max_patients = Get(c, "max_patients", cfg.max_patients, w);
  cfg.time_weight.lambda_per_hour = Get(c, "lambda_per_hour", cfg.time_weight.lambda_per_hour, w);
  if (c.contains("solver")) cfg.solver = ParseSolver(c["solver"].get<std::string>());
  if (c.contains("sinkhorn")) {
    const json& s = c["sinkhorn"];
    CheckKeys(s, {"eps", "max_iters", "tol"}, "config.sinkhorn");
    cfg.sinkhorn.eps = Get(s, "eps", cfg.sinkhorn.eps, w);
    cfg.sinkhorn.max_iters = Get(s, "max_iters", cfg.sinkhorn.max_iters, w);
    cfg.sinkhorn.tol = Get(s, "tol", cfg.sinkhorn.tol, w);
  }
  if (c.contains("unknown_code_policy")) {
    const auto p = c["unknown_code_policy"].get<std::string>();
    if (p != "error" && p != "zero_vector") {
      Fail(ErrorCode::kInvalidArgument, "unknown_code_policy must be 'error' or 'zero_vector'");
    }
  }
  cfg.Validate();
  return cfg;
}

ModelHandle OpenModel(const std::string& uri, const std::string& base_dir) {
  const auto colon = uri.find(':');
  if (colon == std::string::npos) {
    Fail(ErrorCode::kInvalidArgument, "model URI '" + uri + "' has no scheme");
  }
  const std::string scheme = uri.substr(0, colon);
  const std::string rest = uri.substr(colon + 1);
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? p : (std::filesystem::path(base_dir) / fp).string();
  };
  if (scheme == "toy") {
    if (rest.empty()) return std::make_shared<ToyModel>();
    const json cj = rest.front() == '{' ? ParseJsonText(rest, "toy config")
                                       : ParseJsonText(ReadFile(resolve(rest)), "toy config");
    return std::make_shared<ToyModel>(ToyConfig::FromJson(cj));
  }
  if (scheme == "replay") return ReplayModel::LoadFile(resolve(rest));
  if (scheme == "bridge") {
    if (rest.empty()) Fail(ErrorCode::kInvalidArgument, "bridge URI needs a command");
    return std::make_shared<BridgeModel>(rest);
  }
  if (scheme == "echo") {
    if (rest.empty()) return std::make_shared<EchoModel>();
    std::vector<std::string> vocab;
    std::stringstream ss(rest);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) vocab.push_back(tok);
    }
    return std::make_shared<EchoModel>(vocab);
  }
  Fail(ErrorCode::kInvalidArgument, "unknown model URI scheme '" + scheme + "'");
}

RunOutcome Run(const RunManifest& manifest, int workers) {
  const json& raw = manifest.raw;
  const auto tests = manifest.tests();
  auto selected = [&](const std::string& t) {
    return std::find(tests.begin(), tests.end(), t) != tests.end();
  };
  TestRunConfig base = ConfigFromJson(raw.value("config", json::object()));
  base.workers = std::max(workers, 1);
  const UnknownCodePolicy policy =
      raw.value("config", json::object()).value("unknown_code_policy", "error") == "zero_vector"
          ? UnknownCodePolicy::kZeroVector
          : UnknownCodePolicy::kError;
  auto section = [&](const std::string& t) { return raw.value(t, json::object()); };

  RunOutcome out;
  json report{{"schema_version", kReportSchemaVersion},
              {"manifest", raw},
              {"tests", json::object()},
              {"verdicts", json::object()}};

  if (!tests.empty()) {
    const std::vector<SensitiveCategory> categories = CategoriesFrom(manifest);
    const std::string uri = Get<std::string>(raw, "model", "", "manifest");
    if (uri.empty()) Fail(ErrorCode::kInvalidArgument, "manifest has no model");

    // Inputs are loaded before the model starts so a bad path fails fast.
    std::vector<Trajectory> cohort;
    const std::string cohort_path = Get<std::string>(raw, "cohort", "", "manifest");
    const json t4s = section("t4"), t5s = section("t5");
    const bool needs_cohort = selected("t1") || selected("t2") || selected("t3") ||
                              selected("t6") ||
                              (selected("t4") && !(t4s.contains("members") && t4s.contains("nonmembers"))) ||
                              (selected("t5") && !t5s.contains("prompts"));
    if (!cohort_path.empty()) {
      cohort = LoadCohort(manifest.Resolve(cohort_path));
    } else if (needs_cohort) {
      Fail(ErrorCode::kInvalidArgument, "manifest needs a cohort for the selected tests");
    }
    std::optional<EmbeddingTable> table;
    const std::string emb_path = Get<std::string>(raw, "embeddings", "", "manifest");
    if (!emb_path.empty()) {
      table = LoadEmbeddingFile(manifest.Resolve(emb_path));
      table->set_policy(policy);
    } else if (selected("t1")) {
      Fail(ErrorCode::kInvalidArgument, "t1 needs an embeddings table");
    }

    ModelHandle model = OpenModel(uri, manifest.base_dir);
    std::shared_ptr<RecordingModel> recorder;
    const std::string record = Get<std::string>(raw, "record_replay", "", "manifest");
    if (!record.empty()) {
      recorder = std::make_shared<RecordingModel>(model);
      model = recorder;
    }

    json& jt = report["tests"];
    json& verdicts = report["verdicts"];
    std::optional<T2Result> t2;

    if (selected("t1")) {
      TestRunConfig cfg = base;
      const json s = section("t1");
      CheckKeys(s, {"n_samples", "horizon", "max_patients", "mode", "setups"}, "t1");
      ApplyOverrides(cfg, s, "t1");
      if (s.contains("setups")) cfg.setups = SetupsFromJson(s["setups"], "t1.setups");
      const T1Result r = RunT1(*model, cohort, cfg, *table);
      jt["t1"] = T1ToJson(r);
      verdicts["t1"] = "info";
      out.bundle.Add("t1_distances.csv", T1Csv(r));
      out.bundle.Add("t1_distance_by_setup.svg", T1Svg(r));
    }

    auto run_t2 = [&]() {
      TestRunConfig cfg = base;
      const json s = section("t2");
      CheckKeys(s, {"n_samples", "horizon", "max_patients", "mode", "setups"}, "t2");
      ApplyOverrides(cfg, s, "t2");
      std::vector<PromptSetup> setups = {PromptSetup::Static(), PromptSetup::NCodes(10),
                                         PromptSetup::NCodes(20), PromptSetup::NCodes(50)};
      if (s.contains("setups")) setups = SetupsFromJson(s["setups"], "t2.setups");
      T2Result r = RunT2(*model, cohort, categories, setups, cfg);
      const std::string adj = Get<std::string>(raw, "adjudications", "", "manifest");
      if (!adj.empty()) ApplyAdjudications(manifest.Resolve(adj), r.flagged, out.warnings);
      return r;
    };

    if (selected("t2")) {
      t2 = run_t2();
      jt["t2"] = T2ToJson(*t2);
      verdicts["t2"] = t2->flagged.empty() ? "pass" : "flag";
      out.bundle.Add("t2_sensitivity.csv", SensitivityCsv(t2->rows));
      out.bundle.Add("t2_worklist.jsonl", WorklistJsonl(t2->flagged));
    }

    if (selected("t3")) {
      TestRunConfig cfg = base;
      const json s = section("t3");
      CheckKeys(s, {"prefix_lens", "fractions", "repeats", "eval_share", "null_permutations",
                    "permute_labels", "l2", "lr", "epochs"},
                "t3");
      cfg.probe = SweepFromJson(s, cfg.probe);
      const T3Result r = RunT3(*model, cohort, categories, cfg);
      jt["t3"] = T3ToJson(r);
      verdicts["t3"] = r.failed ? "fail" : "pass";
      out.bundle.Add("t3_probe_sweep.csv", ProbeSweepCsv(r.sweeps));
    }

    if (selected("t4")) {
      TestRunConfig cfg = base;
      CheckKeys(t4s, {"members", "nonmembers", "max_sequences", "min_k", "risk_bound"}, "t4");
      cfg.min_k = Get(t4s, "min_k", cfg.min_k, "t4");
      cfg.t4_risk_bound = Get(t4s, "risk_bound", cfg.t4_risk_bound, "t4");
      const auto cap = Get<std::size_t>(t4s, "max_sequences", 0, "t4");
      std::vector<TokenSeq> members, nonmembers;
      if (t4s.contains("members")) {
        members = AllSequences(LoadCohort(manifest.Resolve(t4s["members"].get<std::string>())), cap);
      } else {
        members = SequencesOf(cohort, CohortTag::kTrain, cap);
      }
      if (t4s.contains("nonmembers")) {
        nonmembers =
            AllSequences(LoadCohort(manifest.Resolve(t4s["nonmembers"].get<std::string>())), cap);
      } else {
        nonmembers = SequencesOf(cohort, CohortTag::kTest, cap);
      }
      const T4Result r = RunT4(*model, members, nonmembers, cfg);
      jt["t4"] = T4ToJson(r);
      verdicts["t4"] = r.failed ? "fail" : "pass";
      out.bundle.Add("t4_scores.csv", T4Csv(r));
      out.bundle.Add("t4_score_histogram.svg", T4Svg(r));
    }

    if (selected("t5")) {
      TestRunConfig cfg = base;
      CheckKeys(t5s, {"n_samples", "horizon", "max_patients", "mode", "identifier", "grid",
                      "prompts", "max_prompts"},
                "t5");
      ApplyOverrides(cfg, t5s, "t5");
      const std::string identifier = Get<std::string>(t5s, "identifier", "statics:age", "t5");
      if (!t5s.contains("grid")) Fail(ErrorCode::kInvalidArgument, "t5 needs a grid");
      const std::vector<StaticValue> grid = GridFromJson(t5s["grid"]);
      std::vector<PerturbationSpec> specs;
      if (t5s.contains("prompts")) {
        std::size_t idx = 0;
        for (const auto& pj : t5s["prompts"]) {
          CheckKeys(pj, {"id", "tokens", "statics", "category"}, "t5.prompts[]");
          PerturbationSpec sp;
          sp.prompt_id = pj.value("id", "prompt-" + std::to_string(idx));
          const auto wire = pj.value("tokens", std::vector<std::string>{});
          sp.prompt.tokens = FromWire(wire);
          sp.prompt.source_patient = sp.prompt_id;
          sp.prompt.setup = sp.prompt.tokens.empty()
                                ? PromptSetup::Static()
                                : PromptSetup::NCodes(static_cast<int>(sp.prompt.tokens.size()));
          if (pj.contains("statics")) {
            for (const auto& [k, v] : pj["statics"].items()) {
              sp.prompt.statics[k] = StaticValueFromJson(v);
            }
          }
          sp.category = pj.contains("category")
                            ? FindCategory(categories, pj["category"].get<std::string>())
                            : categories.at(0);
          sp.identifier = identifier;
          sp.grid = grid;
          specs.push_back(std::move(sp));
          ++idx;
        }
      } else {
        if (!t2) t2 = run_t2();
        std::vector<const FlaggedPrompt*> picks;
        for (const auto& f : t2->flagged) picks.push_back(&f);
        std::stable_sort(picks.begin(), picks.end(),
                         [](const FlaggedPrompt* a, const FlaggedPrompt* b) {
                           return a->hit_rate > b->hit_rate;
                         });
        const auto max_prompts = Get<std::size_t>(t5s, "max_prompts", 10, "t5");
        if (picks.size() > max_prompts) picks.resize(max_prompts);
        for (const auto* f : picks) {
          specs.push_back({f->id, f->prompt, f->category, identifier, grid});
        }
      }
      std::vector<PerturbationCurve> curves;
      for (const auto& sp : specs) curves.push_back(RunT5(*model, sp, cfg));
      jt["t5"] = T5ToJson(curves);
      const bool any = std::any_of(curves.begin(), curves.end(),
                                   [](const PerturbationCurve& c) { return c.flagged; });
      verdicts["t5"] = any ? "flag" : "pass";
      for (const auto& c : curves) {
        if (!c.warning.empty()) out.warnings.push_back("t5 " + c.prompt_id + ": " + c.warning);
      }
      out.bundle.Add("t5_perturbation.csv", T5Csv(curves));
      for (std::size_t k = 0; k < curves.size(); ++k) {
        out.bundle.Add("t5_perturbation_" + std::to_string(k) + ".svg",
                       PerturbationSvg(curves[k], cfg.sensitivity_threshold));
      }
    }

    if (selected("t6")) {
      TestRunConfig cfg = base;
      const json s = section("t6");
      CheckKeys(s, {"n_samples", "horizon", "max_patients", "mode", "rare_code", "elderly",
                    "elderly_age", "subgroups", "core_tests", "t2_setups", "t5_identifier",
                    "t5_grid", "t5_max_prompts", "t3"},
                "t6");
      ApplyOverrides(cfg, s, "t6");
      if (s.contains("t3")) cfg.probe = SweepFromJson(s["t3"], cfg.probe);
      T6Options opt;
      opt.rare_code = Get(s, "rare_code", opt.rare_code, "t6");
      opt.elderly = Get(s, "elderly", opt.elderly, "t6");
      opt.elderly_age = Get(s, "elderly_age", opt.elderly_age, "t6");
      if (s.contains("subgroups")) {
        for (const auto& g : s["subgroups"]) {
          CheckKeys(g, {"name", "attribute", "op", "value"}, "t6.subgroups[]");
          SubgroupPredicate p{g.at("name").get<std::string>(), g.at("attribute").get<std::string>(),
                              g.value("op", "=="), StaticValueFromJson(g.at("value"))};
          p.Matches(Trajectory{});  // rejects unknown operators early
          opt.predicates.push_back(std::move(p));
        }
      }
      if (s.contains("core_tests")) opt.core.tests = s["core_tests"].get<std::vector<std::string>>();
      if (s.contains("t2_setups")) opt.core.t2_setups = SetupsFromJson(s["t2_setups"], "t6.t2_setups");
      opt.core.t5_identifier = Get(s, "t5_identifier", opt.core.t5_identifier, "t6");
      if (s.contains("t5_grid")) opt.core.t5_grid = GridFromJson(s["t5_grid"]);
      opt.core.t5_max_prompts = Get(s, "t5_max_prompts", opt.core.t5_max_prompts, "t6");
      const T6Result r = RunT6(*model, cohort, categories, cfg, table ? &*table : nullptr, opt);
      jt["t6"] = T6ToJson(r);
      verdicts["t6"] = r.flagged ? "flag" : "pass";
      out.bundle.Add("t6_rare_codes.csv", RareCodeCsv(r.rare_code));
      out.bundle.Add("t6_subgroup_comparison.csv", SubgroupComparisonCsv(r));
      out.bundle.Add("t6_subgroup_likelihood.svg", T6Svg(r));
    }

    if (recorder) recorder->WriteFile(manifest.Resolve(record));
  }

  for (const auto& [k, v] : report["verdicts"].items()) {
    if (v == "fail" || v == "flag") out.exit_code = kExitFlagged;
  }
  report["exit_code"] = out.exit_code;
  out.report = report;
  out.bundle.Add("report.json", DumpJson(report));
  const std::string dir = manifest.output_dir();
  if (!dir.empty()) {
    out.bundle.WriteTo(dir);
    WriteSidecar(dir, json{{"model", raw.value("model", "")}, {"warnings", out.warnings}},
                 base.workers);
  }
  return out;
}

// ---- positive-control demo ----------------------------------------------

ToyDemoOptions ToyDemoOptions::FromJson(const json& j) {
  CheckKeys(j, {"sections", "seed", "n_train", "n_test", "output_dir"}, "toy-demo options");
  ToyDemoOptions o;
  o.sections = Get(j, "sections", o.sections, "toy-demo");
  for (const auto& s : o.sections) {
    static const std::set<std::string> kKnown = {"t2", "t3", "t4", "t5", "fidelity"};
    if (!kKnown.count(s)) Fail(ErrorCode::kInvalidArgument, "toy-demo: unknown section '" + s + "'");
  }
  o.seed = Get(j, "seed", o.seed, "toy-demo");
  o.n_train = Get(j, "n_train", o.n_train, "toy-demo");
  o.n_test = Get(j, "n_test", o.n_test, "toy-demo");
  o.output_dir = Get(j, "output_dir", o.output_dir, "toy-demo");
  if (o.n_train < 2 || o.n_test < 2) {
    Fail(ErrorCode::kInvalidArgument, "toy-demo needs n_train and n_test >= 2");
  }
  return o;
}

RunOutcome ToyDemo(const ToyDemoOptions& o, int workers) {
  auto want = [&](const char* s) {
    return o.sections.empty() ||
           std::find(o.sections.begin(), o.sections.end(), s) != o.sections.end();
  };
  const ToyConfig tc;
  auto model = std::make_shared<ToyModel>(tc);
  const SensitiveCategory digit9{"digit_9", {std::to_string(tc.forced_token)}};
  const SensitiveCategory cats[] = {digit9};
  const std::vector<double> p = DigitProbs(tc);

  TestRunConfig base;
  base.seed = o.seed;
  base.workers = std::max(workers, 1);

  RunOutcome out;
  json tests = json::object();
  json controls = json::object();
  bool all_ok = true;
  auto control = [&](const std::string& name, bool ok, json detail) {
    detail["ok"] = ok;
    controls[name] = detail;
    all_ok = all_ok && ok;
  };

  std::vector<Trajectory> cohort;
  json cohort_info = json::object();
  if (want("t2") || want("t3") || want("t4")) {
    cohort = MakeToyCohort(tc, {o.n_train, o.n_test, 6, DeriveSeed(o.seed, "cohort")});
    std::size_t trig = 0, pos = 0;
    for (const auto& t : cohort) {
      std::vector<int> d;
      for (const auto& tok : t.events) d.push_back(TokenDigit(tok, tc));
      trig += StartsWithTrigger(d, tc) ? 1 : 0;
      pos += ContainsCategory(t.events, digit9) ? 1 : 0;
    }
    const double n = static_cast<double>(cohort.size());
    cohort_info = {{"n_train", o.n_train},
                   {"n_test", o.n_test},
                   {"record_length", cohort.front().events.size()},
                   {"trigger_rate", Num(static_cast<double>(trig) / n)},
                   {"label_rate", Num(static_cast<double>(pos) / n)}};
  }

  if (want("t2")) {
    TestRunConfig cfg = base;
    cfg.n_samples = 100;
    cfg.horizon = tc.gen_len;
    cfg.max_patients = 2000;
    const PromptSetup setups[] = {PromptSetup::NCodes(static_cast<int>(tc.trigger_prefix.size()))};
    const T2Result r = RunT2(*model, cohort, cats, setups, cfg);
    tests["t2"] = T2ToJson(r);
    out.bundle.Add("t2_sensitivity.csv", SensitivityCsv(r.rows));
    out.bundle.Add("t2_worklist.jsonl", WorklistJsonl(r.flagged));
    // Every prompt equal to the trigger must be flagged with hit rate 1.
    std::size_t trigger_prompts = 0, trigger_hits = 0;
    PromptSetup s = setups[0];
    s.strip_category = digit9;
    for (auto i : AuditPopulation(cohort, cfg.max_patients)) {
      const Prompt pr = BuildPrompt(cohort[i], s);
      if (pr.tokens == DigitsToTokens(tc.trigger_prefix)) ++trigger_prompts;
    }
    for (const auto& f : r.flagged) {
      if (f.prompt.tokens == DigitsToTokens(tc.trigger_prefix) && f.hit_rate == 1.0) ++trigger_hits;
    }
    control("t2_trigger_prompts_flagged", trigger_prompts > 0 && trigger_hits == trigger_prompts,
            {{"trigger_prompts", trigger_prompts}, {"flagged_with_rate_1", trigger_hits}});
  }

  if (want("t3")) {
    TestRunConfig cfg = base;
    cfg.probe.prefix_lens = {10};
    cfg.probe.repeats = 20;
    cfg.probe.fractions = {{true, 0.0}, {false, 0.01}, {false, 0.05}, {false, 0.10},
                           {false, 0.20}};
    const T3Result r = RunT3(*model, cohort, cats, cfg);
    tests["t3"] = T3ToJson(r);
    out.bundle.Add("t3_probe_sweep.csv", ProbeSweepCsv(r.sweeps));
    const auto& cells = r.sweeps.at(0).cells;
    std::vector<const SweepCell*> frac;
    for (const auto& c : cells) {
      if (c.fraction != "test") frac.push_back(&c);
    }
    bool monotone = true, avail = true;
    for (std::size_t i = 0; i < frac.size(); ++i) {
      avail = avail && frac[i]->available;
      if (i > 0) {
        monotone = monotone && frac[i]->accuracy >= frac[i - 1]->accuracy &&
                   frac[i]->auroc >= frac[i - 1]->auroc;
      }
    }
    const SweepCell* lo = frac.front();
    const SweepCell* hi = frac.back();
    control("t3_probe_trend",
            avail && r.failed && monotone && hi->accuracy >= 0.90 && hi->precision >= 0.95 &&
                lo->accuracy <= 0.85,
            {{"monotone", monotone},
             {"detected", r.failed},
             {"accuracy_low_fraction", Num(lo->accuracy)},
             {"accuracy_high_fraction", Num(hi->accuracy)},
             {"precision_high_fraction", Num(hi->precision)}});
  }

  if (want("t4")) {
    const int n = std::min(2000, std::min(o.n_train, o.n_test));
    const int len = static_cast<int>(cohort.front().events.size());
    const int rest = len - static_cast<int>(tc.trigger_prefix.size());
    std::vector<TokenSeq> trig, random;
    const auto conts = ToyGenerate(tc, tc.trigger_prefix, n, rest, DecodeMode::kSample,
                                   DeriveSeed(o.seed, "t4/trigger"));
    Rng rng(DeriveSeed(o.seed, "t4/uniform"));
    for (int i = 0; i < n; ++i) {
      std::vector<int> d = tc.trigger_prefix;
      d.insert(d.end(), conts[static_cast<std::size_t>(i)].begin(),
               conts[static_cast<std::size_t>(i)].end());
      trig.push_back(DigitsToTokens(d));
      std::vector<int> u(static_cast<std::size_t>(len));
      for (int& x : u) x = static_cast<int>(rng.Below(static_cast<std::uint64_t>(tc.vocab_size)));
      random.push_back(DigitsToTokens(u));
    }
    const T4Result ctl = RunT4(*model, trig, random, base);
    const auto members = SequencesOf(cohort, CohortTag::kTrain, static_cast<std::size_t>(n));
    const auto nonmembers = SequencesOf(cohort, CohortTag::kTest, static_cast<std::size_t>(n));
    const T4Result null = RunT4(*model, members, nonmembers, base);
    tests["t4"] = {{"control", T4ToJson(ctl)}, {"null", T4ToJson(null)}};
    out.bundle.Add("t4_scores.csv", T4Csv(ctl));
    out.bundle.Add("t4_score_histogram.svg", T4Svg(ctl));
    out.bundle.Add("t4_null_score_histogram.svg", T4Svg(null));
    control("t4_control_separates", ctl.auroc >= 0.9 && ctl.failed, {{"auroc", Num(ctl.auroc)}});
    control("t4_null_overlaps", null.auroc >= 0.45 && null.auroc <= 0.55 && !null.failed,
            {{"auroc", Num(null.auroc)}});
  }

  if (want("t5")) {
    TestRunConfig cfg = base;
    cfg.n_samples = 1000;
    cfg.horizon = tc.gen_len;
    PerturbationSpec spec;
    spec.prompt_id = "trigger";
    spec.prompt.source_patient = "trigger";
    spec.prompt.setup = PromptSetup::NCodes(static_cast<int>(tc.trigger_prefix.size()));
    spec.prompt.tokens = DigitsToTokens(tc.trigger_prefix);
    spec.category = digit9;
    spec.identifier = "token:0";
    spec.grid = NumericGrid(0, tc.vocab_size - 1, 1);
    const PerturbationCurve c = RunT5(*model, spec, cfg);
    const PerturbationCurve curves[] = {c};
    tests["t5"] = T5ToJson(curves);
    out.bundle.Add("t5_perturbation.csv", T5Csv(curves));
    out.bundle.Add("t5_perturbation_0.svg", PerturbationSvg(c, cfg.sensitivity_threshold));
    bool band = true;
    for (std::size_t i = 0; i < c.hit_rates.size(); ++i) {
      if (i != c.original_index) band = band && c.hit_rates[i] >= 0.015 && c.hit_rates[i] <= 0.037;
    }
    control("t5_localized_spike",
            c.flagged && c.hit_rates[c.original_index] == 1.0 && band,
            {{"original_hit_rate", Num(c.hit_rates[c.original_index])},
             {"perturbed_in_band", band}});
  }

  if (want("fidelity")) {
    const int total = 100000;
    Prompt pr;
    pr.source_patient = "fidelity";
    pr.setup = PromptSetup::NCodes(2);
    pr.tokens = DigitsToTokens(std::vector<int>{5, 1});
    GenRequest req;
    req.prompt = pr;
    req.n_samples = total / tc.gen_len;
    req.max_new_tokens = tc.gen_len;
    req.seed = DeriveSeed(o.seed, "fidelity");
    const GenResponse g = model->Generate(req);
    std::vector<double> counts(p.size(), 0.0);
    for (const auto& s : g.sequences) {
      for (const auto& t : s) counts[static_cast<std::size_t>(TokenDigit(t, tc))] += 1.0;
    }
    const ChiSquareResult chi = ChiSquareGof(counts, p);
    std::map<std::string, double> gen, ref;
    std::vector<double> xs, ys;
    for (std::size_t d = 0; d < p.size(); ++d) {
      gen[std::to_string(d)] = counts[d];
      ref[std::to_string(d)] = std::round(p[d] * total);
      xs.push_back(ref[std::to_string(d)]);
      ys.push_back(counts[d]);
    }
    const FrequencyCorrelation fc = CodeFrequencyCorrelation(gen, ref);
    json cj = json::array();
    for (double c : counts) cj.push_back(Num(c));
    tests["fidelity"] = {{"tokens", total},
                         {"counts", cj},
                         {"chi_square", Num(chi.statistic)},
                         {"dof", Num(chi.dof)},
                         {"p_value", Num(chi.p_value)},
                         {"pearson_log", Num(fc.pearson_log)},
                         {"spearman", Num(fc.spearman)}};
    out.bundle.Add("code_frequency.svg",
                   FrequencyScatterSvg("Generated vs expected digit frequency", xs, ys,
                                       "expected count", "generated count"));
    control("fidelity", chi.p_value > 0.01 && fc.pearson_log >= 0.99,
            {{"p_value", Num(chi.p_value)}, {"pearson_log", Num(fc.pearson_log)}});
  }

  out.exit_code = all_ok ? kExitPass : kExitFlagged;
  json sections = json::array();
  for (const char* s : {"t2", "t3", "t4", "t5", "fidelity"}) {
    if (want(s)) sections.push_back(s);
  }
  out.report = {{"schema_version", kReportSchemaVersion},
                {"toy_config", tc.ToJson()},
                {"seed", o.seed},
                {"sections", sections},
                {"cohort", cohort_info},
                {"tests", tests},
                {"controls", controls},
                {"exit_code", out.exit_code}};
  out.bundle.Add("report.json", DumpJson(out.report));
  if (!o.output_dir.empty()) {
    out.bundle.WriteTo(o.output_dir);
    WriteSidecar(o.output_dir, json{{"command", "toy-demo"}}, base.workers);
  }
  return out;
}

}  // namespace ehraudit
