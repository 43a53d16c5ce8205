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

#include "ehraudit/ehraudit.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehraudit/corpus.hpp"
#include "ehraudit/embedding.hpp"
#include "ehraudit/error.hpp"
#include "ehraudit/model.hpp"
#include "ehraudit/run.hpp"
#include "ehraudit/transport.hpp"
#include "ehraudit/util.hpp"

using nlohmann::json;

struct ehra_model {
  ehraudit::ModelHandle model;
};

struct ehra_result {
  int exit_code = 0;
  std::string report;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> files;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
ehra_status Guard(F&& body) {
  try {
    body();
    g_last_error.clear();
    return EHRA_OK;
  } catch (const ehraudit::Error& e) {
    g_last_error = e.what();
    return static_cast<ehra_status>(static_cast<int>(e.code()));
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return EHRA_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return EHRA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EHRA_ERR_INTERNAL;
  }
}

void RequireArg(const void* p, const char* name) {
  if (p == nullptr) {
    ehraudit::Fail(ehraudit::ErrorCode::kInvalidArgument, std::string(name) + " is NULL");
  }
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ehraudit::TokenSeq ParseTokens(const char* text) {
  RequireArg(text, "tokens");
  const json j = json::parse(text);
  return ehraudit::FromWire(j.get<std::vector<std::string>>());
}

json SequencesToJson(const std::vector<ehraudit::TokenSeq>& seqs) {
  json out = json::array();
  for (const auto& s : seqs) out.push_back(ehraudit::ToWire(s));
  return out;
}

ehra_result* Wrap(ehraudit::RunOutcome&& o) {
  auto* r = new ehra_result;
  r->exit_code = o.exit_code;
  r->report = ehraudit::DumpJson(o.report);
  r->warnings = std::move(o.warnings);
  for (const auto& [name, content] : o.bundle.files()) r->files.emplace_back(name, content);
  return r;
}

}  // namespace

extern "C" {

const char* ehra_version(void) { return "1.0.0"; }

const char* ehra_status_name(ehra_status status) {
  if (status == EHRA_OK) return "ok";
  return ehraudit::ErrorCodeName(static_cast<ehraudit::ErrorCode>(status));
}

const char* ehra_last_error(void) { return g_last_error.c_str(); }

void ehra_string_free(char* s) { std::free(s); }

int ehra_workers_from_env(void) {
  try {
    return ehraudit::WorkersFromEnv();
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return -1;
  }
}

ehra_status ehra_model_open(const char* uri, const char* base_dir, ehra_model** out) {
  return Guard([&] {
    RequireArg(uri, "uri");
    RequireArg(out, "out");
    *out = nullptr;
    auto m = ehraudit::OpenModel(uri, base_dir ? base_dir : ".");
    *out = new ehra_model{std::move(m)};
  });
}

void ehra_model_close(ehra_model* model) { delete model; }

ehra_status ehra_model_capabilities(ehra_model* model, char** json_out) {
  return Guard([&] {
    RequireArg(model, "model");
    RequireArg(json_out, "json_out");
    *json_out = Dup(model->model->capabilities().ToJson().dump());
  });
}

ehra_status ehra_model_generate(ehra_model* model, const char* request_json,
                                char** response_json) {
  return Guard([&] {
    RequireArg(model, "model");
    RequireArg(request_json, "request_json");
    RequireArg(response_json, "response_json");
    const json j = json::parse(request_json);
    ehraudit::GenRequest req;
    req.prompt.tokens = ehraudit::FromWire(j.value("prompt", std::vector<std::string>{}));
    req.prompt.setup = ehraudit::PromptSetup::NCodes(static_cast<int>(req.prompt.tokens.size()));
    if (j.contains("statics")) {
      for (const auto& [k, v] : j["statics"].items()) {
        req.prompt.statics[k] = ehraudit::StaticValueFromJson(v);
      }
    }
    if (req.prompt.tokens.empty()) req.prompt.setup = ehraudit::PromptSetup::Static();
    req.n_samples = j.value("n", 1);
    req.max_new_tokens = j.value("max_new", 1);
    const std::string mode = j.value("mode", "sample");
    if (mode != "sample" && mode != "greedy") {
      ehraudit::Fail(ehraudit::ErrorCode::kInvalidArgument, "mode must be sample or greedy");
    }
    req.mode = mode == "greedy" ? ehraudit::DecodeMode::kGreedy : ehraudit::DecodeMode::kSample;
    req.seed = j.value("seed", std::uint64_t{0});
    const auto resp = model->model->Generate(req);
    *response_json = Dup(json{{"sequences", SequencesToJson(resp.sequences)}}.dump());
  });
}

ehra_status ehra_model_logprobs(ehra_model* model, const char* tokens_json,
                                char** logprobs_json) {
  return Guard([&] {
    RequireArg(model, "model");
    RequireArg(logprobs_json, "logprobs_json");
    const auto tokens = ParseTokens(tokens_json);
    *logprobs_json = Dup(json(model->model->Logprobs(tokens)).dump());
  });
}

ehra_status ehra_model_embed(ehra_model* model, const char* tokens_json, int prefix_len,
                             char** embedding_json) {
  return Guard([&] {
    RequireArg(model, "model");
    RequireArg(embedding_json, "embedding_json");
    ehraudit::EmbedRequest req{ParseTokens(tokens_json), prefix_len};
    *embedding_json = Dup(json(model->model->Embed(req)).dump());
  });
}

ehra_status ehra_run(const char* manifest_json, const char* base_dir, int workers,
                     ehra_result** out) {
  return Guard([&] {
    RequireArg(manifest_json, "manifest_json");
    RequireArg(out, "out");
    *out = nullptr;
    json j;
    try {
      j = json::parse(manifest_json);
    } catch (const json::exception& e) {
      ehraudit::Fail(ehraudit::ErrorCode::kParse, std::string("manifest: ") + e.what());
    }
    const auto m = ehraudit::RunManifest::FromJson(j, base_dir ? base_dir : ".");
    *out = Wrap(ehraudit::Run(m, workers));
  });
}

ehra_status ehra_run_file(const char* manifest_path, int workers, ehra_result** out) {
  return Guard([&] {
    RequireArg(manifest_path, "manifest_path");
    RequireArg(out, "out");
    *out = nullptr;
    *out = Wrap(ehraudit::Run(ehraudit::RunManifest::Load(manifest_path), workers));
  });
}

ehra_status ehra_toy_demo(const char* options_json, int workers, ehra_result** out) {
  return Guard([&] {
    RequireArg(out, "out");
    *out = nullptr;
    const json j = options_json ? json::parse(options_json) : json::object();
    *out = Wrap(ehraudit::ToyDemo(ehraudit::ToyDemoOptions::FromJson(j), workers));
  });
}

int ehra_result_exit_code(const ehra_result* result) {
  return result ? result->exit_code : ehraudit::kExitError;
}

const char* ehra_result_report(const ehra_result* result) {
  return result ? result->report.c_str() : "";
}

size_t ehra_result_warning_count(const ehra_result* result) {
  return result ? result->warnings.size() : 0;
}

const char* ehra_result_warning(const ehra_result* result, size_t index) {
  if (!result || index >= result->warnings.size()) return nullptr;
  return result->warnings[index].c_str();
}

size_t ehra_result_file_count(const ehra_result* result) {
  return result ? result->files.size() : 0;
}

const char* ehra_result_file_name(const ehra_result* result, size_t index) {
  if (!result || index >= result->files.size()) return nullptr;
  return result->files[index].first.c_str();
}

const char* ehra_result_file_content(const ehra_result* result, size_t index) {
  if (!result || index >= result->files.size()) return nullptr;
  return result->files[index].second.c_str();
}

ehra_status ehra_result_write(const ehra_result* result, const char* dir) {
  return Guard([&] {
    RequireArg(result, "result");
    RequireArg(dir, "dir");
    ehraudit::OutputBundle b;
    for (const auto& [name, content] : result->files) b.Add(name, content);
    b.WriteTo(dir);
  });
}

void ehra_result_free(ehra_result* result) { delete result; }

ehra_status ehra_validate_cohort(const char* path, char** report_json, int* ok) {
  return Guard([&] {
    RequireArg(path, "path");
    RequireArg(report_json, "report_json");
    std::ifstream in(path, std::ios::binary);
    if (!in) ehraudit::Fail(ehraudit::ErrorCode::kIo, std::string("cannot open '") + path + "'");
    const auto v = ehraudit::ValidateCohort(in);
    json issues = json::array();
    for (const auto& i : v.issues) {
      issues.push_back({{"line", i.line},
                        {"message", i.message},
                        {"severity", i.warning ? "warning" : "error"}});
    }
    const json r{{"ok", v.ok()},
                 {"records", v.records},
                 {"train", v.train},
                 {"test", v.test},
                 {"issues", issues}};
    *report_json = Dup(r.dump(2));
    if (ok) *ok = v.ok() ? 1 : 0;
  });
}

ehra_status ehra_d_emd(const char* s1_json, const char* s2_json, const char* embeddings_path,
                       double lambda_per_hour, ehra_solver solver, double* out) {
  return Guard([&] {
    RequireArg(embeddings_path, "embeddings_path");
    RequireArg(out, "out");
    const auto s1 = ParseTokens(s1_json);
    const auto s2 = ParseTokens(s2_json);
    const auto table = ehraudit::LoadEmbeddingFile(embeddings_path);
    const ehraudit::TimeWeightConfig w{lambda_per_hour};
    *out = ehraudit::DEmd(s1, s2, table, w,
                          solver == EHRA_SOLVER_SINKHORN ? ehraudit::Solver::kSinkhorn
                                                         : ehraudit::Solver::kExact);
  });
}

}  // extern "C"
