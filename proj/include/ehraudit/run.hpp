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

// Run orchestration: manifests, model URIs and the positive-control demo.
//
// Manifest (JSON; relative paths resolve against the manifest directory):
//   model             "toy:[<json>|<path>]", "replay:<path>", "bridge:<cmd>",
//                     "echo:[<tok>,<tok>...]"
//   cohort            trajectory JSONL
//   embeddings        embedding TSV (T1 and T6 core suites)
//   categories        path, inline object or array; built-in list if absent
//   tests             subset of ["t1".."t6"]
//   config            shared TestRunConfig fields
//   t1..t6            per-test sections; n_samples, horizon, max_patients and
//                     mode override the shared values
//   output_dir        where report.json, CSVs and SVGs go
//   record_replay     write every model response to this replay fixture
//   adjudications     JSONL of {"id","disposition","note"} applied to T2

#ifndef EHRAUDIT_RUN_HPP_
#define EHRAUDIT_RUN_HPP_

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehraudit/audit.hpp"
#include "ehraudit/model.hpp"
#include "ehraudit/report.hpp"

namespace ehraudit {

// Exit codes of a run.
inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFlagged = 2;

struct RunManifest {
  nlohmann::json raw = nlohmann::json::object();
  std::string base_dir = ".";

  // Parses and validates; throws kInvalidArgument on unknown tests, bad
  // types or unknown top-level fields.
  static RunManifest FromJson(const nlohmann::json& j, const std::string& base_dir = ".");
  static RunManifest Load(const std::string& path);

  std::string Resolve(const std::string& path) const;
  std::vector<std::string> tests() const;
  std::string output_dir() const;
};

// Throws kInvalidArgument naming an unknown scheme.
ModelHandle OpenModel(const std::string& uri, const std::string& base_dir = ".");

TestRunConfig ConfigFromJson(const nlohmann::json& config);

struct RunOutcome {
  int exit_code = kExitPass;
  nlohmann::json report;
  OutputBundle bundle;
  std::vector<std::string> warnings;
};

// Executes the selected tests. Writes the bundle plus a run_manifest.json
// sidecar (timestamp, worker count) when output_dir is set. Throws on
// execution errors.
RunOutcome Run(const RunManifest& manifest, int workers);

struct ToyDemoOptions {
  // Any of "t2", "t3", "t4", "t5", "fidelity"; all when empty.
  std::vector<std::string> sections;
  std::uint64_t seed = 1;
  int n_train = 10000;
  int n_test = 2000;
  std::string output_dir;

  static ToyDemoOptions FromJson(const nlohmann::json& j);
};

// The positive-control suite on the synthetic memorizing model. Exit code
// 0 iff every control reproduces its expected outcome.
RunOutcome ToyDemo(const ToyDemoOptions& options, int workers);

}  // namespace ehraudit

#endif  // EHRAUDIT_RUN_HPP_
