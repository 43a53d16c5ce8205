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

#include "ehraudit/replay.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "ehraudit/error.hpp"

namespace ehraudit {

using nlohmann::json;

namespace {

template <typename Map, typename Value>
void InsertUnique(Map& map, const std::string& key, Value value) {
  if (!map.emplace(key, std::move(value)).second) {
    Fail(ErrorCode::kParse, "duplicate replay key " + key);
  }
}

json SequencesToJson(const std::vector<TokenSeq>& seqs) {
  json out = json::array();
  for (const auto& s : seqs) out.push_back(ToWire(s));
  return out;
}

}  // namespace

std::shared_ptr<ReplayModel> ReplayModel::Load(std::istream& in) {
  auto model = std::shared_ptr<ReplayModel>(new ReplayModel());
  bool explicit_caps = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (j.contains("capabilities")) {
        model->caps_ = Capabilities::FromJson(j["capabilities"]);
        explicit_caps = true;
        continue;
      }
      if (!j.contains("key") || !j["key"].is_string()) {
        Fail(ErrorCode::kParse, "record lacks string 'key'");
      }
      const std::string key = j["key"].get<std::string>();
      if (j.contains("sequences")) {
        std::vector<TokenSeq> seqs;
        for (const auto& s : j["sequences"]) {
          seqs.push_back(FromWire(s.get<std::vector<std::string>>()));
        }
        InsertUnique(model->sequences_, key, std::move(seqs));
      } else if (j.contains("logprobs")) {
        InsertUnique(model->logprobs_, key,
                     j["logprobs"].get<std::vector<double>>());
      } else if (j.contains("embedding")) {
        InsertUnique(model->embeddings_, key,
                     j["embedding"].get<std::vector<double>>());
      } else {
        Fail(ErrorCode::kParse,
             "record needs one of sequences, logprobs, embedding");
      }
    } catch (const json::exception& e) {
      Fail(ErrorCode::kParse,
           "replay line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      Fail(e.code(), "replay line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!explicit_caps) {
    model->caps_.can_generate = !model->sequences_.empty();
    model->caps_.can_logprobs = !model->logprobs_.empty();
    model->caps_.can_embed = !model->embeddings_.empty();
  }
  model->caps_.concurrent_safe = true;
  return model;
}

std::shared_ptr<ReplayModel> ReplayModel::LoadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open replay file: " + path);
  try {
    return Load(in);
  } catch (const Error& e) {
    Fail(e.code(), path + ": " + e.what());
  }
}

std::size_t ReplayModel::record_count() const {
  return sequences_.size() + logprobs_.size() + embeddings_.size();
}

GenResponse ReplayModel::DoGenerate(const GenRequest& request) {
  const std::string key = GenerateKey(request);
  const auto it = sequences_.find(key);
  if (it == sequences_.end()) {
    Fail(ErrorCode::kNotFound, "no replay sequences for key " + key +
                                   " (patient " +
                                   request.prompt.source_patient + ")");
  }
  if (it->second.size() < static_cast<std::size_t>(request.n_samples)) {
    Fail(ErrorCode::kNotFound, "replay key " + key + " stores " +
                                   std::to_string(it->second.size()) +
                                   " sequences, " +
                                   std::to_string(request.n_samples) +
                                   " requested");
  }
  GenResponse r;
  r.sequences.assign(it->second.begin(),
                     it->second.begin() + request.n_samples);
  return r;
}

std::vector<double> ReplayModel::DoLogprobs(std::span<const CodeToken> tokens) {
  const std::string key = LogprobsKey(tokens);
  const auto it = logprobs_.find(key);
  if (it == logprobs_.end()) {
    Fail(ErrorCode::kNotFound, "no replay logprobs for key " + key);
  }
  if (it->second.size() != tokens.size() - 1) {
    Fail(ErrorCode::kProtocol, "replay logprobs for key " + key + " have " +
                                   std::to_string(it->second.size()) +
                                   " entries, expected " +
                                   std::to_string(tokens.size() - 1));
  }
  return it->second;
}

std::vector<double> ReplayModel::DoEmbed(const EmbedRequest& request) {
  const std::string key = EmbedKey(request);
  const auto it = embeddings_.find(key);
  if (it == embeddings_.end()) {
    Fail(ErrorCode::kNotFound, "no replay embedding for key " + key);
  }
  return it->second;
}

Capabilities RecordingModel::capabilities() const {
  return inner_->capabilities();
}

GenResponse RecordingModel::DoGenerate(const GenRequest& request) {
  GenResponse r = inner_->Generate(request);
  std::lock_guard<std::mutex> lock(mu_);
  auto& stored = sequences_[GenerateKey(request)];
  if (r.sequences.size() > stored.size()) stored = r.sequences;
  return r;
}

std::vector<double> RecordingModel::DoLogprobs(
    std::span<const CodeToken> tokens) {
  auto lp = inner_->Logprobs(tokens);
  std::lock_guard<std::mutex> lock(mu_);
  logprobs_[LogprobsKey(tokens)] = lp;
  return lp;
}

std::vector<double> RecordingModel::DoEmbed(const EmbedRequest& request) {
  auto z = inner_->Embed(request);
  std::lock_guard<std::mutex> lock(mu_);
  embeddings_[EmbedKey(request)] = z;
  return z;
}

void RecordingModel::Write(std::ostream& out) const {
  std::lock_guard<std::mutex> lock(mu_);
  Capabilities caps = inner_->capabilities();
  caps.concurrent_safe = true;
  out << json{{"capabilities", caps.ToJson()}}.dump() << '\n';
  for (const auto& [key, seqs] : sequences_) {
    out << json{{"key", key}, {"sequences", SequencesToJson(seqs)}}.dump()
        << '\n';
  }
  for (const auto& [key, lp] : logprobs_) {
    out << json{{"key", key}, {"logprobs", lp}}.dump() << '\n';
  }
  for (const auto& [key, z] : embeddings_) {
    out << json{{"key", key}, {"embedding", z}}.dump() << '\n';
  }
}

void RecordingModel::WriteFile(const std::string& path) const {
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write replay file: " + path);
  Write(out);
  if (!out) Fail(ErrorCode::kIo, "failed writing replay file: " + path);
}

}  // namespace ehraudit
