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

// Replay adapter for precomputed model outputs, and a recorder that
// produces replay fixtures from any live model.
//
// Fixture file: JSONL, one record per line, each one of
//   {"key": <hex>, "sequences": [[token, ...], ...]}
//   {"key": <hex>, "logprobs": [real, ...]}
//   {"key": <hex>, "embedding": [real, ...]}
// plus an optional {"capabilities": {...}} line. Keys come from
// GenerateKey / LogprobsKey / EmbedKey.

#ifndef EHRAUDIT_REPLAY_HPP_
#define EHRAUDIT_REPLAY_HPP_

#include <iosfwd>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "ehraudit/model.hpp"

namespace ehraudit {

class ReplayModel : public Model {
 public:
  // Throws kParse on malformed records or duplicate keys.
  static std::shared_ptr<ReplayModel> Load(std::istream& in);
  static std::shared_ptr<ReplayModel> LoadFile(const std::string& path);

  Capabilities capabilities() const override { return caps_; }

  std::size_t record_count() const;

 protected:
  GenResponse DoGenerate(const GenRequest& request) override;
  std::vector<double> DoLogprobs(std::span<const CodeToken> tokens) override;
  std::vector<double> DoEmbed(const EmbedRequest& request) override;

 private:
  Capabilities caps_;
  std::map<std::string, std::vector<TokenSeq>> sequences_;
  std::map<std::string, std::vector<double>> logprobs_;
  std::map<std::string, std::vector<double>> embeddings_;
};

// Forwards every call to `inner` and keeps the responses so they can be
// written out as a replay fixture. Output is sorted by key.
class RecordingModel : public Model {
 public:
  explicit RecordingModel(ModelHandle inner) : inner_(std::move(inner)) {}

  Capabilities capabilities() const override;

  void Write(std::ostream& out) const;
  void WriteFile(const std::string& path) const;

 protected:
  GenResponse DoGenerate(const GenRequest& request) override;
  std::vector<double> DoLogprobs(std::span<const CodeToken> tokens) override;
  std::vector<double> DoEmbed(const EmbedRequest& request) override;

 private:
  ModelHandle inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<TokenSeq>> sequences_;
  std::map<std::string, std::vector<double>> logprobs_;
  std::map<std::string, std::vector<double>> embeddings_;
};

}  // namespace ehraudit

#endif  // EHRAUDIT_REPLAY_HPP_
