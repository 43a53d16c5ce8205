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

#include "ehraudit/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ehraudit/error.hpp"

namespace ehraudit {

using nlohmann::json;

json Capabilities::ToJson() const {
  json j{{"can_generate", can_generate},
         {"can_logprobs", can_logprobs},
         {"can_embed", can_embed},
         {"concurrent_safe", concurrent_safe}};
  if (vocabulary) j["vocabulary"] = *vocabulary;
  return j;
}

Capabilities Capabilities::FromJson(const json& j) {
  if (!j.is_object()) Fail(ErrorCode::kProtocol, "capabilities must be an object");
  Capabilities c;
  c.can_generate = j.value("can_generate", false);
  c.can_logprobs = j.value("can_logprobs", false);
  c.can_embed = j.value("can_embed", false);
  c.concurrent_safe = j.value("concurrent_safe", false);
  if (j.contains("vocabulary") && !j["vocabulary"].is_null()) {
    c.vocabulary = j["vocabulary"].get<std::vector<std::string>>();
  }
  return c;
}

const char* DecodeModeName(DecodeMode mode) {
  return mode == DecodeMode::kGreedy ? "greedy" : "sample";
}

namespace {

class MaybeLock {
 public:
  MaybeLock(std::mutex& mu, bool lock) : mu_(lock ? &mu : nullptr) {
    if (mu_) mu_->lock();
  }
  ~MaybeLock() {
    if (mu_) mu_->unlock();
  }
  MaybeLock(const MaybeLock&) = delete;
  MaybeLock& operator=(const MaybeLock&) = delete;

 private:
  std::mutex* mu_;
};

}  // namespace

void RequireCapabilities(const Model& model, const std::string& test,
                         bool generate, bool logprobs, bool embed) {
  const Capabilities caps = model.capabilities();
  std::vector<std::string> missing;
  if (generate && !caps.can_generate) missing.push_back("generate");
  if (logprobs && !caps.can_logprobs) missing.push_back("logprobs");
  if (embed && !caps.can_embed) missing.push_back("embed");
  if (missing.empty()) return;
  std::string list;
  for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
  Fail(ErrorCode::kCapabilityMissing,
       test + " requires model capability: " + list);
}

GenResponse Model::Generate(const GenRequest& request) {
  const Capabilities caps = capabilities();
  if (!caps.can_generate) {
    Fail(ErrorCode::kCapabilityMissing, "model cannot generate");
  }
  if (request.n_samples < 1) {
    Fail(ErrorCode::kInvalidArgument, "n_samples must be positive");
  }
  if (request.max_new_tokens < 1) {
    Fail(ErrorCode::kInvalidArgument, "max_new_tokens must be positive");
  }
  if (request.mode == DecodeMode::kGreedy && request.n_samples > 1) {
    Fail(ErrorCode::kInvalidArgument,
         "greedy decoding with n_samples > 1 yields identical samples");
  }
  if (caps.vocabulary) {
    const std::set<std::string> vocab(caps.vocabulary->begin(),
                                      caps.vocabulary->end());
    // Time gaps are structural and never part of a code vocabulary.
    for (const auto& t : request.prompt.tokens) {
      if (t.is_event() && !vocab.count(t.ToWire())) {
        Fail(ErrorCode::kUnknownCode,
             "prompt token '" + t.ToWire() + "' is not in the model vocabulary");
      }
    }
  }
  GenResponse response;
  {
    MaybeLock lock(mu_, !caps.concurrent_safe);
    response = DoGenerate(request);
  }
  if (response.sequences.size() != static_cast<std::size_t>(request.n_samples)) {
    Fail(ErrorCode::kProtocol,
         "model returned " + std::to_string(response.sequences.size()) +
             " sequences, expected " + std::to_string(request.n_samples));
  }
  for (const auto& seq : response.sequences) {
    if (seq.size() > static_cast<std::size_t>(request.max_new_tokens)) {
      Fail(ErrorCode::kProtocol, "model returned more than max_new_tokens");
    }
  }
  return response;
}

std::vector<double> Model::Logprobs(std::span<const CodeToken> tokens) {
  const Capabilities caps = capabilities();
  if (!caps.can_logprobs) {
    Fail(ErrorCode::kCapabilityMissing, "model cannot score logprobs");
  }
  if (tokens.size() < 2) {
    Fail(ErrorCode::kInvalidArgument,
         "logprobs needs at least 2 tokens, got " +
             std::to_string(tokens.size()));
  }
  std::vector<double> lp;
  {
    MaybeLock lock(mu_, !caps.concurrent_safe);
    lp = DoLogprobs(tokens);
  }
  if (lp.size() != tokens.size() - 1) {
    Fail(ErrorCode::kProtocol, "logprobs length " + std::to_string(lp.size()) +
                                   " != " + std::to_string(tokens.size() - 1));
  }
  for (double v : lp) {
    if (!std::isfinite(v) || v > 1e-12) {
      Fail(ErrorCode::kProtocol, "logprobs must be finite and <= 0");
    }
  }
  for (double& v : lp) v = std::min(v, 0.0);
  return lp;
}

std::vector<double> Model::Embed(const EmbedRequest& request) {
  const Capabilities caps = capabilities();
  if (!caps.can_embed) {
    Fail(ErrorCode::kCapabilityMissing, "model cannot embed");
  }
  if (request.prefix_len < 1 ||
      static_cast<std::size_t>(request.prefix_len) > request.tokens.size()) {
    Fail(ErrorCode::kInvalidArgument,
         "prefix_len must be in [1, " + std::to_string(request.tokens.size()) +
             "], got " + std::to_string(request.prefix_len));
  }
  std::vector<double> z;
  {
    MaybeLock lock(mu_, !caps.concurrent_safe);
    z = DoEmbed(request);
  }
  if (z.empty()) Fail(ErrorCode::kProtocol, "model returned an empty embedding");
  for (double v : z) {
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kProtocol, "embedding has a non-finite component");
    }
  }
  return z;
}

GenResponse Model::DoGenerate(const GenRequest&) {
  Fail(ErrorCode::kCapabilityMissing, "generate not implemented");
}

std::vector<double> Model::DoLogprobs(std::span<const CodeToken>) {
  Fail(ErrorCode::kCapabilityMissing, "logprobs not implemented");
}

std::vector<double> Model::DoEmbed(const EmbedRequest&) {
  Fail(ErrorCode::kCapabilityMissing, "embed not implemented");
}

EchoModel::EchoModel(std::vector<std::string> vocabulary)
    : vocabulary_(std::move(vocabulary)) {
  if (vocabulary_.empty()) {
    Fail(ErrorCode::kInvalidArgument, "echo model needs a vocabulary");
  }
}

std::vector<std::string> EchoModel::DefaultVocabulary() {
  return {"A", "B", "C", "D", "E", "F", "G", "H", "I", "J"};
}

Capabilities EchoModel::capabilities() const {
  Capabilities c;
  c.can_generate = c.can_logprobs = c.can_embed = true;
  c.concurrent_safe = false;
  c.vocabulary = vocabulary_;
  return c;
}

GenResponse EchoModel::DoGenerate(const GenRequest& request) {
  GenResponse r;
  TokenSeq seq;
  if (!request.prompt.tokens.empty()) {
    seq.assign(static_cast<std::size_t>(request.max_new_tokens),
               request.prompt.tokens.back());
  }
  r.sequences.assign(static_cast<std::size_t>(request.n_samples), seq);
  return r;
}

std::vector<double> EchoModel::DoLogprobs(std::span<const CodeToken> tokens) {
  return std::vector<double>(tokens.size() - 1,
                             -std::log(static_cast<double>(vocabulary_.size())));
}

std::vector<double> EchoModel::DoEmbed(const EmbedRequest& request) {
  std::vector<double> z(vocabulary_.size(), 0.0);
  for (int i = 0; i < request.prefix_len; ++i) {
    const std::string w = request.tokens[static_cast<std::size_t>(i)].ToWire();
    const auto it = std::find(vocabulary_.begin(), vocabulary_.end(), w);
    if (it != vocabulary_.end()) {
      z[static_cast<std::size_t>(it - vocabulary_.begin())] += 1.0;
    }
  }
  for (double& v : z) v /= static_cast<double>(request.prefix_len);
  return z;
}

Capabilities FixedOutputModel::capabilities() const {
  Capabilities c;
  c.can_generate = true;
  c.concurrent_safe = true;
  return c;
}

GenResponse FixedOutputModel::DoGenerate(const GenRequest& request) {
  TokenSeq seq(output_.begin(),
               output_.begin() + static_cast<std::ptrdiff_t>(std::min(
                                     output_.size(),
                                     static_cast<std::size_t>(
                                         request.max_new_tokens))));
  GenResponse r;
  r.sequences.assign(static_cast<std::size_t>(request.n_samples), seq);
  return r;
}

Capabilities NoiseEmbeddingModel::capabilities() const {
  Capabilities c;
  c.can_embed = true;
  c.concurrent_safe = true;
  return c;
}

std::vector<double> NoiseEmbeddingModel::DoEmbed(const EmbedRequest& request) {
  Rng rng(DeriveSeed(seed_, EmbedKey(request)));
  std::vector<double> z(static_cast<std::size_t>(dim_));
  for (double& v : z) v = rng.Gaussian();
  return z;
}

std::string GenerateKey(const GenRequest& request) {
  const json key{{"op", "generate"},
                 {"tokens", ToWire(request.prompt.tokens)},
                 {"statics", StaticsToJson(request.prompt.ModelStatics())},
                 {"mode", DecodeModeName(request.mode)},
                 {"max_new", request.max_new_tokens},
                 {"seed", request.seed}};
  return Sha256Hex(key.dump());
}

std::string LogprobsKey(std::span<const CodeToken> tokens) {
  const json key{{"op", "logprobs"}, {"tokens", ToWire(tokens)}};
  return Sha256Hex(key.dump());
}

std::string EmbedKey(const EmbedRequest& request) {
  const auto n = static_cast<std::size_t>(
      std::clamp<int>(request.prefix_len, 0,
                      static_cast<int>(request.tokens.size())));
  const json key{
      {"op", "embed"},
      {"tokens", ToWire(std::span<const CodeToken>(request.tokens.data(), n))},
      {"prefix_len", request.prefix_len}};
  return Sha256Hex(key.dump());
}

}  // namespace ehraudit
