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

// Black-box model abstraction. Every audit test talks to models only
// through this interface: sampled continuations, per-token log-probabilities
// and prefix embeddings, each gated by declared capabilities.

#ifndef EHRAUDIT_MODEL_HPP_
#define EHRAUDIT_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehraudit/corpus.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {

struct Capabilities {
  bool can_generate = false;
  bool can_logprobs = false;
  bool can_embed = false;
  bool concurrent_safe = false;
  std::optional<std::vector<std::string>> vocabulary;

  nlohmann::json ToJson() const;
  static Capabilities FromJson(const nlohmann::json& j);
};

enum class DecodeMode { kGreedy, kSample };

const char* DecodeModeName(DecodeMode mode);

struct GenRequest {
  Prompt prompt;
  int n_samples = 1;
  int max_new_tokens = 1;
  DecodeMode mode = DecodeMode::kSample;
  std::uint64_t seed = 0;
  // Free-form decoding options forwarded untouched to external models.
  nlohmann::json options = nlohmann::json::object();
};

struct GenResponse {
  std::vector<TokenSeq> sequences;
};

struct EmbedRequest {
  TokenSeq tokens;
  int prefix_len = 1;
};

// Seed of sample `index` within a request; samples never share a stream.
inline std::uint64_t SampleSeed(std::uint64_t request_seed, std::size_t index) {
  return DeriveSeed(request_seed, static_cast<std::uint64_t>(index) + 1);
}

class Model {
 public:
  virtual ~Model() = default;

  virtual Capabilities capabilities() const = 0;

  // The public entry points validate requests, enforce capabilities before
  // any model work and serialize calls when the model is not
  // concurrent-safe.
  GenResponse Generate(const GenRequest& request);
  // Element i is log P(tokens[i+1] | tokens[0..i]).
  std::vector<double> Logprobs(std::span<const CodeToken> tokens);
  std::vector<double> Embed(const EmbedRequest& request);

 protected:
  virtual GenResponse DoGenerate(const GenRequest& request);
  virtual std::vector<double> DoLogprobs(std::span<const CodeToken> tokens);
  virtual std::vector<double> DoEmbed(const EmbedRequest& request);

 private:
  std::mutex mu_;
};

using ModelHandle = std::shared_ptr<Model>;

// Throws kCapabilityMissing naming the test and the missing capability.
void RequireCapabilities(const Model& model, const std::string& test,
                         bool generate, bool logprobs, bool embed);

// Repeats the last prompt token; log-probabilities are uniform over a fixed
// vocabulary; embeddings are vocabulary histograms of the prefix.
class EchoModel : public Model {
 public:
  explicit EchoModel(std::vector<std::string> vocabulary = DefaultVocabulary());

  static std::vector<std::string> DefaultVocabulary();

  Capabilities capabilities() const override;

 protected:
  GenResponse DoGenerate(const GenRequest& request) override;
  std::vector<double> DoLogprobs(std::span<const CodeToken> tokens) override;
  std::vector<double> DoEmbed(const EmbedRequest& request) override;

 private:
  std::vector<std::string> vocabulary_;
};

// Emits the same continuation (truncated to max_new_tokens) for every sample.
class FixedOutputModel : public Model {
 public:
  explicit FixedOutputModel(TokenSeq output) : output_(std::move(output)) {}

  Capabilities capabilities() const override;

 protected:
  GenResponse DoGenerate(const GenRequest& request) override;

 private:
  TokenSeq output_;
};

// Embeddings are seeded Gaussian noise keyed by the prefix; carries no
// label information by construction.
class NoiseEmbeddingModel : public Model {
 public:
  NoiseEmbeddingModel(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

  Capabilities capabilities() const override;

 protected:
  std::vector<double> DoEmbed(const EmbedRequest& request) override;

 private:
  int dim_;
  std::uint64_t seed_;
};

// Canonical replay keys: SHA-256 of the compact, key-sorted JSON of the
// request fields.
std::string GenerateKey(const GenRequest& request);
std::string LogprobsKey(std::span<const CodeToken> tokens);
std::string EmbedKey(const EmbedRequest& request);

}  // namespace ehraudit

#endif  // EHRAUDIT_MODEL_HPP_
