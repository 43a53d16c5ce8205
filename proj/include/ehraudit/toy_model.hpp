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

// Synthetic memorizing model used as the positive control.
//
// Digits 0..V-1 follow p[d] = (1/(d+1)^2)/Z. A record is
//   trigger-length prefix (iid p) | gen_len generated block | history (iid p)
// and whenever the prefix equals the trigger, one slot of the generated
// block, chosen uniformly, is overwritten with the forced token. The
// embedding exposes the trigger as a single binary coordinate.

#ifndef EHRAUDIT_TOY_MODEL_HPP_
#define EHRAUDIT_TOY_MODEL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehraudit/corpus.hpp"
#include "ehraudit/model.hpp"

namespace ehraudit {

struct ToyConfig {
  int vocab_size = 10;
  int embed_dim = 8;
  int flag_dim_index = 7;
  std::vector<int> trigger_prefix = {0, 1};
  int forced_token = 9;
  int gen_len = 4;
  double noise_sigma = 0.1;
  // Keys the frozen hash features and the embedding noise.
  std::uint64_t embed_seed = 0x5eed;

  // Throws kInvalidArgument when an invariant does not hold.
  void Validate() const;
  nlohmann::json ToJson() const;
  // Missing fields keep their defaults; unknown fields are rejected.
  static ToyConfig FromJson(const nlohmann::json& j);
};

std::vector<double> DigitProbs(const ToyConfig& cfg);

// Digit of an event token; throws kUnknownCode for anything else.
int TokenDigit(const CodeToken& token, const ToyConfig& cfg);
TokenSeq DigitsToTokens(std::span<const int> digits);

bool StartsWithTrigger(std::span<const int> digits, const ToyConfig& cfg);

// Next-digit distribution of the record process given all earlier digits.
// Inside the generated block the forced slot is marginalized under its
// posterior given the block digits seen so far.
std::vector<double> ToyNextProbs(const ToyConfig& cfg,
                                 std::span<const int> history);

// `n` continuations of `len` digits drawn step by step from ToyNextProbs, so
// a prompt equal to the trigger gets the forced token at a uniformly chosen
// block slot. Greedy decoding takes the per-step argmax.
std::vector<std::vector<int>> ToyGenerate(const ToyConfig& cfg,
                                          std::span<const int> prompt, int n,
                                          int len, DecodeMode mode,
                                          std::uint64_t seed);

std::vector<double> ToyEmbed(const ToyConfig& cfg, std::span<const int> digits,
                             int prefix_len);

// Element i is log ToyNextProbs(digits[0..i])[digits[i+1]], floored at
// kToyLogFloor for impossible continuations.
std::vector<double> ToyLogprobs(const ToyConfig& cfg,
                                std::span<const int> digits);

inline constexpr double kToyLogFloor = -700.0;

class ToyModel : public Model {
 public:
  explicit ToyModel(ToyConfig cfg = {});

  const ToyConfig& config() const { return cfg_; }
  Capabilities capabilities() const override;

 protected:
  GenResponse DoGenerate(const GenRequest& request) override;
  std::vector<double> DoLogprobs(std::span<const CodeToken> tokens) override;
  std::vector<double> DoEmbed(const EmbedRequest& request) override;

 private:
  std::vector<int> Digits(std::span<const CodeToken> tokens) const;

  ToyConfig cfg_;
};

struct ToyCohortConfig {
  int n_train = 10000;
  int n_test = 2000;
  int history_len = 6;
  std::uint64_t seed = 1;
};

// Toy records as trajectories ("toy-<index>"), with a uniform age in
// [18, 95] as the only static attribute.
std::vector<Trajectory> MakeToyCohort(const ToyConfig& cfg,
                                      const ToyCohortConfig& cohort);

}  // namespace ehraudit

#endif  // EHRAUDIT_TOY_MODEL_HPP_
