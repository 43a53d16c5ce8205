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

#include "ehraudit/toy_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "ehraudit/error.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {

using nlohmann::json;

void ToyConfig::Validate() const {
  auto bad = [](const std::string& m) { Fail(ErrorCode::kInvalidArgument, "toy config: " + m); };
  if (vocab_size < 2) bad("vocab_size must be >= 2");
  if (embed_dim < 1) bad("embed_dim must be >= 1");
  if (flag_dim_index < 0 || flag_dim_index >= embed_dim) {
    bad("flag_dim_index must be in [0, embed_dim)");
  }
  if (trigger_prefix.empty()) bad("trigger_prefix must be nonempty");
  for (int t : trigger_prefix) {
    if (t < 0 || t >= vocab_size) bad("trigger_prefix token out of range");
  }
  if (forced_token < 0 || forced_token >= vocab_size) {
    bad("forced_token must be < vocab_size");
  }
  if (gen_len < 1) bad("gen_len must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    bad("noise_sigma must be finite and nonnegative");
  }
}

json ToyConfig::ToJson() const {
  return json{{"vocab_size", vocab_size},         {"embed_dim", embed_dim},
              {"flag_dim_index", flag_dim_index}, {"trigger_prefix", trigger_prefix},
              {"forced_token", forced_token},     {"gen_len", gen_len},
              {"noise_sigma", noise_sigma},       {"embed_seed", embed_seed}};
}

ToyConfig ToyConfig::FromJson(const json& j) {
  ToyConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) Fail(ErrorCode::kInvalidArgument, "toy config must be an object");
  static const std::set<std::string> kKnown = {
      "vocab_size", "embed_dim", "flag_dim_index", "trigger_prefix",
      "forced_token", "gen_len", "noise_sigma", "embed_seed"};
  for (const auto& [k, v] : j.items()) {
    if (!kKnown.count(k)) Fail(ErrorCode::kInvalidArgument, "toy config: unknown field '" + k + "'");
  }
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.flag_dim_index = j.value("flag_dim_index", c.flag_dim_index);
    c.trigger_prefix = j.value("trigger_prefix", c.trigger_prefix);
    c.forced_token = j.value("forced_token", c.forced_token);
    c.gen_len = j.value("gen_len", c.gen_len);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.embed_seed = j.value("embed_seed", c.embed_seed);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, std::string("toy config: ") + e.what());
  }
  c.Validate();
  return c;
}

std::vector<double> DigitProbs(const ToyConfig& cfg) {
  std::vector<double> p(static_cast<std::size_t>(cfg.vocab_size));
  double z = 0.0;
  for (int d = 0; d < cfg.vocab_size; ++d) {
    p[d] = 1.0 / ((d + 1.0) * (d + 1.0));
    z += p[d];
  }
  for (double& v : p) v /= z;
  return p;
}

int TokenDigit(const CodeToken& token, const ToyConfig& cfg) {
  int d = -1;
  if (token.is_event() && !token.code.empty()) {
    const char* b = token.code.data();
    const char* e = b + token.code.size();
    auto [ptr, ec] = std::from_chars(b, e, d);
    if (ec != std::errc() || ptr != e) d = -1;
  }
  if (d < 0 || d >= cfg.vocab_size || std::to_string(d) != token.code) {
    Fail(ErrorCode::kUnknownCode,
         "token '" + token.ToWire() + "' is not a toy digit");
  }
  return d;
}

TokenSeq DigitsToTokens(std::span<const int> digits) {
  TokenSeq out;
  out.reserve(digits.size());
  for (int d : digits) out.push_back(CodeToken::Event(std::to_string(d)));
  return out;
}

bool StartsWithTrigger(std::span<const int> digits, const ToyConfig& cfg) {
  const auto& t = cfg.trigger_prefix;
  return digits.size() >= t.size() && std::equal(t.begin(), t.end(), digits.begin());
}

std::vector<double> ToyNextProbs(const ToyConfig& cfg,
                                 std::span<const int> history) {
  std::vector<double> p = DigitProbs(cfg);
  const std::size_t lt = cfg.trigger_prefix.size();
  const std::size_t pos = history.size();
  const std::size_t gen = static_cast<std::size_t>(cfg.gen_len);
  if (pos < lt || pos >= lt + gen || !StartsWithTrigger(history, cfg)) return p;
  // Posterior over the forced slot f: a seen slot must hold the forced
  // token and is weighted by 1/p of that token; unseen slots weigh 1.
  const std::size_t j = pos - lt;
  double total = static_cast<double>(gen - j);
  for (std::size_t f = 0; f < j; ++f) {
    const int h = history[lt + f];
    if (h == cfg.forced_token) total += 1.0 / p[static_cast<std::size_t>(h)];
  }
  const double wj = 1.0 / total;
  for (double& v : p) v *= (1.0 - wj);
  p[static_cast<std::size_t>(cfg.forced_token)] += wj;
  return p;
}

std::vector<std::vector<int>> ToyGenerate(const ToyConfig& cfg,
                                          std::span<const int> prompt, int n,
                                          int len, DecodeMode mode,
                                          std::uint64_t seed) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(SampleSeed(seed, static_cast<std::size_t>(i)));
    std::vector<int> record(prompt.begin(), prompt.end());
    std::vector<double> cdf(static_cast<std::size_t>(cfg.vocab_size));
    for (int s = 0; s < len; ++s) {
      const std::vector<double> p = ToyNextProbs(cfg, record);
      int next;
      if (mode == DecodeMode::kGreedy) {
        next = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      } else {
        double acc = 0.0;
        for (std::size_t d = 0; d < p.size(); ++d) cdf[d] = (acc += p[d]);
        next = static_cast<int>(rng.Categorical(cdf));
      }
      record.push_back(next);
    }
    out[static_cast<std::size_t>(i)].assign(record.begin() + static_cast<std::ptrdiff_t>(prompt.size()),
                                            record.end());
  }
  return out;
}

std::vector<double> ToyEmbed(const ToyConfig& cfg, std::span<const int> digits,
                             int prefix_len) {
  const std::size_t n =
      std::min(digits.size(), static_cast<std::size_t>(std::max(prefix_len, 0)));
  const auto prefix = digits.first(n);
  std::vector<double> z(static_cast<std::size_t>(cfg.embed_dim), 0.0);
  std::string prefix_text;
  for (int d : prefix) prefix_text += std::to_string(d) + ",";
  Rng noise(DeriveSeed(DeriveSeed(cfg.embed_seed, "noise"), prefix_text));
  const std::uint64_t phi_seed = DeriveSeed(cfg.embed_seed, "phi");
  for (int k = 0; k < cfg.embed_dim; ++k) {
    if (k == cfg.flag_dim_index) {
      z[k] = StartsWithTrigger(prefix, cfg) ? 1.0 : 0.0;
      continue;
    }
    double acc = 0.0;
    for (int d : prefix) {
      Rng phi(DeriveSeed(phi_seed, static_cast<std::uint64_t>(k) *
                                       static_cast<std::uint64_t>(cfg.vocab_size) +
                                       static_cast<std::uint64_t>(d)));
      acc += 2.0 * phi.Uniform() - 1.0;
    }
    if (!prefix.empty()) acc /= static_cast<double>(prefix.size());
    z[k] = acc + cfg.noise_sigma * noise.Gaussian();
  }
  return z;
}

std::vector<double> ToyLogprobs(const ToyConfig& cfg,
                                std::span<const int> digits) {
  std::vector<double> out;
  if (digits.size() < 2) return out;
  out.reserve(digits.size() - 1);
  for (std::size_t i = 1; i < digits.size(); ++i) {
    const std::vector<double> p = ToyNextProbs(cfg, digits.first(i));
    const double q = p[static_cast<std::size_t>(digits[i])];
    out.push_back(q > 0.0 ? std::max(std::log(q), kToyLogFloor) : kToyLogFloor);
  }
  return out;
}

ToyModel::ToyModel(ToyConfig cfg) : cfg_(std::move(cfg)) { cfg_.Validate(); }

Capabilities ToyModel::capabilities() const {
  Capabilities c;
  c.can_generate = c.can_logprobs = c.can_embed = true;
  c.concurrent_safe = true;
  std::vector<std::string> vocab;
  for (int d = 0; d < cfg_.vocab_size; ++d) vocab.push_back(std::to_string(d));
  c.vocabulary = std::move(vocab);
  return c;
}

std::vector<int> ToyModel::Digits(std::span<const CodeToken> tokens) const {
  std::vector<int> d;
  d.reserve(tokens.size());
  for (const auto& t : tokens) d.push_back(TokenDigit(t, cfg_));
  return d;
}

GenResponse ToyModel::DoGenerate(const GenRequest& request) {
  const std::vector<int> prompt = Digits(request.prompt.tokens);
  GenResponse r;
  for (const auto& s : ToyGenerate(cfg_, prompt, request.n_samples,
                                   request.max_new_tokens, request.mode,
                                   request.seed)) {
    r.sequences.push_back(DigitsToTokens(s));
  }
  return r;
}

std::vector<double> ToyModel::DoLogprobs(std::span<const CodeToken> tokens) {
  return ToyLogprobs(cfg_, Digits(tokens));
}

std::vector<double> ToyModel::DoEmbed(const EmbedRequest& request) {
  return ToyEmbed(cfg_, Digits(request.tokens), request.prefix_len);
}

std::vector<Trajectory> MakeToyCohort(const ToyConfig& cfg,
                                      const ToyCohortConfig& cohort) {
  cfg.Validate();
  const int total = cohort.n_train + cohort.n_test;
  const int len = static_cast<int>(cfg.trigger_prefix.size()) + cfg.gen_len +
                  cohort.history_len;
  std::vector<Trajectory> out(static_cast<std::size_t>(std::max(total, 0)));
  for (int i = 0; i < total; ++i) {
    const std::uint64_t s = DeriveSeed(cohort.seed, static_cast<std::uint64_t>(i));
    Trajectory& t = out[static_cast<std::size_t>(i)];
    char id[32];
    std::snprintf(id, sizeof(id), "toy-%06d", i);
    t.patient_id = id;
    t.cohort = i < cohort.n_train ? CohortTag::kTrain : CohortTag::kTest;
    Rng age(DeriveSeed(s, "age"));
    t.statics["age"] = static_cast<std::int64_t>(18 + age.Below(78));
    t.events = DigitsToTokens(
        ToyGenerate(cfg, {}, 1, len, DecodeMode::kSample, DeriveSeed(s, "record"))[0]);
  }
  return out;
}

}  // namespace ehraudit
