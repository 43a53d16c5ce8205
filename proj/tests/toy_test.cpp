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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "ehraudit/error.hpp"
#include "ehraudit/toy_model.hpp"
#include "ehraudit/util.hpp"
#include "support/oracles.hpp"

namespace ehraudit {
namespace {

double Z10() {
  double z = 0.0;
  for (int d = 0; d < 10; ++d) z += 1.0 / ((d + 1.0) * (d + 1.0));
  return z;
}

TEST(DigitProbs, Normalization) {
  const auto p = DigitProbs({});
  ASSERT_EQ(p.size(), 10u);
  EXPECT_NEAR(Z10(), 1.549768, 1e-6);
  EXPECT_NEAR(p[0], 0.645258, 1e-6);
  EXPECT_NEAR(p[9], 0.006453, 1e-6);
  ToyConfig two;
  two.vocab_size = 2;
  two.forced_token = 1;
  two.trigger_prefix = {0, 1};
  const auto q = DigitProbs(two);
  EXPECT_NEAR(q[0], 0.8, 1e-15);
  EXPECT_NEAR(q[1], 0.2, 1e-15);
}

TEST(ToyConfig, ValidatesFields) {
  ToyConfig c;
  c.forced_token = 10;
  EXPECT_THROW(c.Validate(), Error);
  c = {};
  c.flag_dim_index = 8;
  EXPECT_THROW(c.Validate(), Error);
  EXPECT_NO_THROW(ToyConfig::FromJson(ToyConfig{}.ToJson()).Validate());
}

double FractionWith9(const std::vector<std::vector<int>>& seqs) {
  std::size_t hits = 0;
  for (const auto& s : seqs) hits += std::count(s.begin(), s.end(), 9) > 0;
  return static_cast<double>(hits) / static_cast<double>(seqs.size());
}

TEST(ToyGenerate, TriggerAlwaysContainsForcedToken) {
  const auto seqs = ToyGenerate({}, std::vector<int>{0, 1}, 1000, 4, DecodeMode::kSample, 3);
  ASSERT_EQ(seqs.size(), 1000u);
  EXPECT_EQ(FractionWith9(seqs), 1.0);
}

TEST(ToyGenerate, NonTriggerMatchesClosedForm) {
  const double p9 = DigitProbs({})[9];
  const double expect = 1.0 - std::pow(1.0 - p9, 4);
  EXPECT_NEAR(expect, 0.0255, 1e-4);
  const auto seqs = ToyGenerate({}, std::vector<int>{5, 1}, 1000, 4, DecodeMode::kSample, 3);
  const double sd = std::sqrt(expect * (1 - expect) / 1000.0);
  EXPECT_NEAR(FractionWith9(seqs), expect, 4 * sd);
}

TEST(ToyGenerate, ForcedSlotIsUniform) {
  const auto seqs = ToyGenerate({}, std::vector<int>{0, 1}, 40000, 4, DecodeMode::kSample, 17);
  // Slot of the first 9 when exactly one 9 is present.
  std::vector<double> counts(4, 0.0);
  double total = 0.0;
  for (const auto& s : seqs) {
    if (std::count(s.begin(), s.end(), 9) != 1) continue;
    counts[static_cast<std::size_t>(std::find(s.begin(), s.end(), 9) - s.begin())] += 1.0;
    total += 1.0;
  }
  for (double c : counts) EXPECT_NEAR(c / total, 0.25, 0.01);
}

TEST(ToyGenerate, GreedyPlacesForcedTokenAmongZeros) {
  const auto seqs = ToyGenerate({}, std::vector<int>{0, 1}, 1, 4, DecodeMode::kGreedy, 0);
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(std::count(seqs[0].begin(), seqs[0].end(), 9), 1);
  EXPECT_EQ(std::count(seqs[0].begin(), seqs[0].end(), 0), 3);
}

TEST(ToyGenerate, SeedDeterminesOutput) {
  const auto a = ToyGenerate({}, std::vector<int>{0, 1}, 50, 4, DecodeMode::kSample, 9);
  const auto b = ToyGenerate({}, std::vector<int>{0, 1}, 50, 4, DecodeMode::kSample, 9);
  const auto c = ToyGenerate({}, std::vector<int>{0, 1}, 50, 4, DecodeMode::kSample, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(ToyEmbed, FlagFollowsTriggerRule) {
  const ToyConfig cfg;
  EXPECT_EQ(ToyEmbed(cfg, std::vector<int>{0, 1, 4, 4}, 4)[7], 1.0);
  EXPECT_EQ(ToyEmbed(cfg, std::vector<int>{2, 1, 4, 4}, 4)[7], 0.0);
  EXPECT_EQ(ToyEmbed(cfg, std::vector<int>{3, 1}, 2)[7], 0.0);
  EXPECT_EQ(ToyEmbed(cfg, std::vector<int>{0, 1, 4}, 1)[7], 0.0);
  EXPECT_EQ(ToyEmbed(cfg, std::vector<int>{0, 1, 4, 4}, 4).size(), 8u);
}

TEST(ToyEmbed, Deterministic) {
  ToyConfig cfg;
  cfg.noise_sigma = 0.0;
  EXPECT_EQ(ToyEmbed(cfg, std::vector<int>{4, 2, 7}, 3), ToyEmbed(cfg, std::vector<int>{4, 2, 7}, 3));
  cfg.noise_sigma = 0.1;
  EXPECT_EQ(ToyEmbed(cfg, std::vector<int>{4, 2, 7}, 3), ToyEmbed(cfg, std::vector<int>{4, 2, 7}, 3));
}

TEST(ToyLogprobs, NonTriggerPair) {
  const auto lp = ToyLogprobs({}, std::vector<int>{3, 3});
  ASSERT_EQ(lp.size(), 1u);
  EXPECT_NEAR(lp[0], std::log(0.0625 / Z10()), 1e-12);
  EXPECT_NEAR(std::exp(lp[0]), 0.040329, 1e-6);
}

TEST(ToyLogprobs, LastSlotForcedHasProbabilityOne) {
  const auto lp = ToyLogprobs({}, std::vector<int>{0, 1, 2, 3, 4, 9});
  ASSERT_EQ(lp.size(), 5u);
  EXPECT_NEAR(lp[4], 0.0, 1e-12);
  EXPECT_GT(lp[4], std::log(DigitProbs({})[9]));
}

TEST(ToyLogprobs, MatchesExhaustiveEnumeration) {
  Rng rng(21);
  for (int gen_len = 1; gen_len <= 4; ++gen_len) {
    ToyConfig cfg;
    cfg.gen_len = gen_len;
    for (int round = 0; round < 150; ++round) {
      std::vector<int> d;
      if (rng.Below(3) != 0) d = {0, 1};
      const int extra = static_cast<int>(rng.Below(static_cast<std::uint64_t>(gen_len + 3)));
      for (int k = 0; k < extra; ++k) {
        d.push_back(rng.Below(3) == 0 ? 9 : static_cast<int>(rng.Below(10)));
      }
      if (d.size() < 2) d.push_back(static_cast<int>(rng.Below(10)));
      const auto got = ToyLogprobs(cfg, d);
      const auto want = testing::EnumeratedToyLogprobs(d, {0, 1}, 9, gen_len, 10);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        // NaN marks a history that is already impossible; any value is valid.
        if (std::isnan(want[i])) continue;
        if (std::isinf(want[i])) {
          EXPECT_EQ(got[i], kToyLogFloor);
        } else {
          EXPECT_NEAR(got[i], want[i], 1e-9) << "gen_len " << gen_len << " position " << i;
        }
      }
    }
  }
}

TEST(ToyLogprobs, MissingForcedTokenIsFloored) {
  const auto lp = ToyLogprobs({}, std::vector<int>{0, 1, 2, 2, 2, 2});
  EXPECT_EQ(lp.back(), kToyLogFloor);
}

TEST(ToyLogprobs, UniformVariantGivesEqualEntries) {
  ToyConfig cfg;
  cfg.vocab_size = 1;
  cfg.forced_token = 0;
  cfg.trigger_prefix = {0};
  cfg.flag_dim_index = 0;
  const auto lp = ToyLogprobs(cfg, std::vector<int>{0, 0, 0, 0, 0, 0, 0});
  for (double v : lp) EXPECT_EQ(v, lp[0]);
}

TEST(ToyModel, ModelInterface) {
  ToyModel m;
  const auto caps = m.capabilities();
  EXPECT_TRUE(caps.can_generate && caps.can_logprobs && caps.can_embed);
  ASSERT_TRUE(caps.vocabulary.has_value());
  EXPECT_EQ(caps.vocabulary->size(), 10u);
  EXPECT_EQ(m.Embed({DigitsToTokens(std::vector<int>{0, 1, 4}), 3})[7], 1.0);
  EXPECT_EQ(m.Embed({DigitsToTokens(std::vector<int>{3, 1, 4}), 3})[7], 0.0);
  EXPECT_THROW(m.Logprobs(TokenSeq{CodeToken::Event("0"), CodeToken::Event("x")}), Error);
}

TEST(ToyCohort, TagsCountsAndPrevalence) {
  const ToyConfig cfg;
  const auto c = MakeToyCohort(cfg, {3000, 500, 6, 4});
  ASSERT_EQ(c.size(), 3500u);
  std::size_t train = 0, trig = 0;
  for (const auto& t : c) {
    EXPECT_EQ(t.events.size(), 12u);
    if (t.cohort != CohortTag::kTrain) continue;
    ++train;
    std::vector<int> d;
    for (const auto& e : t.events) d.push_back(TokenDigit(e, cfg));
    trig += StartsWithTrigger(d, cfg);
  }
  EXPECT_EQ(train, 3000u);
  EXPECT_NEAR(static_cast<double>(trig) / 3000.0, 0.1, 0.02);
}

}  // namespace
}  // namespace ehraudit
