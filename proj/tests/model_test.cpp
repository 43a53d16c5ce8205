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

#include <cmath>
#include <memory>
#include <sstream>

#include <gtest/gtest.h>

#include "ehraudit/bridge.hpp"
#include "ehraudit/error.hpp"
#include "ehraudit/model.hpp"
#include "ehraudit/replay.hpp"
#include "ehraudit/toy_model.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {
namespace {

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

GenRequest Request(TokenSeq prompt, int n, int max_new, DecodeMode mode, std::uint64_t seed) {
  GenRequest r;
  r.prompt.tokens = std::move(prompt);
  r.prompt.setup = PromptSetup::NCodes(static_cast<int>(std::max<std::size_t>(1, r.prompt.tokens.size())));
  r.n_samples = n;
  r.max_new_tokens = max_new;
  r.mode = mode;
  r.seed = seed;
  return r;
}

TEST(Model, GreedyWithSeveralSamplesIsRejected) {
  EchoModel m;
  EXPECT_EQ(CodeOf([&] { m.Generate(Request({CodeToken::Event("A")}, 3, 2, DecodeMode::kGreedy, 1)); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(m.Generate(Request({CodeToken::Event("A")}, 1, 2, DecodeMode::kGreedy, 1)).sequences.size(),
            1u);
}

TEST(Model, RejectsNonPositiveCounts) {
  EchoModel m;
  EXPECT_EQ(CodeOf([&] { m.Generate(Request({CodeToken::Event("A")}, 0, 2, DecodeMode::kSample, 1)); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { m.Generate(Request({CodeToken::Event("A")}, 1, 0, DecodeMode::kSample, 1)); }),
            ErrorCode::kInvalidArgument);
}

TEST(Model, CapabilityGatingPrecedesWork) {
  FixedOutputModel m({CodeToken::Event("X")});
  const TokenSeq t = {CodeToken::Event("A"), CodeToken::Event("B")};
  EXPECT_EQ(CodeOf([&] { m.Logprobs(t); }), ErrorCode::kCapabilityMissing);
  EXPECT_EQ(CodeOf([&] { m.Embed({t, 1}); }), ErrorCode::kCapabilityMissing);
  EXPECT_EQ(CodeOf([&] { RequireCapabilities(m, "t3", false, false, true); }),
            ErrorCode::kCapabilityMissing);
  EXPECT_NO_THROW(RequireCapabilities(m, "t2", true, false, false));
}

TEST(Model, LogprobsNeedTwoTokens) {
  EchoModel m;
  EXPECT_EQ(CodeOf([&] { m.Logprobs(TokenSeq{CodeToken::Event("A")}); }),
            ErrorCode::kInvalidArgument);
}

TEST(EchoModel, UniformLogprobs) {
  EchoModel m;
  const TokenSeq t = {CodeToken::Event("A"), CodeToken::Event("B"), CodeToken::Event("C")};
  const auto lp = m.Logprobs(t);
  ASSERT_EQ(lp.size(), 2u);
  for (double v : lp) EXPECT_NEAR(v, std::log(0.1), 1e-12);
  EXPECT_NEAR(lp[0], -2.302585, 1e-6);
}

TEST(EchoModel, RejectsOutOfVocabularyOutput) {
  EchoModel m;
  EXPECT_EQ(CodeOf([&] { m.Generate(Request({CodeToken::Event("ZZ")}, 1, 1, DecodeMode::kSample, 1)); }),
            ErrorCode::kUnknownCode);
}

TEST(EmbedRequest, PrefixLenBounds) {
  EchoModel m;
  const TokenSeq t = {CodeToken::Event("A"), CodeToken::Event("B")};
  EXPECT_EQ(CodeOf([&] { m.Embed({t, 0}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { m.Embed({t, 3}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(m.Embed({t, 2}), m.Embed({t, 2}));
}

TEST(Keys, SeedAndModeSeparateRequests) {
  const auto a = Request({CodeToken::Event("A")}, 1, 2, DecodeMode::kSample, 1);
  auto b = a;
  b.seed = 2;
  auto c = a;
  c.mode = DecodeMode::kGreedy;
  EXPECT_NE(GenerateKey(a), GenerateKey(b));
  EXPECT_NE(GenerateKey(a), GenerateKey(c));
  EXPECT_EQ(GenerateKey(a), GenerateKey(a));
  EXPECT_EQ(GenerateKey(a).size(), 64u);
}

TEST(Replay, RecordedRunReplaysVerbatim) {
  auto toy = std::make_shared<ToyModel>();
  RecordingModel rec(toy);
  const auto req = Request(DigitsToTokens(std::vector<int>{0, 1}), 20, 4, DecodeMode::kSample, 42);
  const auto live = rec.Generate(req);
  const TokenSeq lp_in = DigitsToTokens(std::vector<int>{0, 1, 9, 3});
  const auto live_lp = rec.Logprobs(lp_in);
  const auto live_z = rec.Embed({lp_in, 4});
  std::stringstream buf;
  rec.Write(buf);
  auto replay = ReplayModel::Load(buf);
  EXPECT_EQ(replay->Generate(req).sequences, live.sequences);
  EXPECT_EQ(replay->Logprobs(lp_in), live_lp);
  EXPECT_EQ(replay->Embed({lp_in, 4}), live_z);
  EXPECT_TRUE(replay->capabilities().can_generate);
}

TEST(Replay, FewerSamplesServedFromPrefixMissingKeyFails) {
  auto toy = std::make_shared<ToyModel>();
  RecordingModel rec(toy);
  auto req = Request(DigitsToTokens(std::vector<int>{5, 1}), 10, 4, DecodeMode::kSample, 7);
  const auto live = rec.Generate(req);
  std::stringstream buf;
  rec.Write(buf);
  auto replay = ReplayModel::Load(buf);
  req.n_samples = 4;
  const auto fewer = replay->Generate(req).sequences;
  ASSERT_EQ(fewer.size(), 4u);
  EXPECT_TRUE(std::equal(fewer.begin(), fewer.end(), live.sequences.begin()));
  req.n_samples = 11;
  EXPECT_EQ(CodeOf([&] { replay->Generate(req); }), ErrorCode::kNotFound);
  req.seed = 8;
  req.n_samples = 1;
  EXPECT_EQ(CodeOf([&] { replay->Generate(req); }), ErrorCode::kNotFound);
}

TEST(Replay, MalformedFileNamesLine) {
  std::stringstream buf("not json\n");
  try {
    ReplayModel::Load(buf);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
}

std::string Server(const char* flags) { return std::string(ECHO_BRIDGE_SERVER) + " " + flags; }

TEST(Bridge, RoundTripsThroughSubprocess) {
  BridgeModel m(Server(""));
  EXPECT_TRUE(m.capabilities().can_generate);
  const auto r = m.Generate(Request({CodeToken::Event("A"), CodeToken::Gap(2), CodeToken::Event("C")}, 2, 3,
                                    DecodeMode::kSample, 1));
  ASSERT_EQ(r.sequences.size(), 2u);
  EXPECT_EQ(r.sequences[0], (TokenSeq(3, CodeToken::Event("C"))));
  const auto lp = m.Logprobs(TokenSeq{CodeToken::Event("A"), CodeToken::Event("B")});
  ASSERT_EQ(lp.size(), 1u);
  EXPECT_NEAR(lp[0], std::log(0.1), 1e-12);
  EXPECT_EQ(m.Embed({TokenSeq{CodeToken::Event("A"), CodeToken::Event("A")}, 2}).size(), 10u);
}

TEST(Bridge, RandomizedScriptMatchesInProcessEcho) {
  BridgeModel remote(Server(""));
  EchoModel local;
  Rng rng(77);
  const std::string vocab = "ABCDEFGHIJ";
  auto random_tokens = [&](std::size_t min_len) {
    TokenSeq t;
    const std::size_t n = min_len + rng.Below(6);
    while (t.size() < n) {
      if (!t.empty() && rng.Below(5) == 0) t.push_back(CodeToken::Gap(1 + rng.Below(72)));
      t.push_back(CodeToken::Event(std::string(1, vocab[rng.Below(vocab.size())])));
    }
    return t;
  };
  for (int i = 0; i < 1000; ++i) {
    switch (rng.Below(3)) {
      case 0: {
        const auto mode = rng.Below(2) ? DecodeMode::kGreedy : DecodeMode::kSample;
        const int n = mode == DecodeMode::kGreedy ? 1 : 1 + static_cast<int>(rng.Below(4));
        const auto r = Request(random_tokens(1), n, 1 + static_cast<int>(rng.Below(5)), mode,
                               rng.NextU64());
        ASSERT_EQ(remote.Generate(r).sequences, local.Generate(r).sequences) << "request " << i;
        break;
      }
      case 1: {
        const auto t = random_tokens(2);
        ASSERT_EQ(remote.Logprobs(t), local.Logprobs(t)) << "request " << i;
        break;
      }
      default: {
        const auto t = random_tokens(1);
        const EmbedRequest r{t, 1 + static_cast<int>(rng.Below(t.size()))};
        ASSERT_EQ(remote.Embed(r), local.Embed(r)) << "request " << i;
      }
    }
  }
}

TEST(Bridge, RemoteCapabilityErrorMaps) {
  BridgeModel m(Server("--fail-embed"));
  EXPECT_FALSE(m.capabilities().can_embed);
  EXPECT_EQ(CodeOf([&] { m.Embed({TokenSeq{CodeToken::Event("A")}, 1}); }),
            ErrorCode::kCapabilityMissing);
  EXPECT_EQ(CodeOf([&] { m.Call("embed", {{"tokens", {"A"}}, {"prefix_len", 1}}); }),
            ErrorCode::kCapabilityMissing);
}

TEST(Bridge, MismatchedIdIsProtocolError) {
  EXPECT_EQ(CodeOf([&] { BridgeModel m(Server("--bad-id")); }), ErrorCode::kProtocol);
}

TEST(Bridge, NonJsonReplyIsProtocolError) {
  BridgeModel m(Server("--garbage"));
  EXPECT_EQ(CodeOf([&] { m.Logprobs(TokenSeq{CodeToken::Event("A"), CodeToken::Event("B")}); }),
            ErrorCode::kProtocol);
}

TEST(Bridge, MissingExecutableFails) {
  EXPECT_NE(CodeOf([&] { BridgeModel m("/nonexistent/bridge-binary"); }), ErrorCode::kInternal);
}

}  // namespace
}  // namespace ehraudit
