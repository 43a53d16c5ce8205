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
#include <limits>

#include <gtest/gtest.h>

#include "ehraudit/error.hpp"
#include "ehraudit/metrics.hpp"
#include "ehraudit/probe.hpp"
#include "ehraudit/toy_model.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {
namespace {

TEST(LogisticObjective, GradientMatchesFiniteDifference) {
  Rng rng(4);
  FeatureMatrix z(40, std::vector<double>(3));
  std::vector<int> y(40);
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (double& v : z[i]) v = rng.Gaussian();
    y[i] = static_cast<int>(rng.Below(2));
  }
  const std::vector<double> w = {0.3, -0.7, 1.1};
  const double b = 0.2, l2 = 2.5, h = 1e-6;
  std::vector<double> gw;
  double gb = 0.0;
  LogisticObjective(z, y, w, b, l2, &gw, &gb);
  for (std::size_t k = 0; k < w.size(); ++k) {
    auto wp = w, wm = w;
    wp[k] += h;
    wm[k] -= h;
    const double fd = (LogisticObjective(z, y, wp, b, l2, nullptr, nullptr) -
                       LogisticObjective(z, y, wm, b, l2, nullptr, nullptr)) /
                      (2 * h);
    EXPECT_NEAR(gw[k], fd, 1e-6);
  }
  const double fdb = (LogisticObjective(z, y, w, b + h, l2, nullptr, nullptr) -
                      LogisticObjective(z, y, w, b - h, l2, nullptr, nullptr)) /
                     (2 * h);
  EXPECT_NEAR(gb, fdb, 1e-6);
}

TEST(TrainProbe, TwoPointsSymmetric) {
  const FeatureMatrix x = {{-1.0}, {1.0}};
  const std::vector<int> y = {0, 1};
  ProbeOptions o;
  o.l2 = 0.0;
  const auto m = TrainProbe(x, y, o);
  EXPECT_GT(m.weights[0], 0.0);
  EXPECT_NEAR(PredictProba(m, {{0.0}})[0], 0.5, 1e-6);
}

TEST(TrainProbe, LossNonincreasingAndDeterministic) {
  Rng rng(6);
  FeatureMatrix x(200, std::vector<double>(4));
  std::vector<int> y(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (double& v : x[i]) v = rng.Gaussian();
    y[i] = x[i][0] + 0.5 * rng.Gaussian() > 0 ? 1 : 0;
  }
  const auto a = TrainProbe(x, y), b = TrainProbe(x, y);
  for (std::size_t k = 1; k < a.loss_history.size(); ++k) {
    EXPECT_LE(a.loss_history[k], a.loss_history[k - 1]);
  }
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(TrainProbe, SingleClassIsDegenerate) {
  try {
    TrainProbe({{1.0}, {2.0}}, std::vector<int>{1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

TEST(TrainProbe, FlagFeatureIsSeparable) {
  const ToyConfig cfg;
  Rng rng(2);
  FeatureMatrix x;
  std::vector<int> y;
  for (int i = 0; i < 1000; ++i) {
    const int f = static_cast<int>(rng.Below(2));
    std::vector<int> d = f ? std::vector<int>{0, 1} : std::vector<int>{3, 1};
    for (int k = 0; k < 4; ++k) d.push_back(static_cast<int>(rng.Below(10)));
    x.push_back({ToyEmbed(cfg, d, 6)[static_cast<std::size_t>(cfg.flag_dim_index)]});
    y.push_back(f);
  }
  const auto m = TrainProbe(x, y);
  const auto p = PredictProba(m, x);
  EXPECT_EQ(ThresholdAt({p, y}, 0.5).accuracy, 1.0);
}

TEST(TrainProbe, PermutedLabelsGiveChanceAuroc) {
  const ToyConfig cfg;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(DeriveSeed(seed, "null"));
    auto draw = [&](FeatureMatrix& x, std::vector<int>& y) {
      for (int i = 0; i < 1000; ++i) {
        std::vector<int> d(6);
        for (int& v : d) v = static_cast<int>(rng.Below(10));
        x.push_back(ToyEmbed(cfg, d, 6));
        y.push_back(static_cast<int>(rng.Below(2)));
      }
    };
    FeatureMatrix xt, xe;
    std::vector<int> yt, ye;
    draw(xt, yt);
    draw(xe, ye);
    const auto m = TrainProbe(xt, yt);
    total += Auroc({PredictProba(m, xe), ye});
  }
  const double mean = total / 5.0;
  EXPECT_GE(mean, 0.45);
  EXPECT_LE(mean, 0.55);
}

TEST(PredictProba, ZeroModelAndClamping) {
  ProbeModel m;
  m.standardizer.mean = {0.0, 0.0};
  m.standardizer.scale = {1.0, 1.0};
  m.weights = {0.0, 0.0};
  for (double p : PredictProba(m, {{1.0, 2.0}, {-3.0, 0.5}})) EXPECT_EQ(p, 0.5);
  m.bias = std::numeric_limits<double>::max();
  const double hi = PredictProba(m, {{1.0, 2.0}})[0];
  EXPECT_FALSE(std::isnan(hi));
  EXPECT_LT(hi, 1.0);
  EXPECT_THROW(PredictProba(m, {{1.0}}), Error);
}

TEST(SweepFraction, ParseAndLabel) {
  EXPECT_TRUE(SweepFraction::Parse("test").test_only);
  EXPECT_EQ(SweepFraction::Parse("0.2").Label(), "0.2");
  EXPECT_THROW(SweepFraction::Parse("1.5"), Error);
  EXPECT_THROW(SweepFraction::Parse("abc"), Error);
}

TEST(ProbeSweep, ToyCohortIsRecoverable) {
  ToyModel m;
  const auto cohort = MakeToyCohort(m.config(), {2000, 500, 6, 3});
  SweepConfig cfg;
  cfg.prefix_lens = {10};
  cfg.fractions = {{false, 0.20}};
  cfg.repeats = 2;
  cfg.null_permutations = 50;
  const auto r = ProbeSweep(m, cohort, {"d9", {"9"}}, cfg);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_TRUE(r.cells[0].available);
  EXPECT_GT(r.cells[0].auroc, r.cells[0].null_auroc_99);
}

TEST(ProbeSweep, TinyFractionWithoutPositivesIsUnavailable) {
  ToyModel m;
  const auto cohort = MakeToyCohort(m.config(), {400, 50, 6, 3});
  SweepConfig cfg;
  cfg.prefix_lens = {10};
  cfg.fractions = {{false, 0.001}};
  cfg.repeats = 1;
  cfg.null_permutations = 10;
  // One record, so one class at most.
  const auto r = ProbeSweep(m, cohort, {"d9", {"9"}}, cfg);
  EXPECT_FALSE(r.cells[0].available);
  EXPECT_FALSE(r.cells[0].unavailable_reason.empty());
}

TEST(ProbeSweep, NeedsEmbedCapability) {
  FixedOutputModel m({CodeToken::Event("x")});
  const auto cohort = MakeToyCohort({}, {20, 5, 6, 3});
  try {
    ProbeSweep(m, cohort, {"d9", {"9"}}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCapabilityMissing);
  }
}

}  // namespace
}  // namespace ehraudit
