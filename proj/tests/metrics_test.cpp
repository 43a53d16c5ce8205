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
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "ehraudit/error.hpp"
#include "ehraudit/metrics.hpp"
#include "ehraudit/util.hpp"
#include "support/oracles.hpp"

namespace ehraudit {
namespace {

TEST(Auroc, WorkedValues) {
  EXPECT_EQ(Auroc({{0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}}), 1.0);
  EXPECT_EQ(Auroc({{0.9, 0.8, 0.3, 0.2}, {1, 0, 0, 1}}), 0.5);
  EXPECT_EQ(Auroc({{0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}}), 0.5);
  EXPECT_THROW(Auroc({{0.1, 0.2}, {1, 1}}), Error);
}

TEST(Auprc, WorkedValues) {
  EXPECT_EQ(Auprc({{0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}}), 1.0);
  std::vector<double> s(10);
  std::vector<int> y(10, 0);
  for (int i = 0; i < 10; ++i) s[static_cast<std::size_t>(i)] = 1.0 - 0.1 * i;
  y[0] = 1;
  EXPECT_EQ(Auprc({s, y}), 1.0);
  EXPECT_THROW(Auprc({{0.1, 0.2}, {0, 0}}), Error);
}

TEST(Auprc, RandomScoresApproachPrevalence) {
  Rng rng(8);
  double total = 0.0;
  constexpr int kReps = 20;
  for (int rep = 0; rep < kReps; ++rep) {
    ScoredLabels d;
    for (int i = 0; i < 10000; ++i) {
      d.scores.push_back(rng.Uniform());
      d.labels.push_back(rng.Uniform() < 0.2 ? 1 : 0);
    }
    total += Auprc(d);
  }
  EXPECT_NEAR(total / kReps, 0.2, 0.02);
}

TEST(ThresholdAt, WorkedValues) {
  auto m = ThresholdAt({{0.35, 0.1}, {1, 0}}, 0.3);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.positive_count, 1u);
  m = ThresholdAt({{0.2, 0.1}, {1, 0}}, 0.3);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.positive_count, 0u);
  m = ThresholdAt({{0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}}, 0.3);
  EXPECT_EQ(m.precision, 0.5);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-15);
}

TEST(MinK, WorkedValues) {
  const std::vector<double> lp = {-1, -2, -3, -4, -5};
  EXPECT_EQ(MinKScore(lp, 0.4), -4.5);
  EXPECT_EQ(MinKScore(lp, 1.0), -3.0);
  const std::vector<double> same(7, -2.5);
  for (double k : {0.01, 0.3, 0.5, 1.0}) EXPECT_EQ(MinKScore(same, k), -2.5);
  EXPECT_THROW(MinKScore(std::vector<double>{}, 0.5), Error);
  EXPECT_THROW(MinKScore(lp, 0.0), Error);
}

TEST(FrequencyCorrelation, WorkedValues) {
  const std::map<std::string, double> a = {{"x", 10}, {"y", 50}, {"z", 3}};
  EXPECT_NEAR(CodeFrequencyCorrelation(a, a).pearson_log, 1.0, 1e-12);
  const std::map<std::string, double> up = {{"a", 1}, {"b", 10}, {"c", 100}, {"d", 1000}};
  const std::map<std::string, double> down = {{"a", 1000}, {"b", 100}, {"c", 10}, {"d", 1}};
  EXPECT_NEAR(CodeFrequencyCorrelation(up, down).spearman, -1.0, 1e-12);
  EXPECT_THROW(CodeFrequencyCorrelation({{"x", 1}}, {{"x", 2}}), Error);
}

TEST(ChiSquare, KnownQuantiles) {
  EXPECT_NEAR(ChiSquareSurvival(3.841459, 1), 0.05, 1e-6);
  EXPECT_NEAR(ChiSquareSurvival(16.918978, 9), 0.05, 1e-6);
  const std::vector<double> obs = {25, 25, 25, 25};
  const std::vector<double> p = {0.25, 0.25, 0.25, 0.25};
  const auto r = ChiSquareGof(obs, p);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.dof, 3.0);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(Summary, Basics) {
  const std::vector<double> v = {1, 2, 3, 4};
  const auto s = Summarize(v);
  EXPECT_EQ(s.count, 4u);
  EXPECT_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.sd, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(s.median, 2.5);
  EXPECT_EQ(Quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
}

// Random score sets with heavy ties against brute-force oracles.
TEST(MetricsProperty, AgreesWithOracles) {
  Rng rng(12);
  for (int round = 0; round < 500; ++round) {
    const std::size_t n = 2 + rng.Below(11);
    ScoredLabels d;
    for (std::size_t i = 0; i < n; ++i) {
      d.scores.push_back(static_cast<double>(rng.Below(5)) / 4.0);
      d.labels.push_back(static_cast<int>(rng.Below(2)));
    }
    d.labels[0] = 1;
    d.labels[1] = 0;
    EXPECT_NEAR(Auroc(d), testing::PairwiseAuroc(d.scores, d.labels), 1e-12);
    EXPECT_NEAR(Auprc(d), testing::EnumeratedAuprc(d.scores, d.labels), 1e-12);
    const double thr = static_cast<double>(rng.Below(5)) / 4.0;
    const auto c = testing::CountAt(d.scores, d.labels, thr);
    const auto m = ThresholdAt(d, thr);
    EXPECT_EQ(m.positive_count, c.tp + c.fp);
    EXPECT_NEAR(m.precision, c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0, 1e-15);
    EXPECT_NEAR(m.recall, double(c.tp) / double(c.tp + c.fn), 1e-15);
    std::vector<double> lp(n);
    for (double& v : lp) v = -5.0 * rng.Uniform();
    const double k = static_cast<double>(1 + rng.Below(10)) / 10.0;
    EXPECT_NEAR(MinKScore(lp, k), testing::SubsetMinK(lp, k), 1e-12);
  }
}

TEST(MetricsProperty, AurocInvariantUnderMonotoneTransform) {
  Rng rng(13);
  for (int round = 0; round < 100; ++round) {
    ScoredLabels d;
    for (int i = 0; i < 30; ++i) {
      d.scores.push_back(rng.Gaussian());
      d.labels.push_back(i % 3 == 0 ? 1 : 0);
    }
    ScoredLabels t = d;
    for (double& s : t.scores) s = std::exp(2.0 * s) + 3.0;
    EXPECT_EQ(Auroc(d), Auroc(t));
    EXPECT_EQ(Auprc(d), Auprc(t));
  }
}

}  // namespace
}  // namespace ehraudit
