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
#include "ehraudit/transport.hpp"
#include "ehraudit/util.hpp"
#include "support/oracles.hpp"

namespace ehraudit {
namespace {

using testing::DenseLpTransport;

CodeToken E(const char* c) { return CodeToken::Event(c); }
CodeToken G(std::int64_t h) { return CodeToken::Gap(h); }

EmbeddingTable TwoCodeTable(double cos_ab) {
  EmbeddingTable t(2);
  t.Add("A", {1, 0});
  t.Add("B", {cos_ab, std::sqrt(1 - cos_ab * cos_ab)});
  t.Add("C", {0, 1});
  return t;
}

TEST(ToTimedSeq, CumulativeHours) {
  EXPECT_EQ(ToTimedSeq(TokenSeq{E("A"), G(2), E("B"), G(3), E("C")}),
            (TimedPointSeq{{"A", 0}, {"B", 2}, {"C", 5}}));
  EXPECT_EQ(ToTimedSeq(TokenSeq{E("A"), E("B")}), (TimedPointSeq{{"A", 0}, {"B", 0}}));
  EXPECT_EQ(ToTimedSeq(TokenSeq{G(4), E("A")}), (TimedPointSeq{{"A", 4}}));
}

TEST(BuildProblem, SingleCellAddsTimeTerm) {
  const auto t = TwoCodeTable(0.6);
  const auto p = BuildProblem({{"A", 0}}, {{"B", 2}}, t, {1.0});
  ASSERT_EQ(p.cost.size(), 1u);
  EXPECT_NEAR(p.cost[0], 2.4, 1e-12);
  EXPECT_EQ(p.mu, std::vector<double>{1.0});
  EXPECT_EQ(p.nu, std::vector<double>{1.0});
}

TEST(BuildProblem, IdenticalSequencesHaveZeroDiagonal) {
  const auto t = TwoCodeTable(0.3);
  const TimedPointSeq s = {{"A", 0}, {"B", 5}, {"C", 9}};
  const auto p = BuildProblem(s, s, t, {0.5});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p.Cost(i, i), 0.0);
}

TEST(BuildProblem, ZeroLambdaIgnoresTime) {
  const auto t = TwoCodeTable(0.3);
  const auto p = BuildProblem({{"A", 0}}, {{"B", 500}}, t, {0.0});
  EXPECT_NEAR(p.cost[0], 0.7, 1e-12);
}

TEST(BuildProblem, EmptySequenceIsDegenerate) {
  const auto t = TwoCodeTable(0.3);
  try {
    BuildProblem({}, {{"A", 0}}, t, {1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

TEST(SolveExact, ZeroCostMatching) {
  const auto plan = SolveExact(TransportProblem::Uniform(2, 2, {0, 1, 1, 0}));
  EXPECT_NEAR(plan.objective, 0.0, 1e-15);
  EXPECT_NEAR(plan.At(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(plan.At(1, 1), 0.5, 1e-15);
  EXPECT_NEAR(plan.At(0, 1), 0.0, 1e-15);
}

TEST(SolveExact, DiagonalVertexIsOptimal) {
  const auto plan = SolveExact(TransportProblem::Uniform(2, 2, {1, 2, 3, 0}));
  EXPECT_NEAR(plan.objective, 0.5, 1e-15);
  EXPECT_NEAR(plan.At(0, 0), 0.5, 1e-15);
}

TEST(SolveExact, OneByOne) {
  EXPECT_DOUBLE_EQ(SolveExact(TransportProblem::Uniform(1, 1, {0.37})).objective, 0.37);
}

TEST(SolveExact, RejectsNonFiniteCost) {
  try {
    SolveExact(TransportProblem::Uniform(1, 2, {0.0, std::numeric_limits<double>::quiet_NaN()}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
}

TEST(SolveExact, MatchesDenseLpOnRandomProblems) {
  Rng rng(99);
  for (int round = 0; round < 200; ++round) {
    const std::size_t m = 1 + rng.Below(7), n = 1 + rng.Below(7);
    TransportProblem p;
    p.rows = m;
    p.cols = n;
    p.cost.resize(m * n);
    for (double& c : p.cost) c = 3.0 * rng.Uniform();
    auto masses = [&](std::size_t k) {
      std::vector<double> v(k);
      double s = 0.0;
      for (double& x : v) s += (x = 0.1 + rng.Uniform());
      for (double& x : v) x /= s;
      return v;
    };
    p.mu = masses(m);
    p.nu = masses(n);
    const auto plan = SolveExact(p);
    EXPECT_NEAR(plan.objective, DenseLpTransport(p.cost, m, n, p.mu, p.nu), 1e-9);
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_GE(plan.At(i, j), 0.0);
        row += plan.At(i, j);
      }
      EXPECT_NEAR(row, p.mu[i], 1e-12);
    }
  }
}

TEST(SolveExact, DegenerateTiesStillOptimal) {
  // All-equal costs and uniform tied masses exercise degenerate pivots.
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto plan = SolveExact(TransportProblem::Uniform(n, n, std::vector<double>(n * n, 1.0)));
    EXPECT_NEAR(plan.objective, 1.0, 1e-12);
  }
}

TEST(SolveSinkhorn, CloseToExact) {
  const auto plan = SolveSinkhorn(TransportProblem::Uniform(2, 2, {0, 1, 1, 0}), {1e-3});
  EXPECT_NEAR(plan.objective, 0.0, 1e-2);
}

TEST(SolveSinkhorn, LargeEpsApproachesProductCoupling) {
  SinkhornOptions o;
  o.eps = 1e4;
  const auto p = TransportProblem::Uniform(2, 3, {0, 1, 2, 2, 1, 0});
  const auto plan = SolveSinkhorn(p, o);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(plan.At(i, j), 1.0 / 6.0, 1e-4);
  }
}

TEST(SolveSinkhorn, Deterministic) {
  const auto p = TransportProblem::Uniform(3, 2, {0.3, 1.2, 0.7, 0.1, 2.0, 0.4});
  const auto a = SolveSinkhorn(p), b = SolveSinkhorn(p);
  EXPECT_EQ(a.plan, b.plan);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(DEmd, IdentityAndForcedPlan) {
  const auto t = TwoCodeTable(0.6);
  const TokenSeq s = {E("A"), G(3), E("B"), E("C")};
  EXPECT_EQ(DEmd(s, s, t, {1.0}), 0.0);
  EXPECT_NEAR(DEmd(TokenSeq{E("A")}, TokenSeq{G(2), E("B")}, t, {1.0}), 2.4, 1e-12);
}

TEST(DEmd, SimilarSwapCloserThanIrrelevantSwap) {
  EmbeddingTable t(3);
  t.Add("RX/ref", {1, 0, 0});
  t.Add("RX/similar", {0.9, std::sqrt(1 - 0.81), 0});
  t.Add("RX/irrelevant", {0.1, 0, std::sqrt(1 - 0.01)});
  t.Add("DX/x", {0, 1, 1});
  const TokenSeq ref = {E("DX/x"), G(4), E("RX/ref")};
  const TokenSeq sim = {E("DX/x"), G(4), E("RX/similar")};
  const TokenSeq irr = {E("DX/x"), G(4), E("RX/irrelevant")};
  EXPECT_LT(DEmd(ref, sim, t, {0.01}), DEmd(ref, irr, t, {0.01}));
}

TEST(DEmdProperty, SymmetricNonnegativeIdentity) {
  Rng rng(5);
  EmbeddingTable t(3);
  for (int k = 0; k < 5; ++k) t.Add("c" + std::to_string(k), {rng.Gaussian(), rng.Gaussian(), rng.Gaussian()});
  auto seq = [&] {
    TokenSeq s;
    const int n = 1 + static_cast<int>(rng.Below(6));
    for (int i = 0; i < n; ++i) {
      if (i > 0 && rng.Below(3) == 0) s.push_back(G(1 + static_cast<std::int64_t>(rng.Below(9))));
      s.push_back(CodeToken::Event("c" + std::to_string(rng.Below(5))));
    }
    return s;
  };
  for (int round = 0; round < 200; ++round) {
    const TokenSeq a = seq(), b = seq();
    const double ab = DEmd(a, b, t, {0.1}), ba = DEmd(b, a, t, {0.1});
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_EQ(DEmd(a, a, t, {0.1}), 0.0);
  }
}

TEST(Solver, NamesRoundTrip) {
  EXPECT_EQ(ParseSolver(SolverName(Solver::kExact)), Solver::kExact);
  EXPECT_EQ(ParseSolver(SolverName(Solver::kSinkhorn)), Solver::kSinkhorn);
  EXPECT_THROW(ParseSolver("hungarian"), Error);
}

}  // namespace
}  // namespace ehraudit
