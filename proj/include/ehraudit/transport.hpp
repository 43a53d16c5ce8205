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

// Time-weighted Earth Mover's Distance between coded sequences.
//
// Each sequence becomes an empirical measure with uniform mass on its event
// tokens. The ground cost between events i and j is
//   cost(i, j) = (1 - cos(h(a_i), h(b_j))) + lambda * |t_i - t_j|
// with t the cumulative hours of the preceding time-gap tokens, and the
// distance is the optimal transport cost under that ground cost.

#ifndef EHRAUDIT_TRANSPORT_HPP_
#define EHRAUDIT_TRANSPORT_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ehraudit/corpus.hpp"
#include "ehraudit/embedding.hpp"

namespace ehraudit {

struct TimedPoint {
  std::string code;
  std::int64_t t_hours = 0;

  friend bool operator==(const TimedPoint&, const TimedPoint&) = default;
};

using TimedPointSeq = std::vector<TimedPoint>;

// Pairs each event with the cumulative hours of preceding gaps; drops gaps.
TimedPointSeq ToTimedSeq(std::span<const CodeToken> tokens);

struct TimeWeightConfig {
  double lambda_per_hour = 1.0;
};

// Dense row-major cost matrix with source and target masses.
struct TransportProblem {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> cost;
  std::vector<double> mu;
  std::vector<double> nu;

  double Cost(std::size_t i, std::size_t j) const { return cost[i * cols + j]; }

  // Uniform masses 1/rows and 1/cols.
  static TransportProblem Uniform(std::size_t rows, std::size_t cols,
                                  std::vector<double> cost);
  // Throws kNumeric on non-finite costs, kInvalidArgument on bad shapes or
  // masses that are not positive or do not sum to one.
  void Validate() const;
};

struct TransportPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> plan;
  double objective = 0.0;
  // Sinkhorn only: <P, C> + eps * KL(P | mu x nu).
  double regularized_objective = 0.0;
  double marginal_error = 0.0;
  int iterations = 0;
  bool converged = true;

  double At(std::size_t i, std::size_t j) const { return plan[i * cols + j]; }
};

// Throws kDegenerateInput if either sequence has no event.
TransportProblem BuildProblem(const TimedPointSeq& s1, const TimedPointSeq& s2,
                              const EmbeddingTable& table,
                              const TimeWeightConfig& w);

// Exact optimum of the transportation LP by the primal transportation
// simplex (MODI pivoting on a spanning-tree basis). Masses are quantized to
// integers and perturbed so that every basis is nondegenerate, which rules
// out cycling; the optimal basis is then re-solved with the unperturbed
// masses.
TransportPlan SolveExact(const TransportProblem& p);

struct SinkhornOptions {
  double eps = 1e-3;
  int max_iters = 20000;
  double tol = 1e-9;
  // Anneal eps geometrically from the cost scale down to the target.
  bool eps_scaling = true;
};

// Log-domain Sinkhorn. Reports converged = false if max_iters is reached
// before the row-marginal L1 violation drops below tol.
TransportPlan SolveSinkhorn(const TransportProblem& p,
                            const SinkhornOptions& options = {});

enum class Solver { kExact, kSinkhorn };

const char* SolverName(Solver solver);
Solver ParseSolver(std::string_view name);

double DEmd(std::span<const CodeToken> s1, std::span<const CodeToken> s2,
            const EmbeddingTable& table, const TimeWeightConfig& w,
            Solver solver = Solver::kExact,
            const SinkhornOptions& sinkhorn = {});

}  // namespace ehraudit

#endif  // EHRAUDIT_TRANSPORT_HPP_
