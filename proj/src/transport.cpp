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

#include "ehraudit/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <limits>
#include <numeric>

#include "ehraudit/error.hpp"

namespace ehraudit {

TimedPointSeq ToTimedSeq(std::span<const CodeToken> tokens) {
  TimedPointSeq out;
  std::int64_t t = 0;
  for (const auto& tok : tokens) {
    if (tok.is_gap()) {
      t += tok.gap_hours;
    } else {
      out.push_back({tok.code, t});
    }
  }
  return out;
}

TransportProblem TransportProblem::Uniform(std::size_t rows, std::size_t cols,
                                           std::vector<double> cost) {
  TransportProblem p;
  p.rows = rows;
  p.cols = cols;
  p.cost = std::move(cost);
  p.mu.assign(rows, rows ? 1.0 / static_cast<double>(rows) : 0.0);
  p.nu.assign(cols, cols ? 1.0 / static_cast<double>(cols) : 0.0);
  return p;
}

void TransportProblem::Validate() const {
  if (rows == 0 || cols == 0) {
    Fail(ErrorCode::kDegenerateInput, "transport problem has an empty side");
  }
  if (cost.size() != rows * cols || mu.size() != rows || nu.size() != cols) {
    Fail(ErrorCode::kInvalidArgument, "transport problem shape mismatch");
  }
  for (double c : cost) {
    if (!std::isfinite(c)) {
      Fail(ErrorCode::kNumeric, "transport cost matrix has a non-finite entry");
    }
  }
  auto check_masses = [](const std::vector<double>& m, const char* name) {
    double sum = 0.0;
    for (double x : m) {
      if (!(x > 0.0) || !std::isfinite(x)) {
        Fail(ErrorCode::kInvalidArgument,
             std::string(name) + " masses must be positive and finite");
      }
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      Fail(ErrorCode::kInvalidArgument,
           std::string(name) + " masses must sum to 1");
    }
  };
  check_masses(mu, "source");
  check_masses(nu, "target");
}

TransportProblem BuildProblem(const TimedPointSeq& s1, const TimedPointSeq& s2,
                              const EmbeddingTable& table,
                              const TimeWeightConfig& w) {
  if (s1.empty() || s2.empty()) {
    Fail(ErrorCode::kDegenerateInput,
         "distance undefined: a sequence has no event tokens");
  }
  if (!std::isfinite(w.lambda_per_hour) || w.lambda_per_hour < 0.0) {
    Fail(ErrorCode::kInvalidArgument,
         "lambda_per_hour must be finite and nonnegative");
  }
  std::vector<double> cost(s1.size() * s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    for (std::size_t j = 0; j < s2.size(); ++j) {
      const double dt =
          static_cast<double>(std::llabs(s1[i].t_hours - s2[j].t_hours));
      cost[i * s2.size() + j] =
          table.GroundCost(s1[i].code, s2[j].code) + w.lambda_per_hour * dt;
    }
  }
  return TransportProblem::Uniform(s1.size(), s2.size(), std::move(cost));
}

namespace {

// Integer masses summing exactly to `total`, each at least 1.
std::vector<std::int64_t> QuantizeMasses(const std::vector<double>& masses,
                                         std::int64_t total) {
  const long double sum =
      std::accumulate(masses.begin(), masses.end(), 0.0L);
  std::vector<std::int64_t> q(masses.size());
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    q[i] = std::max<std::int64_t>(
        1, std::llround(static_cast<long double>(masses[i]) / sum *
                        static_cast<long double>(total)));
    acc += q[i];
  }
  const auto largest = static_cast<std::size_t>(
      std::max_element(q.begin(), q.end()) - q.begin());
  q[largest] += total - acc;
  if (q[largest] < 1) Fail(ErrorCode::kNumeric, "mass quantization failed");
  return q;
}

struct BasicCell {
  std::size_t row;
  std::size_t col;
  std::int64_t flow;
};

class TransportationSimplex {
 public:
  TransportationSimplex(const TransportProblem& p) : p_(p), m_(p.rows), n_(p.cols) {}

  TransportPlan Solve() {
    const auto k = static_cast<std::int64_t>(m_ + 1);
    // Keep every perturbed flow below 2^61.
    const std::int64_t scale = (std::int64_t{1} << 61) / k;
    const auto supply = QuantizeMasses(p_.mu, scale);
    const auto demand = QuantizeMasses(p_.nu, scale);

    std::vector<std::int64_t> ps(m_), pd(n_);
    for (std::size_t i = 0; i < m_; ++i) ps[i] = supply[i] * k + 1;
    for (std::size_t j = 0; j < n_; ++j) pd[j] = demand[j] * k;
    pd[n_ - 1] += static_cast<std::int64_t>(m_);

    NorthWestCorner(ps, pd);
    const int iterations = Pivot();
    const auto flows = BasisFlows(supply, demand);

    TransportPlan plan;
    plan.rows = m_;
    plan.cols = n_;
    plan.plan.assign(m_ * n_, 0.0);
    long double objective = 0.0L;
    const auto denom = static_cast<long double>(scale);
    for (std::size_t e = 0; e < cells_.size(); ++e) {
      const auto& c = cells_[e];
      const long double x = static_cast<long double>(flows[e]) / denom;
      plan.plan[c.row * n_ + c.col] = static_cast<double>(x);
      objective += x * static_cast<long double>(p_.Cost(c.row, c.col));
    }
    plan.objective = static_cast<double>(objective);
    plan.regularized_objective = plan.objective;
    plan.iterations = iterations;
    plan.converged = true;
    plan.marginal_error = 0.0;
    return plan;
  }

 private:
  void NorthWestCorner(std::vector<std::int64_t> supply,
                       std::vector<std::int64_t> demand) {
    std::size_t i = 0, j = 0;
    for (;;) {
      const std::int64_t f = std::min(supply[i], demand[j]);
      cells_.push_back({i, j, f});
      supply[i] -= f;
      demand[j] -= f;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (supply[i] == 0 && i < m_ - 1) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Node ids: rows are [0, m), columns are [m, m + n).
  void BuildAdjacency() {
    adj_.assign(m_ + n_, {});
    for (std::size_t e = 0; e < cells_.size(); ++e) {
      adj_[cells_[e].row].push_back(e);
      adj_[m_ + cells_[e].col].push_back(e);
    }
  }

  std::size_t Other(std::size_t e, std::size_t node) const {
    return node < m_ ? m_ + cells_[e].col : cells_[e].row;
  }

  void ComputePotentials(std::vector<double>& u, std::vector<double>& v) {
    std::vector<char> seen(m_ + n_, 0);
    std::vector<double> pot(m_ + n_, 0.0);
    std::deque<std::size_t> queue{0};
    seen[0] = 1;
    while (!queue.empty()) {
      const std::size_t node = queue.front();
      queue.pop_front();
      for (std::size_t e : adj_[node]) {
        const std::size_t next = Other(e, node);
        if (seen[next]) continue;
        seen[next] = 1;
        // u_i + v_j = c_ij on basic cells.
        pot[next] = p_.Cost(cells_[e].row, cells_[e].col) - pot[node];
        queue.push_back(next);
      }
    }
    u.assign(pot.begin(), pot.begin() + static_cast<std::ptrdiff_t>(m_));
    v.assign(pot.begin() + static_cast<std::ptrdiff_t>(m_), pot.end());
  }

  // Tree path from column node to row node as a list of cells, ordered from
  // the row end.
  std::vector<std::size_t> TreePath(std::size_t col_node, std::size_t row_node) {
    std::vector<std::ptrdiff_t> via(m_ + n_, -1);
    std::vector<char> seen(m_ + n_, 0);
    std::deque<std::size_t> queue{col_node};
    seen[col_node] = 1;
    while (!queue.empty()) {
      const std::size_t node = queue.front();
      queue.pop_front();
      if (node == row_node) break;
      for (std::size_t e : adj_[node]) {
        const std::size_t next = Other(e, node);
        if (seen[next]) continue;
        seen[next] = 1;
        via[next] = static_cast<std::ptrdiff_t>(e);
        queue.push_back(next);
      }
    }
    std::vector<std::size_t> path;
    std::size_t node = row_node;
    while (node != col_node) {
      if (via[node] < 0) Fail(ErrorCode::kInternal, "basis is not a tree");
      const auto e = static_cast<std::size_t>(via[node]);
      path.push_back(e);
      node = Other(e, node);
    }
    return path;
  }

  int Pivot() {
    double max_cost = 0.0;
    for (double c : p_.cost) max_cost = std::max(max_cost, std::abs(c));
    const double tol = 1e-12 * (1.0 + max_cost);
    const std::size_t limit = 100 * (m_ * n_ + m_ + n_) + 1000;

    std::vector<double> u, v;
    std::vector<char> basic(m_ * n_, 0);
    for (const auto& c : cells_) basic[c.row * n_ + c.col] = 1;

    for (std::size_t iter = 0; iter < limit; ++iter) {
      BuildAdjacency();
      ComputePotentials(u, v);
      double best = -tol;
      std::size_t enter_i = 0, enter_j = 0;
      bool found = false;
      for (std::size_t i = 0; i < m_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) {
          if (basic[i * n_ + j]) continue;
          const double reduced = p_.Cost(i, j) - u[i] - v[j];
          if (reduced < best) {
            best = reduced;
            enter_i = i;
            enter_j = j;
            found = true;
          }
        }
      }
      if (!found) return static_cast<int>(iter);

      // Cells alternate -, +, -, ... starting at the row end of the path.
      const auto path = TreePath(m_ + enter_j, enter_i);
      std::int64_t theta = std::numeric_limits<std::int64_t>::max();
      std::size_t leaving = 0;
      for (std::size_t k = 0; k < path.size(); k += 2) {
        if (cells_[path[k]].flow < theta) {
          theta = cells_[path[k]].flow;
          leaving = path[k];
        }
      }
      for (std::size_t k = 0; k < path.size(); ++k) {
        cells_[path[k]].flow += (k % 2 == 0) ? -theta : theta;
      }
      basic[cells_[leaving].row * n_ + cells_[leaving].col] = 0;
      cells_[leaving] = {enter_i, enter_j, theta};
      basic[enter_i * n_ + enter_j] = 1;
    }
    Fail(ErrorCode::kNumeric, "transportation simplex did not converge");
  }

  // Flows of the current basis under the given (unperturbed) masses, by
  // repeatedly peeling leaves off the spanning tree.
  std::vector<std::int64_t> BasisFlows(const std::vector<std::int64_t>& supply,
                                       const std::vector<std::int64_t>& demand) {
    BuildAdjacency();
    std::vector<std::int64_t> rest(m_ + n_);
    for (std::size_t i = 0; i < m_; ++i) rest[i] = supply[i];
    for (std::size_t j = 0; j < n_; ++j) rest[m_ + j] = demand[j];
    std::vector<std::size_t> degree(m_ + n_);
    for (std::size_t node = 0; node < m_ + n_; ++node) {
      degree[node] = adj_[node].size();
    }
    std::vector<char> used(cells_.size(), 0);
    std::vector<std::int64_t> flows(cells_.size(), 0);
    std::deque<std::size_t> leaves;
    for (std::size_t node = 0; node < m_ + n_; ++node) {
      if (degree[node] == 1) leaves.push_back(node);
    }
    std::size_t assigned = 0;
    while (!leaves.empty() && assigned < cells_.size()) {
      const std::size_t node = leaves.front();
      leaves.pop_front();
      if (degree[node] != 1) continue;
      std::size_t edge = cells_.size();
      for (std::size_t e : adj_[node]) {
        if (!used[e]) {
          edge = e;
          break;
        }
      }
      if (edge == cells_.size()) continue;
      used[edge] = 1;
      ++assigned;
      flows[edge] = rest[node];
      const std::size_t other = Other(edge, node);
      rest[other] -= rest[node];
      rest[node] = 0;
      --degree[node];
      if (--degree[other] == 1) leaves.push_back(other);
    }
    for (std::int64_t f : flows) {
      if (f < 0) Fail(ErrorCode::kInternal, "optimal basis is infeasible");
    }
    return flows;
  }

  const TransportProblem& p_;
  std::size_t m_;
  std::size_t n_;
  std::vector<BasicCell> cells_;
  std::vector<std::vector<std::size_t>> adj_;
};

double LogSumExp(const double* x, std::size_t n, std::size_t stride) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) hi = std::max(hi, x[k * stride]);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(x[k * stride] - hi);
  return hi + std::log(s);
}

}  // namespace

TransportPlan SolveExact(const TransportProblem& p) {
  p.Validate();
  TransportationSimplex simplex(p);
  return simplex.Solve();
}

TransportPlan SolveSinkhorn(const TransportProblem& p,
                            const SinkhornOptions& options) {
  p.Validate();
  if (!(options.eps > 0.0) || !std::isfinite(options.eps)) {
    Fail(ErrorCode::kInvalidArgument, "sinkhorn eps must be positive");
  }
  if (options.max_iters <= 0 || !(options.tol > 0.0)) {
    Fail(ErrorCode::kInvalidArgument,
         "sinkhorn max_iters and tol must be positive");
  }
  const std::size_t m = p.rows, n = p.cols;
  double max_cost = 0.0;
  for (double c : p.cost) max_cost = std::max(max_cost, std::abs(c));
  if (max_cost / options.eps > 1e300) {
    Fail(ErrorCode::kNumeric, "cost magnitude overflows at this eps");
  }

  std::vector<double> log_mu(m), log_nu(n);
  for (std::size_t i = 0; i < m; ++i) log_mu[i] = std::log(p.mu[i]);
  for (std::size_t j = 0; j < n; ++j) log_nu[j] = std::log(p.nu[j]);

  std::vector<double> f(m, 0.0), g(n, 0.0), scratch(m * n);
  int total_iters = 0;
  double err = std::numeric_limits<double>::infinity();

  auto row_error = [&](double eps) {
    double e = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        s += std::exp((f[i] + g[j] - p.Cost(i, j)) / eps);
      }
      e += std::abs(s - p.mu[i]);
    }
    return e;
  };

  auto run_stage = [&](double eps, double tol, int max_iters) {
    for (int it = 0; it < max_iters; ++it) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          scratch[i * n + j] = (g[j] - p.Cost(i, j)) / eps;
        }
        f[i] = eps * (log_mu[i] - LogSumExp(&scratch[i * n], n, 1));
      }
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          scratch[i * n + j] = (f[i] - p.Cost(i, j)) / eps;
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        g[j] = eps * (log_nu[j] - LogSumExp(&scratch[j], m, n));
      }
      ++total_iters;
      err = row_error(eps);
      if (err <= tol) return true;
    }
    return false;
  };

  if (options.eps_scaling) {
    double eps = std::max(max_cost, options.eps);
    while (eps > options.eps * 1.0000001) {
      run_stage(eps, std::max(options.tol, 1e-6), options.max_iters);
      eps = std::max(eps * 0.5, options.eps);
    }
  }
  const bool converged = run_stage(options.eps, options.tol, options.max_iters);

  TransportPlan plan;
  plan.rows = m;
  plan.cols = n;
  plan.plan.resize(m * n);
  long double objective = 0.0L, kl = 0.0L;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double log_pij = (f[i] + g[j] - p.Cost(i, j)) / options.eps;
      const double pij = std::exp(log_pij);
      plan.plan[i * n + j] = pij;
      objective += static_cast<long double>(pij) * p.Cost(i, j);
      if (pij > 0.0) kl += pij * (log_pij - log_mu[i] - log_nu[j]);
    }
  }
  plan.objective = static_cast<double>(objective);
  plan.regularized_objective =
      static_cast<double>(objective + options.eps * kl);
  plan.marginal_error = err;
  plan.iterations = total_iters;
  plan.converged = converged;
  return plan;
}

const char* SolverName(Solver solver) {
  return solver == Solver::kExact ? "exact" : "sinkhorn";
}

Solver ParseSolver(std::string_view name) {
  if (name == "exact") return Solver::kExact;
  if (name == "sinkhorn") return Solver::kSinkhorn;
  Fail(ErrorCode::kInvalidArgument,
       "unknown solver '" + std::string(name) + "' (exact|sinkhorn)");
}

double DEmd(std::span<const CodeToken> s1, std::span<const CodeToken> s2,
            const EmbeddingTable& table, const TimeWeightConfig& w,
            Solver solver, const SinkhornOptions& sinkhorn) {
  const auto problem = BuildProblem(ToTimedSeq(s1), ToTimedSeq(s2), table, w);
  const auto plan = solver == Solver::kExact ? SolveExact(problem)
                                             : SolveSinkhorn(problem, sinkhorn);
  return std::max(0.0, plan.objective);
}

}  // namespace ehraudit
