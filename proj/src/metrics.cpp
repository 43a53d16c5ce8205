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

#include "ehraudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "ehraudit/error.hpp"

namespace ehraudit {

std::size_t ScoredLabels::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoredLabels::negatives() const { return labels.size() - positives(); }

void ScoredLabels::Validate() const {
  if (scores.size() != labels.size()) {
    Fail(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) Fail(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
  }
  for (double s : scores) {
    if (std::isnan(s)) Fail(ErrorCode::kNumeric, "score is NaN");
  }
}

namespace {

// Indices sorted by descending score.
std::vector<std::size_t> DescendingOrder(const std::vector<double>& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return idx;
}

}  // namespace

double Auroc(const ScoredLabels& d) {
  d.Validate();
  const double np = static_cast<double>(d.positives());
  const double nn = static_cast<double>(d.negatives());
  if (np == 0 || nn == 0) {
    Fail(ErrorCode::kDegenerateInput, "AUROC needs both classes");
  }
  const std::vector<double> r = Ranks(d.scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (d.labels[i] == 1) rank_sum += r[i];
  }
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double Auprc(const ScoredLabels& d) {
  d.Validate();
  const std::size_t np = d.positives();
  if (np == 0) Fail(ErrorCode::kDegenerateInput, "AUPRC needs a positive");
  const auto idx = DescendingOrder(d.scores);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && d.scores[idx[j]] == d.scores[idx[i]]) {
      tp += static_cast<std::size_t>(d.labels[idx[j]]);
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(np);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ThresholdMetrics ThresholdAt(const ScoredLabels& d, double thr) {
  d.Validate();
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < d.scores.size(); ++i) {
    const bool pred = d.scores[i] >= thr;
    const bool pos = d.labels[i] == 1;
    tp += pred && pos;
    fp += pred && !pos;
    fn += !pred && pos;
    tn += !pred && !pos;
  }
  ThresholdMetrics m;
  m.positive_count = tp + fp;
  m.precision = m.positive_count ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  const std::size_t n = d.scores.size();
  m.accuracy = n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
  return m;
}

double MinKScore(std::span<const double> logprobs, double k) {
  if (logprobs.empty()) Fail(ErrorCode::kInvalidArgument, "min-k of an empty sequence");
  if (!(k > 0.0 && k <= 1.0)) Fail(ErrorCode::kInvalidArgument, "min-k fraction must be in (0, 1]");
  const double n = static_cast<double>(logprobs.size());
  // The epsilon keeps k * n that is integral up to rounding from rounding up.
  std::size_t m = static_cast<std::size_t>(std::ceil(k * n - 1e-9));
  m = std::clamp<std::size_t>(m, 1, logprobs.size());
  std::vector<double> v(logprobs.begin(), logprobs.end());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += v[i];
  return s / static_cast<double>(m);
}

std::vector<double> Ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && x[idx[j]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = avg;
    i = j;
  }
  return r;
}

double Pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    Fail(ErrorCode::kDegenerateInput, "correlation needs two aligned points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    Fail(ErrorCode::kDegenerateInput, "correlation of a constant vector");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double Spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = Ranks(x);
  const auto ry = Ranks(y);
  return Pearson(rx, ry);
}

FrequencyCorrelation CodeFrequencyCorrelation(
    const std::map<std::string, double>& generated,
    const std::map<std::string, double>& reference) {
  if (generated.empty() || reference.empty()) {
    Fail(ErrorCode::kDegenerateInput, "frequency correlation of an empty multiset");
  }
  std::map<std::string, std::pair<double, double>> joint;
  for (const auto& [k, v] : generated) joint[k].first = v;
  for (const auto& [k, v] : reference) joint[k].second = v;
  if (joint.size() < 2) {
    Fail(ErrorCode::kDegenerateInput, "frequency correlation needs 2 distinct codes");
  }
  std::vector<double> g, r;
  for (const auto& [k, v] : joint) {
    g.push_back(std::log(v.first + 1.0));
    r.push_back(std::log(v.second + 1.0));
  }
  FrequencyCorrelation out;
  out.vocabulary = joint.size();
  out.pearson_log = Pearson(g, r);
  out.spearman = Spearman(g, r);
  return out;
}

double ChiSquareSurvival(double statistic, double dof) {
  if (!(dof > 0.0)) Fail(ErrorCode::kInvalidArgument, "chi-square dof must be positive");
  if (statistic <= 0.0) return 1.0;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

ChiSquareResult ChiSquareGof(std::span<const double> observed,
                             std::span<const double> probs) {
  if (observed.size() != probs.size() || observed.size() < 2) {
    Fail(ErrorCode::kInvalidArgument, "chi-square needs >= 2 aligned cells");
  }
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  ChiSquareResult r;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = n * probs[i];
    if (!(e > 0.0)) Fail(ErrorCode::kInvalidArgument, "chi-square expected count must be positive");
    r.statistic += (observed[i] - e) * (observed[i] - e) / e;
  }
  r.dof = static_cast<double>(observed.size() - 1);
  r.p_value = ChiSquareSurvival(r.statistic, r.dof);
  return r;
}

Summary Summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  s.median = Quantile(std::vector<double>(values.begin(), values.end()), 0.5);
  return s;
}

double Quantile(std::vector<double> values, double q) {
  if (values.empty()) Fail(ErrorCode::kInvalidArgument, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace ehraudit
