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

// Ranking, threshold and membership-score metrics shared by the audit tests.

#ifndef EHRAUDIT_METRICS_HPP_
#define EHRAUDIT_METRICS_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

namespace ehraudit {

struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1

  std::size_t positives() const;
  std::size_t negatives() const;
  // Throws kInvalidArgument on length mismatch, non-0/1 labels or NaN.
  void Validate() const;
};

// Mann-Whitney form, ties count one half. Throws kDegenerateInput unless
// both classes are present.
double Auroc(const ScoredLabels& d);

// Step-wise average precision over distinct score thresholds. Throws
// kDegenerateInput without positives.
double Auprc(const ScoredLabels& d);

struct ThresholdMetrics {
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when there are no positives
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t positive_count = 0;
};

// Predicts positive iff score >= thr.
ThresholdMetrics ThresholdAt(const ScoredLabels& d, double thr);

// Mean of the ceil(k * n) smallest values. Throws on empty input or k
// outside (0, 1].
double MinKScore(std::span<const double> logprobs, double k);

struct FrequencyCorrelation {
  double pearson_log = 0.0;
  double spearman = 0.0;
  std::size_t vocabulary = 0;
};

// Correlation of add-one smoothed log counts over the union vocabulary.
// Throws kDegenerateInput on an empty side or fewer than 2 distinct codes.
FrequencyCorrelation CodeFrequencyCorrelation(
    const std::map<std::string, double>& generated,
    const std::map<std::string, double>& reference);

double Pearson(std::span<const double> x, std::span<const double> y);
// Average ranks for ties.
std::vector<double> Ranks(std::span<const double> x);
double Spearman(std::span<const double> x, std::span<const double> y);

// Upper-tail probability of a chi-square statistic.
double ChiSquareSurvival(double statistic, double dof);

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 0.0;
};

// Goodness of fit of observed counts against expected probabilities.
ChiSquareResult ChiSquareGof(std::span<const double> observed,
                             std::span<const double> probs);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for count < 2
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

Summary Summarize(std::span<const double> values);

// Linear-interpolated quantile, q in [0, 1].
double Quantile(std::vector<double> values, double q);

}  // namespace ehraudit

#endif  // EHRAUDIT_METRICS_HPP_
