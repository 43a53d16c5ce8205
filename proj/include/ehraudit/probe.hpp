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

// Linear logistic probe trained on frozen embeddings, and the sweep over
// prefix lengths and training fractions used by the probing test.

#ifndef EHRAUDIT_PROBE_HPP_
#define EHRAUDIT_PROBE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ehraudit/corpus.hpp"
#include "ehraudit/model.hpp"

namespace ehraudit {

using FeatureMatrix = std::vector<std::vector<double>>;

// Per-feature affine map fitted on a training split. Constant features get
// scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer Fit(const FeatureMatrix& x);
  std::vector<double> Apply(std::span<const double> row) const;
};

// J(w, b) = mean logistic loss + l2 / (2n) * |w|^2. Gradients are written
// when the pointers are non-null. Rows of z are already standardized.
double LogisticObjective(const FeatureMatrix& z, std::span<const int> y,
                         std::span<const double> w, double b, double l2,
                         std::vector<double>* grad_w, double* grad_b);

struct ProbeOptions {
  double l2 = 100.0;
  double lr = 0.5;
  int epochs = 500;
  std::uint64_t seed = 0;
};

struct ProbeModel {
  Standardizer standardizer;
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 0.0;
  int iterations = 0;
  double final_loss = 0.0;
  // Objective after each accepted epoch; nonincreasing.
  std::vector<double> loss_history;
};

// Full-batch gradient descent; a step that raises the loss is undone and
// the learning rate halved. Throws kDegenerateInput unless n >= 2 and both
// classes are present.
ProbeModel TrainProbe(const FeatureMatrix& x, std::span<const int> y,
                      const ProbeOptions& options = {});

// sigmoid(w . standardize(x) + b), clamped to the open unit interval.
std::vector<double> PredictProba(const ProbeModel& m, const FeatureMatrix& x);

// A training split: a fraction of the train-tagged cohort, or the whole
// test-tagged cohort.
struct SweepFraction {
  bool test_only = false;
  double fraction = 0.0;

  std::string Label() const;
  // "test" or a decimal in (0, 1].
  static SweepFraction Parse(const std::string& text);
};

struct SweepConfig {
  std::vector<int> prefix_lens = {10, 20, 50};
  std::vector<SweepFraction> fractions = {
      {true, 0.0}, {false, 0.001}, {false, 0.10}, {false, 0.20}};
  int repeats = 5;
  // Share of the train-tagged cohort held out for evaluation.
  double eval_share = 0.5;
  int null_permutations = 200;
  // Shuffles labels across patients before splitting (null calibration).
  bool permute_labels = false;
  ProbeOptions probe;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct SweepCell {
  int prefix_len = 0;
  std::string fraction;
  bool available = false;
  std::string unavailable_reason;
  double auroc = 0.0;
  double auprc = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  // Training split of the first repeat.
  std::size_t n_pos = 0;
  std::size_t n_total = 0;
  std::size_t n_eval = 0;
  int repeats_used = 0;
  // 99th percentile of held-out AUROC under permuted evaluation labels.
  double null_auroc_99 = 0.0;
};

struct SweepResult {
  std::string attribute;
  std::size_t eval_patients = 0;
  std::size_t eval_positives = 0;
  std::vector<SweepCell> cells;
};

// Labels are "record contains a category code". Throws kCapabilityMissing
// if the model cannot embed and kDegenerateInput if the cohort lacks
// train-tagged patients of both classes.
SweepResult ProbeSweep(Model& model, std::span<const Trajectory> cohort,
                       const SensitiveCategory& category,
                       const SweepConfig& cfg);

}  // namespace ehraudit

#endif  // EHRAUDIT_PROBE_HPP_
