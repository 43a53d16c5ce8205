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

#include "ehraudit/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ehraudit/error.hpp"
#include "ehraudit/metrics.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {

namespace {

template <typename T>
void Shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.Below(i)]);
  }
}

// log(1 + exp(-m)) without overflow.
double SoftplusNeg(double m) {
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

double Sigmoid(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

}  // namespace

Standardizer Standardizer::Fit(const FeatureMatrix& x) {
  Standardizer s;
  if (x.empty()) return s;
  const std::size_t d = x[0].size();
  const double n = static_cast<double>(x.size());
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += row[k];
  }
  for (double& m : s.mean) m /= n;
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) {
      s.scale[k] += (row[k] - s.mean[k]) * (row[k] - s.mean[k]);
    }
  }
  for (double& v : s.scale) {
    v = std::sqrt(v / n);
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

std::vector<double> Standardizer::Apply(std::span<const double> row) const {
  if (row.size() != mean.size()) {
    Fail(ErrorCode::kInvalidArgument, "feature arity " + std::to_string(row.size()) +
                                          " does not match probe arity " +
                                          std::to_string(mean.size()));
  }
  std::vector<double> z(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) z[k] = (row[k] - mean[k]) / scale[k];
  return z;
}

double LogisticObjective(const FeatureMatrix& z, std::span<const int> y,
                         std::span<const double> w, double b, double l2,
                         std::vector<double>* grad_w, double* grad_b) {
  const double n = static_cast<double>(z.size());
  const std::size_t d = w.size();
  if (grad_w) grad_w->assign(d, 0.0);
  double gb = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double t = b;
    for (std::size_t k = 0; k < d; ++k) t += w[k] * z[i][k];
    const double sign = y[i] == 1 ? 1.0 : -1.0;
    loss += SoftplusNeg(sign * t);
    const double r = Sigmoid(t) - static_cast<double>(y[i]);
    if (grad_w) {
      for (std::size_t k = 0; k < d; ++k) (*grad_w)[k] += r * z[i][k];
    }
    gb += r;
  }
  double ww = 0.0;
  for (double v : w) ww += v * v;
  if (grad_w) {
    for (std::size_t k = 0; k < d; ++k) (*grad_w)[k] = (*grad_w)[k] / n + l2 * w[k] / n;
  }
  if (grad_b) *grad_b = gb / n;
  return loss / n + l2 / (2.0 * n) * ww;
}

ProbeModel TrainProbe(const FeatureMatrix& x, std::span<const int> y,
                      const ProbeOptions& options) {
  if (x.size() != y.size()) Fail(ErrorCode::kInvalidArgument, "probe X and y differ in length");
  if (x.size() < 2) Fail(ErrorCode::kDegenerateInput, "probe needs at least 2 samples");
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    Fail(ErrorCode::kDegenerateInput, "probe training labels have a single class");
  }
  const std::size_t d = x[0].size();
  for (const auto& row : x) {
    if (row.size() != d) Fail(ErrorCode::kInvalidArgument, "ragged feature matrix");
    for (double v : row) {
      if (!std::isfinite(v)) Fail(ErrorCode::kNumeric, "non-finite feature");
    }
  }
  if (!(options.l2 >= 0.0) || !(options.lr > 0.0) || options.epochs < 0) {
    Fail(ErrorCode::kInvalidArgument, "probe needs l2 >= 0, lr > 0, epochs >= 0");
  }
  ProbeModel m;
  m.l2 = options.l2;
  m.standardizer = Standardizer::Fit(x);
  FeatureMatrix z;
  z.reserve(x.size());
  for (const auto& row : x) z.push_back(m.standardizer.Apply(row));

  Rng rng(options.seed);
  m.weights.resize(d);
  for (double& w : m.weights) w = 0.01 * rng.Gaussian();
  std::vector<double> gw, trial_w(d);
  double gb = 0.0;
  double loss = LogisticObjective(z, y, m.weights, m.bias, m.l2, &gw, &gb);
  double lr = options.lr;
  for (int e = 0; e < options.epochs; ++e) {
    for (std::size_t k = 0; k < d; ++k) trial_w[k] = m.weights[k] - lr * gw[k];
    const double trial_b = m.bias - lr * gb;
    std::vector<double> tgw;
    double tgb = 0.0;
    const double trial = LogisticObjective(z, y, trial_w, trial_b, m.l2, &tgw, &tgb);
    if (trial > loss) {
      lr *= 0.5;
      if (lr < 1e-12) break;
      continue;
    }
    m.weights = trial_w;
    m.bias = trial_b;
    gw = std::move(tgw);
    gb = tgb;
    loss = trial;
    m.loss_history.push_back(loss);
    ++m.iterations;
  }
  m.final_loss = loss;
  return m;
}

std::vector<double> PredictProba(const ProbeModel& m, const FeatureMatrix& x) {
  std::vector<double> out;
  out.reserve(x.size());
  constexpr double kLo = 1e-15;
  for (const auto& row : x) {
    const auto z = m.standardizer.Apply(row);
    double t = m.bias;
    for (std::size_t k = 0; k < z.size(); ++k) t += m.weights[k] * z[k];
    out.push_back(std::clamp(Sigmoid(t), kLo, 1.0 - kLo));
  }
  return out;
}

std::string SweepFraction::Label() const {
  return test_only ? "test" : Format6(fraction);
}

SweepFraction SweepFraction::Parse(const std::string& text) {
  if (text == "test") return {true, 0.0};
  double f = 0.0;
  try {
    std::size_t used = 0;
    f = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    Fail(ErrorCode::kInvalidArgument, "bad training fraction '" + text + "'");
  }
  if (!(f > 0.0 && f <= 1.0)) {
    Fail(ErrorCode::kInvalidArgument, "training fraction must be in (0, 1]: " + text);
  }
  return {false, f};
}

SweepResult ProbeSweep(Model& model, std::span<const Trajectory> cohort,
                       const SensitiveCategory& category,
                       const SweepConfig& cfg) {
  RequireCapabilities(model, "t3", false, false, true);
  if (cfg.repeats < 1) Fail(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  if (!(cfg.eval_share > 0.0 && cfg.eval_share < 1.0)) {
    Fail(ErrorCode::kInvalidArgument, "eval_share must be in (0, 1)");
  }
  for (int p : cfg.prefix_lens) {
    if (p < 1) Fail(ErrorCode::kInvalidArgument, "prefix lengths must be >= 1");
  }

  std::vector<std::size_t> train_ids, test_ids;
  std::vector<int> labels(cohort.size(), 0);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (cohort[i].events.empty()) continue;
    labels[i] = ContainsCategory(cohort[i].events, category) ? 1 : 0;
    if (cohort[i].cohort == CohortTag::kTrain) train_ids.push_back(i);
    if (cohort[i].cohort == CohortTag::kTest) test_ids.push_back(i);
  }
  if (cfg.permute_labels) {
    Rng rng(DeriveSeed(cfg.seed, "t3/permute"));
    Shuffle(labels, rng);
  }

  Rng split_rng(DeriveSeed(cfg.seed, "t3/split"));
  std::vector<std::size_t> shuffled = train_ids;
  Shuffle(shuffled, split_rng);
  const auto n_eval = static_cast<std::size_t>(
      std::llround(cfg.eval_share * static_cast<double>(shuffled.size())));
  std::vector<std::size_t> eval_ids(shuffled.begin(),
                                    shuffled.begin() + static_cast<std::ptrdiff_t>(n_eval));
  std::vector<std::size_t> pool(shuffled.begin() + static_cast<std::ptrdiff_t>(n_eval),
                                shuffled.end());
  std::sort(eval_ids.begin(), eval_ids.end());
  std::sort(pool.begin(), pool.end());

  SweepResult result;
  result.attribute = category.name;
  result.eval_patients = eval_ids.size();
  for (auto i : eval_ids) result.eval_positives += static_cast<std::size_t>(labels[i]);
  if (result.eval_positives == 0 || result.eval_positives == eval_ids.size()) {
    Fail(ErrorCode::kDegenerateInput,
         "evaluation split for '" + category.name + "' lacks one of the classes");
  }

  // Embeddings for every usable patient at every prefix length.
  const std::size_t np = cfg.prefix_lens.size();
  std::vector<FeatureMatrix> emb(np, FeatureMatrix(cohort.size()));
  std::vector<std::size_t> usable = train_ids;
  usable.insert(usable.end(), test_ids.begin(), test_ids.end());
  ParallelFor(usable.size() * np, cfg.workers, [&](std::size_t task) {
    const std::size_t pi = task % np;
    const std::size_t i = usable[task / np];
    EmbedRequest req;
    req.tokens = cohort[i].events;
    req.prefix_len = std::min<int>(cfg.prefix_lens[pi], static_cast<int>(req.tokens.size()));
    emb[pi][i] = model.Embed(req);
  });

  const std::size_t nf = cfg.fractions.size();
  result.cells.resize(np * nf);
  ParallelFor(np * nf, cfg.workers, [&](std::size_t task) {
    const std::size_t pi = task / nf;
    const SweepFraction& frac = cfg.fractions[task % nf];
    SweepCell& cell = result.cells[task];
    cell.prefix_len = cfg.prefix_lens[pi];
    cell.fraction = frac.Label();
    cell.n_eval = eval_ids.size();
    const std::uint64_t cell_seed = DeriveSeed(
        cfg.seed, "t3/" + std::to_string(cell.prefix_len) + "/" + cell.fraction);

    FeatureMatrix x_eval;
    std::vector<int> y_eval;
    for (auto i : eval_ids) {
      x_eval.push_back(emb[pi][i]);
      y_eval.push_back(labels[i]);
    }
    std::vector<double> s_auroc, s_auprc, s_f1, s_acc, s_prec, s_rec;
    std::vector<double> first_scores;
    for (int r = 0; r < cfg.repeats; ++r) {
      std::vector<std::size_t> train;
      if (frac.test_only) {
        train = test_ids;
      } else {
        const auto want = static_cast<std::size_t>(std::llround(
            frac.fraction * static_cast<double>(train_ids.size())));
        // Draws depend on the repeat only, so larger fractions extend the
        // smaller ones.
        train = pool;
        Rng rng(DeriveSeed(cfg.seed, "t3/draw/" + std::to_string(r)));
        Shuffle(train, rng);
        train.resize(std::min(std::max<std::size_t>(want, 1), train.size()));
      }
      FeatureMatrix x;
      std::vector<int> y;
      for (auto i : train) {
        x.push_back(emb[pi][i]);
        y.push_back(labels[i]);
      }
      const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
      if (r == 0) {
        cell.n_pos = pos;
        cell.n_total = y.size();
      }
      if (pos == 0 || pos == y.size()) continue;
      ProbeOptions opt = cfg.probe;
      opt.seed = DeriveSeed(cfg.seed, "t3/init/" + std::to_string(r));
      const ProbeModel m = TrainProbe(x, y, opt);
      ScoredLabels sl{PredictProba(m, x_eval), y_eval};
      const ThresholdMetrics tm = ThresholdAt(sl, 0.5);
      s_auroc.push_back(Auroc(sl));
      s_auprc.push_back(Auprc(sl));
      s_f1.push_back(tm.f1);
      s_acc.push_back(tm.accuracy);
      s_prec.push_back(tm.precision);
      s_rec.push_back(tm.recall);
      if (first_scores.empty()) first_scores = sl.scores;
      ++cell.repeats_used;
      if (frac.test_only) break;  // the split is fixed; repeats add nothing
    }
    if (cell.repeats_used == 0) {
      cell.available = false;
      cell.unavailable_reason = "training split lacks one of the classes";
      return;
    }
    auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    cell.available = true;
    cell.auroc = mean(s_auroc);
    cell.auprc = mean(s_auprc);
    cell.f1 = mean(s_f1);
    cell.accuracy = mean(s_acc);
    cell.precision = mean(s_prec);
    cell.recall = mean(s_rec);
    std::vector<double> null;
    Rng prng(DeriveSeed(cell_seed, "null"));
    std::vector<int> perm = y_eval;
    for (int b = 0; b < cfg.null_permutations; ++b) {
      Shuffle(perm, prng);
      null.push_back(Auroc(ScoredLabels{first_scores, perm}));
    }
    cell.null_auroc_99 = null.empty() ? 0.5 : Quantile(null, 0.99);
  });
  return result;
}

}  // namespace ehraudit
