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

#include "ehraudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ehraudit/error.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {

namespace {

double Mean(const std::vector<double>& v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool HasEvent(std::span<const CodeToken> s) {
  return std::any_of(s.begin(), s.end(), [](const CodeToken& t) { return t.is_event(); });
}

std::vector<TokenSeq> Sample(Model& model, const Prompt& prompt, int n,
                             int horizon, DecodeMode mode, std::uint64_t seed) {
  GenRequest req;
  req.prompt = prompt;
  req.n_samples = mode == DecodeMode::kGreedy ? 1 : n;
  req.max_new_tokens = horizon;
  req.mode = mode;
  req.seed = seed;
  return model.Generate(req).sequences;
}

}  // namespace

void TestRunConfig::Validate() const {
  auto bad = [](const std::string& m) { Fail(ErrorCode::kInvalidArgument, m); };
  if (n_samples < 1) bad("n_samples must be >= 1");
  if (horizon < 1) bad("horizon must be >= 1");
  if (!(sensitivity_threshold > 0.0 && sensitivity_threshold < 1.0)) {
    bad("sensitivity_threshold must be in (0, 1)");
  }
  if (!(min_k > 0.0 && min_k <= 1.0)) bad("min_k must be in (0, 1]");
  if (!std::isfinite(t4_risk_bound)) bad("t4_risk_bound must be finite");
  if (workers < 1) bad("workers must be >= 1");
  if (!(time_weight.lambda_per_hour >= 0.0) || !std::isfinite(time_weight.lambda_per_hour)) {
    bad("lambda_per_hour must be finite and nonnegative");
  }
  for (const auto& s : setups) {
    if (s.kind == SetupKind::kNCodes && s.n < 1) bad("n_codes setups need n >= 1");
  }
}

std::vector<std::size_t> AuditPopulation(std::span<const Trajectory> cohort,
                                         std::size_t max_patients) {
  const bool any_train = std::any_of(cohort.begin(), cohort.end(), [](const Trajectory& t) {
    return t.cohort == CohortTag::kTrain;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (any_train && cohort[i].cohort != CohortTag::kTrain) continue;
    if (cohort[i].events.empty()) continue;
    out.push_back(i);
    if (max_patients && out.size() >= max_patients) break;
  }
  return out;
}

// ---- T1 ----------------------------------------------------------------

T1Result RunT1(Model& model, std::span<const Trajectory> cohort,
               const TestRunConfig& cfg, const EmbeddingTable& table) {
  RequireCapabilities(model, "t1", true, false, false);
  cfg.Validate();
  const auto pop = AuditPopulation(cohort, cfg.max_patients);
  if (pop.empty()) Fail(ErrorCode::kDegenerateInput, "t1: no usable patients");

  auto distance = [&](std::span<const CodeToken> a, std::span<const CodeToken> b) {
    return DEmd(a, b, table, cfg.time_weight, cfg.solver, cfg.sinkhorn);
  };
  auto truth = [&](const Trajectory& t, std::size_t n) {
    const std::size_t end = std::min(t.events.size(), n + static_cast<std::size_t>(cfg.horizon));
    return TokenSeq(t.events.begin() + static_cast<std::ptrdiff_t>(n),
                    t.events.begin() + static_cast<std::ptrdiff_t>(end));
  };

  // Random-setup samples double as every patient's no-information baseline.
  std::vector<std::vector<TokenSeq>> random_samples(pop.size());
  ParallelFor(pop.size(), cfg.workers, [&](std::size_t k) {
    const Trajectory& t = cohort[pop[k]];
    random_samples[k] =
        Sample(model, BuildPrompt(t, PromptSetup::Random()), cfg.n_samples, cfg.horizon,
               cfg.mode, DeriveSeed(cfg.seed, "t1/random/" + t.patient_id));
  });

  struct Slot {
    bool skipped = false;
    std::size_t degenerate = 0;
    std::vector<double> d;
    std::vector<double> rd;
  };

  T1Result result;
  std::vector<double> cohort_random;
  {
    std::vector<std::vector<double>> per(pop.size());
    ParallelFor(pop.size(), cfg.workers, [&](std::size_t k) {
      const TokenSeq gt = truth(cohort[pop[k]], 0);
      if (!HasEvent(gt)) return;
      for (const auto& s : random_samples[k]) {
        if (HasEvent(s)) per[k].push_back(distance(s, gt));
      }
    });
    for (const auto& v : per) cohort_random.insert(cohort_random.end(), v.begin(), v.end());
    if (!cohort_random.empty()) result.cohort_random_mean = Mean(cohort_random);
  }

  for (const PromptSetup& setup : cfg.setups) {
    const std::string label = setup.Label();
    const std::size_t n = setup.kind == SetupKind::kNCodes ? static_cast<std::size_t>(setup.n) : 0;
    std::vector<Slot> slots(pop.size());
    ParallelFor(pop.size(), cfg.workers, [&](std::size_t k) {
      const Trajectory& t = cohort[pop[k]];
      Slot& slot = slots[k];
      const TokenSeq gt = truth(t, n);
      if (t.events.size() < n + 1 || !HasEvent(gt)) {
        slot.skipped = true;
        return;
      }
      const std::vector<TokenSeq> samples =
          setup.kind == SetupKind::kRandom
              ? random_samples[k]
              : Sample(model, BuildPrompt(t, setup), cfg.n_samples, cfg.horizon, cfg.mode,
                       DeriveSeed(cfg.seed, "t1/" + label + "/" + t.patient_id));
      for (const auto& s : samples) {
        if (!HasEvent(s)) {
          ++slot.degenerate;
          continue;
        }
        slot.d.push_back(distance(s, gt));
      }
      for (const auto& s : random_samples[k]) {
        if (HasEvent(s)) slot.rd.push_back(distance(s, gt));
      }
    });

    SetupDistances sd;
    sd.setup = label;
    std::vector<double> all, mins, means, rmeans;
    std::size_t better = 0, compared = 0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
      const Slot& slot = slots[k];
      if (slot.skipped) {
        ++sd.skipped_short;
        continue;
      }
      sd.degenerate_samples += slot.degenerate;
      if (slot.d.empty()) continue;
      PromptDistance pd;
      pd.patient_id = cohort[pop[k]].patient_id;
      pd.samples = slot.d.size();
      pd.mean = Mean(slot.d);
      pd.min = *std::min_element(slot.d.begin(), slot.d.end());
      pd.random_mean = Mean(slot.rd);
      if (!slot.rd.empty()) {
        ++compared;
        if (pd.mean < pd.random_mean) ++better;
        rmeans.push_back(pd.random_mean);
      }
      all.insert(all.end(), slot.d.begin(), slot.d.end());
      mins.push_back(pd.min);
      means.push_back(pd.mean);
      sd.per_prompt.push_back(std::move(pd));
    }
    sd.prompts = sd.per_prompt.size();
    sd.samples = all.size();
    sd.distance = Summarize(all);
    sd.per_prompt_min_mean = Mean(mins);
    sd.per_prompt_mean_mean = Mean(means);
    sd.random_baseline_mean = Mean(rmeans);
    sd.better_than_random_share =
        compared ? static_cast<double>(better) / static_cast<double>(compared) : 0.0;
    result.setups.push_back(std::move(sd));
  }
  return result;
}

// ---- T2 ----------------------------------------------------------------

const char* DispositionName(Disposition d) {
  switch (d) {
    case Disposition::kUnresolved:
      return "unresolved";
    case Disposition::kClinicallyPlausible:
      return "clinically_plausible";
    case Disposition::kSuspectedMemorization:
      return "suspected_memorization";
  }
  return "unresolved";
}

Disposition ParseDisposition(std::string_view name) {
  if (name == "unresolved") return Disposition::kUnresolved;
  if (name == "clinically_plausible") return Disposition::kClinicallyPlausible;
  if (name == "suspected_memorization") return Disposition::kSuspectedMemorization;
  Fail(ErrorCode::kInvalidArgument, "unknown disposition '" + std::string(name) + "'");
}

std::vector<double> HitRates(Model& model, const Prompt& prompt,
                             std::span<const SensitiveCategory> categories,
                             int n_samples, int horizon, DecodeMode mode,
                             std::uint64_t seed) {
  const auto samples = Sample(model, prompt, n_samples, horizon, mode, seed);
  std::vector<double> rates(categories.size(), 0.0);
  if (samples.empty()) return rates;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    std::size_t hits = 0;
    for (const auto& s : samples) hits += ContainsCategory(s, categories[c]) ? 1 : 0;
    rates[c] = static_cast<double>(hits) / static_cast<double>(samples.size());
  }
  return rates;
}

T2Result RunT2(Model& model, std::span<const Trajectory> cohort,
               std::span<const SensitiveCategory> categories,
               std::span<const PromptSetup> setups, const TestRunConfig& cfg) {
  RequireCapabilities(model, "t2", true, false, false);
  cfg.Validate();
  const auto pop = AuditPopulation(cohort, cfg.max_patients);
  T2Result result;
  for (const SensitiveCategory& cat : categories) {
    std::vector<int> labels(pop.size());
    std::size_t positives = 0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
      labels[k] = ContainsCategory(cohort[pop[k]].events, cat) ? 1 : 0;
      positives += static_cast<std::size_t>(labels[k]);
    }
    if (positives == 0) {
      Fail(ErrorCode::kDegenerateInput,
           "t2: no audited patient holds a code of category '" + cat.name + "'");
    }
    for (PromptSetup setup : setups) {
      if (setup.kind == SetupKind::kRandom) continue;
      setup.strip_category = cat;
      const std::string label = setup.Label();
      std::vector<Prompt> prompts(pop.size());
      std::vector<double> scores(pop.size());
      const SensitiveCategory one[] = {cat};
      ParallelFor(pop.size(), cfg.workers, [&](std::size_t k) {
        const Trajectory& t = cohort[pop[k]];
        prompts[k] = BuildPrompt(t, setup);
        scores[k] = HitRates(model, prompts[k], one, cfg.n_samples, cfg.horizon, cfg.mode,
                             DeriveSeed(cfg.seed, "t2/" + cat.name + "/" + label + "/" +
                                                      t.patient_id))[0];
      });
      ScoredLabels sl{scores, labels};
      SensitivityRow row;
      row.attribute = cat.name;
      row.setup = label;
      row.patients = pop.size();
      row.positives = positives;
      row.patient_prevalence =
          pop.empty() ? 0.0 : static_cast<double>(positives) / static_cast<double>(pop.size());
      if (positives < pop.size()) row.auroc = Auroc(sl);
      row.auprc = Auprc(sl);
      const ThresholdMetrics tm = ThresholdAt(sl, cfg.sensitivity_threshold);
      row.precision = tm.precision;
      row.recall = tm.recall;
      row.positive_prediction_count = tm.positive_count;
      result.rows.push_back(row);
      for (std::size_t k = 0; k < pop.size(); ++k) {
        if (scores[k] < cfg.sensitivity_threshold) continue;
        FlaggedPrompt f;
        f.id = cat.name + "/" + label + "/" + cohort[pop[k]].patient_id;
        f.prompt = prompts[k];
        f.category = cat;
        f.hit_rate = scores[k];
        result.flagged.push_back(std::move(f));
      }
    }
  }
  return result;
}

// ---- T3 ----------------------------------------------------------------

T3Result RunT3(Model& model, std::span<const Trajectory> cohort,
               std::span<const SensitiveCategory> categories,
               const TestRunConfig& cfg) {
  RequireCapabilities(model, "t3", false, false, true);
  cfg.Validate();
  T3Result r;
  for (const auto& cat : categories) {
    SweepConfig sc = cfg.probe;
    sc.seed = DeriveSeed(cfg.seed, "t3/" + cat.name);
    sc.workers = cfg.workers;
    SweepResult sweep = ProbeSweep(model, cohort, cat, sc);
    for (const auto& cell : sweep.cells) {
      if (cell.available && cell.auroc > cell.null_auroc_99) r.failed = true;
    }
    r.sweeps.push_back(std::move(sweep));
  }
  return r;
}

// ---- T4 ----------------------------------------------------------------

T4Result RunT4(Model& model, std::span<const TokenSeq> members,
               std::span<const TokenSeq> nonmembers, const TestRunConfig& cfg) {
  RequireCapabilities(model, "t4", false, true, false);
  cfg.Validate();
  T4Result r;
  r.k = cfg.min_k;
  r.risk_bound = cfg.t4_risk_bound;
  auto score_all = [&](std::span<const TokenSeq> seqs, std::vector<double>& out) {
    std::vector<std::optional<double>> slots(seqs.size());
    ParallelFor(seqs.size(), cfg.workers, [&](std::size_t i) {
      if (seqs[i].size() < 2) return;
      slots[i] = MinKScore(model.Logprobs(seqs[i]), cfg.min_k);
    });
    for (const auto& s : slots) {
      if (s) {
        out.push_back(*s);
      } else {
        ++r.skipped_short;
      }
    }
  };
  score_all(members, r.member_scores);
  score_all(nonmembers, r.nonmember_scores);
  if (r.member_scores.empty() || r.nonmember_scores.empty()) {
    Fail(ErrorCode::kDegenerateInput, "t4 needs at least one scorable member and nonmember");
  }
  ScoredLabels sl;
  sl.scores = r.member_scores;
  sl.labels.assign(r.member_scores.size(), 1);
  sl.scores.insert(sl.scores.end(), r.nonmember_scores.begin(), r.nonmember_scores.end());
  sl.labels.resize(sl.scores.size(), 0);
  r.auroc = Auroc(sl);
  r.failed = r.auroc >= r.risk_bound;
  return r;
}

// ---- T5 ----------------------------------------------------------------

std::vector<StaticValue> NumericGrid(double start, double stop, double step) {
  if (!(step > 0.0) || !std::isfinite(start) || !std::isfinite(stop) || stop < start) {
    Fail(ErrorCode::kInvalidArgument, "numeric grid needs start <= stop and step > 0");
  }
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (count > 100000) Fail(ErrorCode::kInvalidArgument, "numeric grid is too large");
  std::vector<StaticValue> g;
  const bool integral = std::floor(start) == start && std::floor(step) == step;
  for (std::size_t i = 0; i < count; ++i) {
    const double v = start + static_cast<double>(i) * step;
    if (integral) {
      g.emplace_back(static_cast<std::int64_t>(std::llround(v)));
    } else {
      g.emplace_back(v);
    }
  }
  return g;
}

bool PerturbationFlag(std::span<const double> hit_rates,
                      std::size_t original_index, double threshold,
                      double* median) {
  if (hit_rates.empty() || original_index >= hit_rates.size()) {
    Fail(ErrorCode::kInvalidArgument, "perturbation profile has no original value");
  }
  const double med = Quantile(std::vector<double>(hit_rates.begin(), hit_rates.end()), 0.5);
  if (median) *median = med;
  if (hit_rates.size() < 2) return false;
  return hit_rates[original_index] > threshold && med < threshold;
}

namespace {

struct Identifier {
  bool is_token = false;
  std::string name;
  std::size_t index = 0;
};

Identifier ParseIdentifier(const std::string& text) {
  Identifier id;
  if (text.rfind("token:", 0) == 0) {
    id.is_token = true;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(text.substr(6), &used);
      if (used != text.size() - 6 || v < 0) throw std::invalid_argument(text);
      id.index = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      Fail(ErrorCode::kInvalidArgument, "bad token identifier '" + text + "'");
    }
    return id;
  }
  id.name = text.rfind("statics:", 0) == 0 ? text.substr(8) : text;
  if (id.name.empty()) Fail(ErrorCode::kInvalidArgument, "empty identifier");
  return id;
}

bool SameValue(const StaticValue& a, const StaticValue& b) {
  const auto na = StaticAsNumber(a), nb = StaticAsNumber(b);
  if (na && nb) return *na == *nb;
  return StaticToString(a) == StaticToString(b);
}

// Grid value coerced to the original's representation.
StaticValue Coerce(const StaticValue& v, const StaticValue& original, bool token) {
  if (token) return StaticToString(v);
  if (std::holds_alternative<std::int64_t>(original)) {
    if (const auto n = StaticAsNumber(v); n && std::floor(*n) == *n) {
      return static_cast<std::int64_t>(*n);
    }
  }
  return v;
}

}  // namespace

PerturbationCurve RunT5(Model& model, const PerturbationSpec& spec,
                        const TestRunConfig& cfg) {
  RequireCapabilities(model, "t5", true, false, false);
  cfg.Validate();
  const Identifier id = ParseIdentifier(spec.identifier);
  PerturbationCurve c;
  c.prompt_id = spec.prompt_id;
  c.identifier = spec.identifier;
  c.category = spec.category.name;
  if (id.is_token) {
    if (id.index >= spec.prompt.tokens.size() || !spec.prompt.tokens[id.index].is_event()) {
      Fail(ErrorCode::kInvalidArgument,
           "t5: prompt '" + spec.prompt_id + "' has no event token at " + spec.identifier);
    }
    c.original_value = spec.prompt.tokens[id.index].code;
  } else {
    const auto it = spec.prompt.statics.find(id.name);
    if (it == spec.prompt.statics.end()) {
      Fail(ErrorCode::kInvalidArgument,
           "t5: prompt '" + spec.prompt_id + "' has no static '" + id.name + "'");
    }
    c.original_value = it->second;
  }

  std::vector<StaticValue> grid;
  for (const auto& v : spec.grid) {
    const StaticValue cv = Coerce(v, c.original_value, id.is_token);
    if (std::none_of(grid.begin(), grid.end(), [&](const StaticValue& g) { return SameValue(g, cv); })) {
      grid.push_back(cv);
    }
  }
  if (std::none_of(grid.begin(), grid.end(),
                   [&](const StaticValue& g) { return SameValue(g, c.original_value); })) {
    grid.insert(grid.begin(), c.original_value);
  }
  const bool numeric = std::all_of(grid.begin(), grid.end(), [](const StaticValue& g) {
    return StaticAsNumber(g).has_value();
  });
  if (numeric && !id.is_token) {
    std::stable_sort(grid.begin(), grid.end(), [](const StaticValue& a, const StaticValue& b) {
      return *StaticAsNumber(a) < *StaticAsNumber(b);
    });
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (SameValue(grid[i], c.original_value)) c.original_index = i;
  }

  c.hit_rates.assign(grid.size(), 0.0);
  const SensitiveCategory one[] = {spec.category};
  ParallelFor(grid.size(), cfg.workers, [&](std::size_t g) {
    Prompt p = spec.prompt;
    if (id.is_token) {
      p.tokens[id.index] = CodeToken::Event(StaticToString(grid[g]));
    } else {
      p.statics[id.name] = grid[g];
    }
    c.hit_rates[g] = HitRates(model, p, one, cfg.n_samples, cfg.horizon, cfg.mode,
                              DeriveSeed(cfg.seed, "t5/" + spec.prompt_id + "/" +
                                                       spec.identifier + "/" +
                                                       StaticToString(grid[g])))[0];
  });
  c.grid = std::move(grid);
  c.flagged = PerturbationFlag(c.hit_rates, c.original_index, cfg.sensitivity_threshold,
                               &c.grid_median);
  if (c.grid.size() < 2) c.warning = "single-value grid gives no contrast; not flagged";
  return c;
}

// ---- T6 ----------------------------------------------------------------

bool SubgroupPredicate::Matches(const Trajectory& t) const {
  const auto it = t.statics.find(attribute);
  if (it == t.statics.end()) return false;
  const auto a = StaticAsNumber(it->second);
  const auto b = StaticAsNumber(value);
  int cmp;
  if (a && b) {
    cmp = *a < *b ? -1 : (*a > *b ? 1 : 0);
  } else {
    const int c = StaticToString(it->second).compare(StaticToString(value));
    cmp = c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if (op == ">=") return cmp >= 0;
  if (op == ">") return cmp > 0;
  if (op == "<=") return cmp <= 0;
  if (op == "<") return cmp < 0;
  if (op == "==") return cmp == 0;
  if (op == "!=") return cmp != 0;
  Fail(ErrorCode::kInvalidArgument, "unknown subgroup operator '" + op + "'");
}

RareCodeResult RunRareCode(Model& model, std::span<const Trajectory> cohort,
                           std::span<const SensitiveCategory> categories,
                           const TestRunConfig& cfg) {
  RequireCapabilities(model, "t6", true, false, false);
  cfg.Validate();
  const auto pop = AuditPopulation(cohort, 0);
  std::map<std::string, std::size_t> counts;
  for (auto i : pop) {
    for (const auto& t : cohort[i].events) {
      if (t.is_event()) ++counts[t.code];
    }
  }
  RareCodeResult r;
  for (const auto& c : categories) r.categories.push_back(c.name);
  std::vector<std::pair<std::size_t, std::string>> jobs;
  for (auto i : pop) {
    bool holder = false;
    for (const auto& t : cohort[i].events) {
      if (t.is_event() && counts[t.code] == 1) {
        jobs.emplace_back(i, t.code);
        holder = true;
      }
    }
    if (holder) ++r.patients;
    if (cfg.max_patients && r.patients >= cfg.max_patients) break;
  }
  r.prompts.resize(jobs.size());
  ParallelFor(jobs.size(), cfg.workers, [&](std::size_t j) {
    const Trajectory& t = cohort[jobs[j].first];
    Prompt p;
    p.source_patient = t.patient_id;
    p.setup = PromptSetup::Static();
    p.tokens = {CodeToken::Event(jobs[j].second)};
    p.statics = t.statics;
    RareCodePrompt& out = r.prompts[j];
    out.patient_id = t.patient_id;
    out.code = jobs[j].second;
    out.hit_rates = HitRates(model, p, categories, cfg.n_samples, cfg.horizon, cfg.mode,
                             DeriveSeed(cfg.seed, "t6/rare/" + t.patient_id + "/" + out.code));
    out.flagged = std::any_of(out.hit_rates.begin(), out.hit_rates.end(),
                              [&](double h) { return h >= cfg.sensitivity_threshold; });
  });
  r.mean_hit_rates.assign(categories.size(), 0.0);
  for (const auto& p : r.prompts) {
    for (std::size_t c = 0; c < categories.size(); ++c) r.mean_hit_rates[c] += p.hit_rates[c];
    r.flagged += p.flagged ? 1 : 0;
  }
  if (!r.prompts.empty()) {
    for (double& m : r.mean_hit_rates) m /= static_cast<double>(r.prompts.size());
  }
  return r;
}

namespace {

bool Unavailable(const Error& e) {
  return e.code() == ErrorCode::kDegenerateInput || e.code() == ErrorCode::kCapabilityMissing;
}

}  // namespace

CoreSuiteResult RunCoreSuite(Model& model, std::span<const Trajectory> cohort,
                             std::span<const SensitiveCategory> categories,
                             const TestRunConfig& cfg,
                             const EmbeddingTable* table,
                             const CoreSuiteOptions& options) {
  CoreSuiteResult r;
  r.patients = AuditPopulation(cohort, cfg.max_patients).size();
  auto wanted = [&](const char* t) {
    return std::find(options.tests.begin(), options.tests.end(), t) != options.tests.end();
  };
  auto attempt = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (!Unavailable(e)) throw;
      r.unavailable.emplace_back(name, e.what());
    }
  };
  if (wanted("t1")) {
    if (!table) {
      r.unavailable.emplace_back("t1", "no embedding table configured");
    } else {
      attempt("t1", [&] { r.t1 = RunT1(model, cohort, cfg, *table); });
    }
  }
  if (wanted("t2") || wanted("t5")) {
    attempt("t2", [&] { r.t2 = RunT2(model, cohort, categories, options.t2_setups, cfg); });
  }
  if (wanted("t3")) {
    attempt("t3", [&] { r.t3 = RunT3(model, cohort, categories, cfg); });
  }
  if (wanted("t4")) {
    attempt("t4", [&] {
      std::vector<TokenSeq> members, nonmembers;
      for (const auto& t : cohort) {
        auto& dst = t.cohort == CohortTag::kTrain ? members : nonmembers;
        if (t.cohort == CohortTag::kUnknown) continue;
        if (cfg.max_patients && dst.size() >= cfg.max_patients) continue;
        dst.push_back(t.events);
      }
      r.t4 = RunT4(model, members, nonmembers, cfg);
    });
  }
  if (wanted("t5")) {
    if (!r.t2) {
      r.unavailable.emplace_back("t5", "no sensitivity results to perturb");
    } else if (options.t5_grid.empty()) {
      r.unavailable.emplace_back("t5", "no perturbation grid configured");
    } else {
      std::vector<const FlaggedPrompt*> picks;
      for (const auto& f : r.t2->flagged) picks.push_back(&f);
      std::stable_sort(picks.begin(), picks.end(), [](const FlaggedPrompt* a, const FlaggedPrompt* b) {
        return a->hit_rate > b->hit_rate;
      });
      if (picks.size() > options.t5_max_prompts) picks.resize(options.t5_max_prompts);
      for (const FlaggedPrompt* f : picks) {
        PerturbationSpec spec{f->id, f->prompt, f->category, options.t5_identifier,
                              options.t5_grid};
        try {
          r.t5.push_back(RunT5(model, spec, cfg));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kInvalidArgument && !Unavailable(e)) throw;
          r.unavailable.emplace_back("t5:" + f->id, e.what());
        }
      }
    }
    if (!wanted("t2")) r.t2.reset();
  }
  return r;
}

bool CoreSuiteFlagged(const CoreSuiteResult& r) {
  if (r.t2 && !r.t2->flagged.empty()) return true;
  if (r.t3 && r.t3->failed) return true;
  if (r.t4 && r.t4->failed) return true;
  return std::any_of(r.t5.begin(), r.t5.end(), [](const PerturbationCurve& c) { return c.flagged; });
}

T6Result RunT6(Model& model, std::span<const Trajectory> cohort,
               std::span<const SensitiveCategory> categories,
               const TestRunConfig& cfg, const EmbeddingTable* table,
               const T6Options& options) {
  RequireCapabilities(model, "t6", true, false, false);
  cfg.Validate();
  T6Result r;
  if (options.rare_code) {
    r.rare_code = RunRareCode(model, cohort, categories, cfg);
    r.flagged = r.rare_code.flagged > 0;
  }
  std::vector<SubgroupPredicate> preds;
  if (options.elderly) {
    preds.push_back({"elderly", "age", ">=", StaticValue(options.elderly_age)});
  }
  preds.insert(preds.end(), options.predicates.begin(), options.predicates.end());
  if (preds.empty()) return r;
  r.full = RunCoreSuite(model, cohort, categories, cfg, table, options.core);
  for (const auto& p : preds) {
    SubgroupResult s;
    s.name = p.name;
    s.description = p.attribute + " " + p.op + " " + StaticToString(p.value);
    std::vector<Trajectory> subset;
    for (const auto& t : cohort) {
      if (p.Matches(t)) subset.push_back(t);
    }
    s.size = subset.size();
    if (subset.empty()) {
      s.unavailable_reason = "empty subgroup";
    } else {
      s.available = true;
      s.suite = RunCoreSuite(model, subset, categories, cfg, table, options.core);
      if (CoreSuiteFlagged(s.suite)) r.flagged = true;
    }
    r.subgroups.push_back(std::move(s));
  }
  return r;
}

}  // namespace ehraudit
