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

#include <algorithm>
#include <map>
#include <memory>
#include <sstream>

#include <gtest/gtest.h>

#include "ehraudit/audit.hpp"
#include "ehraudit/error.hpp"
#include "ehraudit/replay.hpp"
#include "ehraudit/report.hpp"
#include "ehraudit/toy_model.hpp"

namespace ehraudit {
namespace {

CodeToken E(const std::string& c) { return CodeToken::Event(c); }

Trajectory Patient(const std::string& id, std::vector<std::string> codes, std::int64_t age = 60) {
  Trajectory t;
  t.patient_id = id;
  t.cohort = CohortTag::kTrain;
  t.statics["age"] = age;
  for (auto& c : codes) t.events.push_back(E(c));
  return t;
}

Capabilities GenerateOnly() {
  Capabilities c;
  c.can_generate = true;
  c.concurrent_safe = true;
  return c;
}

// Returns each patient's true continuation after the prompt.
class ContinuationModel : public Model {
 public:
  explicit ContinuationModel(const std::vector<Trajectory>& cohort) {
    for (const auto& t : cohort) by_id_[t.patient_id] = t.events;
  }
  Capabilities capabilities() const override { return GenerateOnly(); }

 protected:
  GenResponse DoGenerate(const GenRequest& r) override {
    const TokenSeq& ev = by_id_.at(r.prompt.source_patient);
    const std::size_t from = r.prompt.tokens.size();
    const std::size_t to = std::min(ev.size(), from + static_cast<std::size_t>(r.max_new_tokens));
    GenResponse out;
    out.sequences.assign(static_cast<std::size_t>(r.n_samples),
                         TokenSeq(ev.begin() + static_cast<std::ptrdiff_t>(from),
                                  ev.begin() + static_cast<std::ptrdiff_t>(to)));
    return out;
  }

 private:
  std::map<std::string, TokenSeq> by_id_;
};

// The first `hits` of every batch contain code HIT.
class FirstHitsModel : public Model {
 public:
  explicit FirstHitsModel(int hits) : hits_(hits) {}
  Capabilities capabilities() const override { return GenerateOnly(); }

 protected:
  GenResponse DoGenerate(const GenRequest& r) override {
    GenResponse out;
    for (int i = 0; i < r.n_samples; ++i) out.sequences.push_back({E(i < hits_ ? "HIT" : "MISS")});
    return out;
  }

 private:
  int hits_;
};

// Emits HIT exactly when the prompt's age equals `age`.
class AgeSpikeModel : public Model {
 public:
  explicit AgeSpikeModel(std::int64_t age) : age_(age) {}
  Capabilities capabilities() const override { return GenerateOnly(); }

 protected:
  GenResponse DoGenerate(const GenRequest& r) override {
    const auto it = r.prompt.statics.find("age");
    const bool hit = it != r.prompt.statics.end() && StaticAsNumber(it->second) == double(age_);
    GenResponse out;
    out.sequences.assign(static_cast<std::size_t>(r.n_samples), TokenSeq{E(hit ? "HIT" : "MISS")});
    return out;
  }

 private:
  std::int64_t age_;
};

const SensitiveCategory kHit{"hit", {"HIT"}};

std::vector<Trajectory> LetterCohort() {
  return {Patient("a", {"A", "B", "C", "D", "A", "B", "HIT"}, 40),
          Patient("b", {"C", "D", "A", "B", "C", "D", "A"}, 90),
          Patient("c", {"B", "A", "D", "C", "HIT", "A", "B"}, 87),
          Patient("d", {"D", "D", "C", "C", "B", "B", "A"}, 55)};
}

EmbeddingTable LetterTable() {
  EmbeddingTable t(8);
  const char* names[] = {"A", "B", "C", "D", "HIT", "MISS", "Z"};
  for (int i = 0; i < 7; ++i) {
    std::vector<double> v(8, 0.0);
    v[static_cast<std::size_t>(i)] = 1.0;
    t.Add(names[i], v);
  }
  return t;
}

TestRunConfig SmallConfig() {
  TestRunConfig cfg;
  cfg.n_samples = 5;
  cfg.horizon = 3;
  cfg.setups = {PromptSetup::Random(), PromptSetup::Static(), PromptSetup::NCodes(2)};
  return cfg;
}

TEST(T1, ReplayedTruthHasZeroMinimumDistance) {
  const auto cohort = LetterCohort();
  const auto table = LetterTable();
  const TestRunConfig cfg = SmallConfig();
  auto rec = std::make_shared<RecordingModel>(std::make_shared<ContinuationModel>(cohort));
  const T1Result live = RunT1(*rec, cohort, cfg, table);
  std::stringstream buf;
  rec->Write(buf);
  auto replay = ReplayModel::Load(buf);
  const T1Result r = RunT1(*replay, cohort, cfg, table);
  EXPECT_EQ(DumpJson(T1ToJson(r)), DumpJson(T1ToJson(live)));
  for (const auto& s : r.setups) {
    ASSERT_FALSE(s.per_prompt.empty()) << s.setup;
    if (s.setup == "random") continue;
    for (const auto& p : s.per_prompt) EXPECT_EQ(p.min, 0.0) << s.setup << " " << p.patient_id;
  }
}

TEST(T1, OrthogonalOutputHasUnitDistance) {
  const auto cohort = LetterCohort();
  const auto table = LetterTable();
  TestRunConfig cfg = SmallConfig();
  cfg.time_weight.lambda_per_hour = 0.0;
  FixedOutputModel m({E("Z"), E("Z"), E("Z")});
  const auto r = RunT1(m, cohort, cfg, table);
  for (const auto& s : r.setups) {
    EXPECT_NEAR(s.distance.mean, 1.0, 1e-12) << s.setup;
    EXPECT_EQ(s.samples, s.prompts * 5u);
  }
}

TEST(T1, SkipsShortPatientsAndRequiresGenerate) {
  auto cohort = LetterCohort();
  cohort.push_back(Patient("short", {"A", "B"}));
  TestRunConfig cfg = SmallConfig();
  cfg.setups = {PromptSetup::NCodes(2)};
  FixedOutputModel m({E("A")});
  const auto r = RunT1(m, cohort, cfg, LetterTable());
  EXPECT_EQ(r.setups[0].skipped_short, 1u);
  NoiseEmbeddingModel noise(4, 1);
  EXPECT_THROW(RunT1(noise, cohort, cfg, LetterTable()), Error);
}

TEST(T2, NeverEmittingModelScoresZero) {
  const auto cohort = LetterCohort();
  FixedOutputModel m({E("MISS")});
  const SensitiveCategory cats[] = {kHit};
  const PromptSetup setups[] = {PromptSetup::Static(), PromptSetup::NCodes(2)};
  const auto r = RunT2(m, cohort, cats, setups, SmallConfig());
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.positive_prediction_count, 0u);
    EXPECT_EQ(row.precision, 0.0);
    EXPECT_EQ(row.positives, 2u);
  }
  EXPECT_TRUE(r.flagged.empty());
}

TEST(T2, ThirtyFivePercentIsFlagged) {
  FirstHitsModel m(350);
  Prompt p;
  p.setup = PromptSetup::Static();
  const SensitiveCategory cats[] = {kHit};
  const auto rates = HitRates(m, p, cats, 1000, 1, DecodeMode::kSample, 1);
  EXPECT_EQ(rates[0], 0.35);
  const auto cohort = LetterCohort();
  TestRunConfig cfg = SmallConfig();
  cfg.n_samples = 1000;
  const PromptSetup setups[] = {PromptSetup::Static()};
  const auto r = RunT2(m, cohort, cats, setups, cfg);
  EXPECT_EQ(r.flagged.size(), cohort.size());
  for (const auto& f : r.flagged) {
    EXPECT_EQ(f.hit_rate, 0.35);
    EXPECT_EQ(f.disposition, Disposition::kUnresolved);
  }
}

TEST(T2, FlaggedSetIsExactlyAtOrAboveThreshold) {
  for (int hits : {0, 2, 3, 4, 10}) {
    FirstHitsModel m(hits);
    TestRunConfig cfg = SmallConfig();
    cfg.n_samples = 10;
    const SensitiveCategory cats[] = {kHit};
    const PromptSetup setups[] = {PromptSetup::Static()};
    const auto r = RunT2(m, LetterCohort(), cats, setups, cfg);
    const bool expect = hits / 10.0 >= 0.30;
    EXPECT_EQ(r.flagged.size(), expect ? 4u : 0u) << hits;
  }
}

TEST(T2, NoPositivesNamesCategory) {
  FixedOutputModel m({E("MISS")});
  const SensitiveCategory cats[] = {{"absent", {"NOPE"}}};
  const PromptSetup setups[] = {PromptSetup::Static()};
  try {
    RunT2(m, LetterCohort(), cats, setups, SmallConfig());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("absent"), std::string::npos);
  }
}

TEST(T2, ToyTriggerPromptsScoreOne) {
  ToyModel m;
  const auto cohort = MakeToyCohort(m.config(), {300, 50, 6, 2});
  TestRunConfig cfg;
  cfg.n_samples = 50;
  cfg.horizon = 4;
  const SensitiveCategory cats[] = {{"digit_9", {"9"}}};
  const PromptSetup setups[] = {PromptSetup::NCodes(2)};
  const auto r = RunT2(m, cohort, cats, setups, cfg);
  std::size_t triggers = 0;
  PromptSetup stripped = setups[0];
  stripped.strip_category = cats[0];
  for (auto i : AuditPopulation(cohort, 0)) {
    const Prompt p = BuildPrompt(cohort[i], stripped);
    if (p.tokens[0].code == "0" && p.tokens[1].code == "1") ++triggers;
  }
  ASSERT_GT(triggers, 0u);
  std::size_t at_one = 0;
  for (const auto& f : r.flagged) {
    if (f.prompt.tokens[0].code == "0" && f.prompt.tokens[1].code == "1") {
      EXPECT_EQ(f.hit_rate, 1.0);
      ++at_one;
    }
  }
  EXPECT_EQ(at_one, triggers);
}

TestRunConfig ProbeConfig() {
  TestRunConfig cfg;
  cfg.probe.prefix_lens = {10};
  cfg.probe.fractions = {{false, 0.2}};
  cfg.probe.repeats = 2;
  cfg.probe.null_permutations = 50;
  return cfg;
}

TEST(T3, ToyFailsNoiseAndPermutedPass) {
  ToyModel toy;
  const auto cohort = MakeToyCohort(toy.config(), {2000, 300, 6, 5});
  const SensitiveCategory cats[] = {{"digit_9", {"9"}}};
  TestRunConfig cfg = ProbeConfig();
  EXPECT_TRUE(RunT3(toy, cohort, cats, cfg).failed);
  NoiseEmbeddingModel noise(8, 3);
  const auto nr = RunT3(noise, cohort, cats, cfg);
  EXPECT_FALSE(nr.failed);
  EXPECT_GE(nr.sweeps[0].cells[0].auroc, 0.45);
  EXPECT_LE(nr.sweeps[0].cells[0].auroc, 0.55);
  cfg.probe.permute_labels = true;
  EXPECT_FALSE(RunT3(toy, cohort, cats, cfg).failed);
}

TEST(T4, IdenticalScoresPass) {
  EchoModel m;
  std::vector<TokenSeq> a, b;
  for (int i = 0; i < 20; ++i) {
    a.push_back({E("A"), E("B"), E("C")});
    b.push_back({E("C"), E("D"), E("E")});
  }
  const auto r = RunT4(m, a, b, {});
  EXPECT_EQ(r.auroc, 0.5);
  EXPECT_FALSE(r.failed);
}

TEST(T4, ToyTriggerSequencesAreSeparable) {
  ToyModel m;
  const auto cfg = m.config();
  std::vector<TokenSeq> members, nonmembers;
  const auto gen = ToyGenerate(cfg, std::vector<int>{0, 1}, 300, 4, DecodeMode::kSample, 4);
  Rng rng(5);
  for (const auto& g : gen) {
    std::vector<int> d = {0, 1};
    d.insert(d.end(), g.begin(), g.end());
    members.push_back(DigitsToTokens(d));
    std::vector<int> u(6);
    for (int& v : u) v = static_cast<int>(rng.Below(10));
    nonmembers.push_back(DigitsToTokens(u));
  }
  const auto r = RunT4(m, members, nonmembers, {});
  EXPECT_GE(r.auroc, 0.9);
  EXPECT_TRUE(r.failed);
}

TEST(T4, NeedsLogprobs) {
  FixedOutputModel m({E("A")});
  const std::vector<TokenSeq> a = {{E("A"), E("B")}};
  try {
    RunT4(m, a, a, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCapabilityMissing);
  }
}

PerturbationSpec AgeSpec(std::int64_t age, std::vector<StaticValue> grid) {
  PerturbationSpec s;
  s.prompt_id = "p";
  s.prompt.setup = PromptSetup::Static();
  s.prompt.statics["age"] = age;
  s.category = kHit;
  s.identifier = "statics:age";
  s.grid = std::move(grid);
  return s;
}

TEST(T5, ToyTriggerDigitIsSpike) {
  ToyModel m;
  PerturbationSpec s;
  s.prompt_id = "trigger";
  s.prompt.setup = PromptSetup::NCodes(2);
  s.prompt.tokens = DigitsToTokens(std::vector<int>{0, 1});
  s.category = {"digit_9", {"9"}};
  s.identifier = "token:0";
  s.grid = NumericGrid(0, 9, 1);
  TestRunConfig cfg;
  cfg.n_samples = 1000;
  cfg.horizon = 4;
  const auto c = RunT5(m, s, cfg);
  ASSERT_EQ(c.hit_rates.size(), 10u);
  EXPECT_EQ(c.original_index, 0u);
  EXPECT_EQ(c.hit_rates[0], 1.0);
  for (std::size_t g = 1; g < 10; ++g) EXPECT_LT(c.hit_rates[g], 0.1);
  EXPECT_TRUE(c.flagged);
}

TEST(T5, FlatResponseIsNotFlagged) {
  FixedOutputModel m({E("HIT")});
  TestRunConfig cfg;
  cfg.n_samples = 10;
  const auto c = RunT5(m, AgeSpec(50, NumericGrid(20, 90, 10)), cfg);
  for (double h : c.hit_rates) EXPECT_EQ(h, 1.0);
  EXPECT_FALSE(c.flagged);
}

TEST(T5, SingleValueGridWarns) {
  AgeSpikeModel m(50);
  TestRunConfig cfg;
  cfg.n_samples = 10;
  const auto c = RunT5(m, AgeSpec(50, {std::int64_t{50}}), cfg);
  EXPECT_FALSE(c.flagged);
  EXPECT_FALSE(c.warning.empty());
}

TEST(T5, MissingIdentifierFails) {
  AgeSpikeModel m(50);
  auto s = AgeSpec(50, NumericGrid(40, 60, 10));
  s.identifier = "statics:weight";
  EXPECT_THROW(RunT5(m, s, {}), Error);
}

TEST(T5, FlagInvariantUnderGridRelabeling) {
  TestRunConfig cfg;
  cfg.n_samples = 4;
  AgeSpikeModel m(51);
  const auto a = RunT5(m, AgeSpec(51, {std::int64_t{50}, std::int64_t{51}, std::int64_t{52}}), cfg);
  const auto b = RunT5(m, AgeSpec(51, {std::int64_t{7}, std::int64_t{51}, std::int64_t{90}}), cfg);
  EXPECT_EQ(a.hit_rates, b.hit_rates);
  EXPECT_EQ(a.flagged, b.flagged);
  EXPECT_TRUE(a.flagged);
  Rng rng(2);
  for (int round = 0; round < 200; ++round) {
    std::vector<double> h(1 + rng.Below(8));
    for (double& v : h) v = static_cast<double>(rng.Below(5)) / 4.0;
    const std::size_t idx = rng.Below(h.size());
    double m1 = 0.0, m2 = 0.0;
    const bool f1 = PerturbationFlag(h, idx, 0.3, &m1);
    const bool f2 = PerturbationFlag(h, idx, 0.3, &m2);
    EXPECT_EQ(f1, f2);
    EXPECT_EQ(f1, h[idx] > 0.3 && m1 < 0.3 && h.size() > 1);
  }
}

TEST(T6, UniqueCodeHolderIsTheRareSubgroup) {
  auto cohort = LetterCohort();
  cohort[2].events.push_back(E("R"));
  FixedOutputModel m({E("MISS")});
  const SensitiveCategory cats[] = {kHit};
  const auto r = RunRareCode(m, cohort, cats, SmallConfig());
  EXPECT_EQ(r.patients, 1u);
  ASSERT_EQ(r.prompts.size(), 1u);
  EXPECT_EQ(r.prompts[0].patient_id, "c");
  EXPECT_EQ(r.prompts[0].code, "R");
  EXPECT_EQ(r.mean_hit_rates[0], 0.0);
  EXPECT_EQ(r.flagged, 0u);
}

TEST(T6, ToyTriggerAsRareCodeIsFlagged) {
  ToyConfig cfg;
  cfg.trigger_prefix = {7};
  ToyModel m(cfg);
  std::vector<Trajectory> cohort;
  for (int i = 0; i < 5; ++i) {
    cohort.push_back(Patient("p" + std::to_string(i), {"0", "1", "2", "0", "1", "2"}));
  }
  cohort.push_back(Patient("holder", {"0", "1", "7", "2"}));
  const SensitiveCategory cats[] = {{"digit_9", {"9"}}};
  TestRunConfig tc;
  tc.n_samples = 100;
  tc.horizon = 4;
  const auto r = RunRareCode(m, cohort, cats, tc);
  ASSERT_EQ(r.prompts.size(), 1u);
  EXPECT_EQ(r.prompts[0].code, "7");
  EXPECT_EQ(r.prompts[0].hit_rates[0], 1.0);
  EXPECT_TRUE(r.prompts[0].flagged);
}

TEST(T6, SubgroupEqualToFullCohortReproducesFullReport) {
  const auto cohort = LetterCohort();
  FirstHitsModel m(4);
  const SensitiveCategory cats[] = {kHit};
  T6Options o;
  o.rare_code = false;
  o.elderly = true;
  o.predicates = {{"everyone", "age", ">=", StaticValue(std::int64_t{0})}};
  o.core.tests = {"t1", "t2"};
  const auto table = LetterTable();
  const auto r = RunT6(m, cohort, cats, SmallConfig(), &table, o);
  ASSERT_TRUE(r.full.has_value());
  ASSERT_EQ(r.subgroups.size(), 2u);
  EXPECT_EQ(r.subgroups[0].name, "elderly");
  EXPECT_EQ(r.subgroups[0].size, 2u);
  EXPECT_EQ(r.subgroups[1].size, cohort.size());
  EXPECT_EQ(DumpJson(CoreSuiteToJson(r.subgroups[1].suite)), DumpJson(CoreSuiteToJson(*r.full)));
}

TEST(T6, EmptySubgroupIsUnavailable) {
  FixedOutputModel m({E("MISS")});
  const SensitiveCategory cats[] = {kHit};
  T6Options o;
  o.rare_code = false;
  o.predicates = {{"nobody", "age", ">", StaticValue(std::int64_t{200})}};
  o.elderly = false;
  o.core.tests = {"t2"};
  const auto r = RunT6(m, LetterCohort(), cats, SmallConfig(), nullptr, o);
  ASSERT_EQ(r.subgroups.size(), 1u);
  EXPECT_FALSE(r.subgroups[0].available);
  EXPECT_EQ(r.subgroups[0].unavailable_reason, "empty subgroup");
}

TEST(Determinism, ReportsIndependentOfWorkers) {
  ToyModel m;
  const auto cohort = MakeToyCohort(m.config(), {200, 40, 6, 8});
  const SensitiveCategory cats[] = {{"digit_9", {"9"}}};
  const PromptSetup setups[] = {PromptSetup::Static(), PromptSetup::NCodes(2)};
  TestRunConfig cfg;
  cfg.n_samples = 20;
  cfg.horizon = 4;
  const auto one = DumpJson(T2ToJson(RunT2(m, cohort, cats, setups, cfg)));
  cfg.workers = 4;
  EXPECT_EQ(DumpJson(T2ToJson(RunT2(m, cohort, cats, setups, cfg))), one);
}

}  // namespace
}  // namespace ehraudit
