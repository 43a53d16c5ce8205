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

// Patient trajectories, sensitive code categories and prompt construction.

#ifndef EHRAUDIT_CORPUS_HPP_
#define EHRAUDIT_CORPUS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace ehraudit {

enum class TokenKind { kEvent, kTimeGap };

// One element of a coded record: either an event code or a time gap of
// whole hours. Time gaps travel over the wire as "+<hours>h".
struct CodeToken {
  TokenKind kind = TokenKind::kEvent;
  std::string code;            // event tokens only
  std::int64_t gap_hours = 0;  // time-gap tokens only, >= 1

  static CodeToken Event(std::string code);
  static CodeToken Gap(std::int64_t hours);

  bool is_event() const { return kind == TokenKind::kEvent; }
  bool is_gap() const { return kind == TokenKind::kTimeGap; }

  std::string ToWire() const;
  // Throws kParse on an empty string or a malformed gap literal.
  static CodeToken FromWire(std::string_view text);

  friend bool operator==(const CodeToken&, const CodeToken&) = default;
};

using TokenSeq = std::vector<CodeToken>;

std::vector<std::string> ToWire(std::span<const CodeToken> tokens);
TokenSeq FromWire(std::span<const std::string> tokens);

using StaticValue = std::variant<std::int64_t, double, std::string>;
using Statics = std::map<std::string, StaticValue>;

nlohmann::json StaticValueToJson(const StaticValue& value);
StaticValue StaticValueFromJson(const nlohmann::json& value);
nlohmann::json StaticsToJson(const Statics& statics);
// Numeric view of a static value, nullopt for strings.
std::optional<double> StaticAsNumber(const StaticValue& value);
std::string StaticToString(const StaticValue& value);

enum class CohortTag { kTrain, kTest, kUnknown };

const char* CohortTagName(CohortTag tag);

struct Trajectory {
  std::string patient_id;
  Statics statics;
  TokenSeq events;
  CohortTag cohort = CohortTag::kUnknown;
};

// A code belongs to the category iff its id starts with one of the prefixes.
struct SensitiveCategory {
  std::string name;
  std::vector<std::string> code_prefixes;

  bool Matches(std::string_view code) const;
};

SensitiveCategory CategoryFromJson(const nlohmann::json& j);
nlohmann::json CategoryToJson(const SensitiveCategory& c);
// Accepts a single {"name","prefixes"} object or an array of them.
std::vector<SensitiveCategory> LoadCategories(const std::string& path);
// ICD-10 prefixes for infectious disease, substance abuse and mental health.
std::vector<SensitiveCategory> BuiltinCategories();

bool ContainsCategory(std::span<const CodeToken> seq,
                      const SensitiveCategory& category);

// Deletes category events; time gaps made adjacent by a deletion are merged
// by summation so total elapsed time is preserved.
TokenSeq StripCategory(std::span<const CodeToken> seq,
                       const SensitiveCategory& category);

enum class SetupKind { kRandom, kStatic, kNCodes };

struct PromptSetup {
  SetupKind kind = SetupKind::kRandom;
  int n = 0;  // n_codes only
  std::optional<SensitiveCategory> strip_category;

  static PromptSetup Random() { return {SetupKind::kRandom, 0, {}}; }
  static PromptSetup Static() { return {SetupKind::kStatic, 0, {}}; }
  static PromptSetup NCodes(int n) { return {SetupKind::kNCodes, n, {}}; }

  // "random", "static", "n_codes:10".
  std::string Label() const;
  static PromptSetup Parse(std::string_view label);
};

struct Prompt {
  std::string source_patient;
  PromptSetup setup;
  TokenSeq tokens;
  Statics statics;

  // Statics actually shown to a model: none for the random setup.
  Statics ModelStatics() const;
};

// random -> no tokens; static -> no tokens, statics populated; n_codes(n) ->
// first n tokens (events and gaps both count) after optional stripping.
Prompt BuildPrompt(const Trajectory& t, const PromptSetup& setup);

// Parses UTF-8 JSONL. Throws kParse naming the 1-based line on the first
// malformed or invariant-violating record, or on a duplicate patient_id.
std::vector<Trajectory> ParseCohort(std::istream& in);
std::vector<Trajectory> LoadCohort(const std::string& path);

struct CohortIssue {
  std::size_t line = 0;
  std::string message;
  bool warning = false;
};

struct CohortValidation {
  std::size_t records = 0;
  std::size_t train = 0;
  std::size_t test = 0;
  std::vector<CohortIssue> issues;

  bool ok() const;
};

// Like ParseCohort but collects every problem instead of stopping.
CohortValidation ValidateCohort(std::istream& in);

nlohmann::json TrajectoryToJson(const Trajectory& t);
void WriteCohort(std::ostream& out, std::span<const Trajectory> cohort);

}  // namespace ehraudit

#endif  // EHRAUDIT_CORPUS_HPP_
