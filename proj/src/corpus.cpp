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

#include "ehraudit/corpus.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "ehraudit/error.hpp"

namespace ehraudit {

using nlohmann::json;

CodeToken CodeToken::Event(std::string code) {
  CodeToken t;
  t.kind = TokenKind::kEvent;
  t.code = std::move(code);
  return t;
}

CodeToken CodeToken::Gap(std::int64_t hours) {
  CodeToken t;
  t.kind = TokenKind::kTimeGap;
  t.gap_hours = hours;
  return t;
}

std::string CodeToken::ToWire() const {
  if (is_event()) return code;
  return "+" + std::to_string(gap_hours) + "h";
}

namespace {

bool LooksLikeGap(std::string_view text) {
  return text.size() >= 3 && text.front() == '+' && text.back() == 'h';
}

}  // namespace

CodeToken CodeToken::FromWire(std::string_view text) {
  if (text.empty()) Fail(ErrorCode::kParse, "empty token");
  if (!LooksLikeGap(text)) return Event(std::string(text));
  const std::string_view digits = text.substr(1, text.size() - 2);
  std::int64_t hours = 0;
  const auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), hours);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || hours < 1) {
    Fail(ErrorCode::kParse,
         "malformed time-gap token '" + std::string(text) + "'");
  }
  return Gap(hours);
}

std::vector<std::string> ToWire(std::span<const CodeToken> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.ToWire());
  return out;
}

TokenSeq FromWire(std::span<const std::string> tokens) {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& s : tokens) out.push_back(CodeToken::FromWire(s));
  return out;
}

json StaticValueToJson(const StaticValue& value) {
  return std::visit([](const auto& v) { return json(v); }, value);
}

StaticValue StaticValueFromJson(const json& value) {
  if (value.is_number_integer()) return value.get<std::int64_t>();
  if (value.is_number_float()) return value.get<double>();
  if (value.is_string()) return value.get<std::string>();
  Fail(ErrorCode::kParse,
       "static attribute values must be numbers or strings, got " +
           value.dump());
}

json StaticsToJson(const Statics& statics) {
  json out = json::object();
  for (const auto& [k, v] : statics) out[k] = StaticValueToJson(v);
  return out;
}

std::optional<double> StaticAsNumber(const StaticValue& value) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) {
    return static_cast<double>(*i);
  }
  if (const auto* d = std::get_if<double>(&value)) return *d;
  return std::nullopt;
}

std::string StaticToString(const StaticValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else {
          return json(v).dump();
        }
      },
      value);
}

const char* CohortTagName(CohortTag tag) {
  switch (tag) {
    case CohortTag::kTrain: return "train";
    case CohortTag::kTest: return "test";
    case CohortTag::kUnknown: return "unknown";
  }
  return "unknown";
}

bool SensitiveCategory::Matches(std::string_view code) const {
  for (const auto& prefix : code_prefixes) {
    if (code.substr(0, prefix.size()) == prefix && code.size() >= prefix.size())
      return true;
  }
  return false;
}

SensitiveCategory CategoryFromJson(const json& j) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string() ||
      !j.contains("prefixes") || !j["prefixes"].is_array()) {
    Fail(ErrorCode::kParse,
         "category must be {\"name\": str, \"prefixes\": [str,...]}");
  }
  SensitiveCategory c;
  c.name = j["name"].get<std::string>();
  for (const auto& p : j["prefixes"]) {
    if (!p.is_string() || p.get<std::string>().empty()) {
      Fail(ErrorCode::kParse,
           "category '" + c.name + "' has an empty or non-string prefix");
    }
    c.code_prefixes.push_back(p.get<std::string>());
  }
  if (c.name.empty()) Fail(ErrorCode::kParse, "category name is empty");
  if (c.code_prefixes.empty()) {
    Fail(ErrorCode::kParse, "category '" + c.name + "' has no prefixes");
  }
  return c;
}

json CategoryToJson(const SensitiveCategory& c) {
  return json{{"name", c.name}, {"prefixes", c.code_prefixes}};
}

std::vector<SensitiveCategory> LoadCategories(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open category file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kParse, path + ": " + e.what());
  }
  std::vector<SensitiveCategory> out;
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(CategoryFromJson(item));
  } else {
    out.push_back(CategoryFromJson(j));
  }
  return out;
}

std::vector<SensitiveCategory> BuiltinCategories() {
  return {
      {"infectious_disease",
       {"ICD10/B20", "ICD10/Z21", "ICD10/A15", "ICD10/A16", "ICD10/A17",
        "ICD10/A18", "ICD10/A19", "ICD10/B16", "ICD10/B17.1", "ICD10/B18.0",
        "ICD10/B18.1", "ICD10/B18.2", "ICD10/A56", "ICD10/A74"}},
      {"substance_abuse",
       {"ICD10/F10", "ICD10/F11", "ICD10/F12", "ICD10/F14", "ICD10/F15",
        "ICD10/F16"}},
      {"mental_health",
       {"ICD10/F20", "ICD10/F22", "ICD10/F23", "ICD10/F30", "ICD10/F31",
        "ICD10/F43.1", "ICD10/F50.0", "ICD10/F60"}},
  };
}

bool ContainsCategory(std::span<const CodeToken> seq,
                      const SensitiveCategory& category) {
  for (const auto& t : seq) {
    if (t.is_event() && category.Matches(t.code)) return true;
  }
  return false;
}

TokenSeq StripCategory(std::span<const CodeToken> seq,
                       const SensitiveCategory& category) {
  TokenSeq out;
  out.reserve(seq.size());
  for (const auto& t : seq) {
    if (t.is_event() && category.Matches(t.code)) continue;
    if (t.is_gap() && !out.empty() && out.back().is_gap()) {
      out.back().gap_hours += t.gap_hours;
      continue;
    }
    out.push_back(t);
  }
  return out;
}

std::string PromptSetup::Label() const {
  switch (kind) {
    case SetupKind::kRandom: return "random";
    case SetupKind::kStatic: return "static";
    case SetupKind::kNCodes: return "n_codes:" + std::to_string(n);
  }
  return "random";
}

PromptSetup PromptSetup::Parse(std::string_view label) {
  if (label == "random") return Random();
  if (label == "static") return Static();
  constexpr std::string_view kPrefix = "n_codes:";
  if (label.substr(0, kPrefix.size()) == kPrefix) {
    const std::string_view digits = label.substr(kPrefix.size());
    int n = 0;
    const auto [ptr, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && n > 0) {
      return NCodes(n);
    }
  }
  Fail(ErrorCode::kInvalidArgument,
       "invalid prompt setup '" + std::string(label) +
           "' (expected random, static or n_codes:<n> with n > 0)");
}

Statics Prompt::ModelStatics() const {
  if (setup.kind == SetupKind::kRandom) return {};
  return statics;
}

Prompt BuildPrompt(const Trajectory& t, const PromptSetup& setup) {
  if (setup.kind == SetupKind::kNCodes && setup.n <= 0) {
    Fail(ErrorCode::kInvalidArgument,
         "n_codes setup requires n > 0, got " + std::to_string(setup.n));
  }
  Prompt p;
  p.source_patient = t.patient_id;
  p.setup = setup;
  p.statics = t.statics;
  if (setup.kind != SetupKind::kNCodes) return p;
  if (setup.strip_category) {
    p.tokens = StripCategory(t.events, *setup.strip_category);
  } else {
    p.tokens = t.events;
  }
  if (p.tokens.size() > static_cast<std::size_t>(setup.n)) {
    p.tokens.resize(static_cast<std::size_t>(setup.n));
  }
  return p;
}

namespace {

Trajectory ParseRecord(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kParse, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) Fail(ErrorCode::kParse, "record is not a JSON object");
  Trajectory t;
  if (!j.contains("patient_id") || !j["patient_id"].is_string()) {
    Fail(ErrorCode::kParse, "missing string field 'patient_id'");
  }
  t.patient_id = j["patient_id"].get<std::string>();
  if (j.contains("cohort")) {
    const auto& c = j["cohort"];
    if (c == "train") {
      t.cohort = CohortTag::kTrain;
    } else if (c == "test") {
      t.cohort = CohortTag::kTest;
    } else if (c == "unknown") {
      t.cohort = CohortTag::kUnknown;
    } else {
      Fail(ErrorCode::kParse, "cohort must be \"train\" or \"test\"");
    }
  }
  if (j.contains("statics")) {
    if (!j["statics"].is_object()) {
      Fail(ErrorCode::kParse, "'statics' must be an object");
    }
    for (const auto& [k, v] : j["statics"].items()) {
      t.statics[k] = StaticValueFromJson(v);
    }
  }
  if (!j.contains("events") || !j["events"].is_array()) {
    Fail(ErrorCode::kParse, "missing array field 'events'");
  }
  for (const auto& e : j["events"]) {
    if (!e.is_object()) Fail(ErrorCode::kParse, "event is not an object");
    const bool has_code = e.contains("code");
    const bool has_gap = e.contains("gap_hours");
    if (has_code == has_gap) {
      Fail(ErrorCode::kParse,
           "event must have exactly one of 'code' or 'gap_hours'");
    }
    if (has_code) {
      if (!e["code"].is_string() || e["code"].get<std::string>().empty()) {
        Fail(ErrorCode::kParse, "event code must be a non-empty string");
      }
      std::string code = e["code"].get<std::string>();
      if (LooksLikeGap(code)) {
        Fail(ErrorCode::kParse,
             "event code '" + code + "' collides with the time-gap syntax");
      }
      t.events.push_back(CodeToken::Event(std::move(code)));
    } else {
      if (!e["gap_hours"].is_number_integer()) {
        Fail(ErrorCode::kParse, "gap_hours must be an integer");
      }
      const auto hours = e["gap_hours"].get<std::int64_t>();
      if (hours < 1) {
        Fail(ErrorCode::kParse, "gap_hours must be >= 1, got " +
                                    std::to_string(hours));
      }
      if (!t.events.empty() && t.events.back().is_gap()) {
        Fail(ErrorCode::kParse, "two consecutive time-gap tokens");
      }
      t.events.push_back(CodeToken::Gap(hours));
    }
  }
  return t;
}

bool IsBlank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

std::vector<Trajectory> ParseCohort(std::istream& in) {
  std::vector<Trajectory> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    try {
      Trajectory t = ParseRecord(line);
      if (!seen.insert(t.patient_id).second) {
        Fail(ErrorCode::kParse, "duplicate patient_id '" + t.patient_id + "'");
      }
      out.push_back(std::move(t));
    } catch (const Error& e) {
      Fail(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Trajectory> LoadCohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open cohort file: " + path);
  try {
    return ParseCohort(in);
  } catch (const Error& e) {
    Fail(e.code(), path + ": " + e.what());
  }
}

CohortValidation ValidateCohort(std::istream& in) {
  CohortValidation v;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    try {
      Trajectory t = ParseRecord(line);
      if (!seen.insert(t.patient_id).second) {
        Fail(ErrorCode::kParse, "duplicate patient_id '" + t.patient_id + "'");
      }
      if (t.events.empty()) {
        v.issues.push_back({line_no, "record has no events", true});
      }
      ++v.records;
      if (t.cohort == CohortTag::kTrain) ++v.train;
      if (t.cohort == CohortTag::kTest) ++v.test;
    } catch (const Error& e) {
      v.issues.push_back({line_no, e.what()});
    }
  }
  return v;
}

bool CohortValidation::ok() const {
  for (const auto& issue : issues) {
    if (!issue.warning) return false;
  }
  return true;
}

json TrajectoryToJson(const Trajectory& t) {
  json events = json::array();
  for (const auto& e : t.events) {
    if (e.is_event()) {
      events.push_back(json{{"code", e.code}});
    } else {
      events.push_back(json{{"gap_hours", e.gap_hours}});
    }
  }
  json j{{"patient_id", t.patient_id},
         {"statics", StaticsToJson(t.statics)},
         {"events", std::move(events)}};
  if (t.cohort != CohortTag::kUnknown) j["cohort"] = CohortTagName(t.cohort);
  return j;
}

void WriteCohort(std::ostream& out, std::span<const Trajectory> cohort) {
  for (const auto& t : cohort) out << TrajectoryToJson(t).dump() << '\n';
}

}  // namespace ehraudit
