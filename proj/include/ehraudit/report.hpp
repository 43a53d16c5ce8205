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

// Deterministic rendering of audit results: JSON with sorted keys and
// numbers rounded to 6 significant digits, CSV extracts and SVG plots.
// Output depends only on the results passed in.

#ifndef EHRAUDIT_REPORT_HPP_
#define EHRAUDIT_REPORT_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ehraudit/audit.hpp"

namespace ehraudit {

inline constexpr int kReportSchemaVersion = 1;

// Round6 for finite values, null otherwise.
nlohmann::json Num(double v);

nlohmann::json T1ToJson(const T1Result& r);
nlohmann::json T2ToJson(const T2Result& r);
nlohmann::json T3ToJson(const T3Result& r);
nlohmann::json T4ToJson(const T4Result& r);
nlohmann::json T5ToJson(std::span<const PerturbationCurve> curves);
nlohmann::json CoreSuiteToJson(const CoreSuiteResult& r);
nlohmann::json T6ToJson(const T6Result& r);
nlohmann::json FlaggedPromptToJson(const FlaggedPrompt& f);

struct Histogram {
  std::vector<double> edges;  // bins + 1 values
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;
};

// Shared equal-width bins over the union range of both samples.
Histogram TwoSampleHistogram(std::span<const double> a, std::span<const double> b,
                             int bins);

std::string T1Csv(const T1Result& r);
// attribute, patient_prevalence, prompt, auroc, auprc, precision, recall,
// positive_prediction_count.
std::string SensitivityCsv(std::span<const SensitivityRow> rows);
// Adjudication worklist, one JSON object per line.
std::string WorklistJsonl(std::span<const FlaggedPrompt> flagged);
// attribute, prefix_len, fraction, auroc, auprc, f1, n_pos, n_total.
std::string ProbeSweepCsv(std::span<const SweepResult> sweeps);
std::string T4Csv(const T4Result& r);
std::string T5Csv(std::span<const PerturbationCurve> curves);
std::string RareCodeCsv(const RareCodeResult& r);
// The sensitivity table with a leading subgroup/cohort pair of columns,
// full cohort rows first.
std::string SubgroupComparisonCsv(const T6Result& r);

struct Bar {
  std::string label;
  double value = 0.0;
};

std::string BarChartSvg(const std::string& title, const std::string& y_label,
                        std::span<const Bar> bars);
std::string HistogramSvg(const std::string& title, const Histogram& h,
                         const std::string& a_label, const std::string& b_label);
std::string PerturbationSvg(const PerturbationCurve& c, double threshold);
// Log-log scatter of paired counts with the identity line.
std::string FrequencyScatterSvg(const std::string& title,
                                std::span<const double> x, std::span<const double> y,
                                const std::string& x_label, const std::string& y_label);

std::string T1Svg(const T1Result& r);
std::string T4Svg(const T4Result& r);
std::string T6Svg(const T6Result& r);

// Named output files, written in name order.
class OutputBundle {
 public:
  void Add(const std::string& name, std::string content);
  const std::map<std::string, std::string>& files() const { return files_; }
  // Creates the directory as needed; throws kIo on failure.
  void WriteTo(const std::string& dir) const;

 private:
  std::map<std::string, std::string> files_;
};

// Pretty-printed with a trailing newline.
std::string DumpJson(const nlohmann::json& j);

void WriteTextFile(const std::string& path, const std::string& content);

}  // namespace ehraudit

#endif  // EHRAUDIT_REPORT_HPP_
