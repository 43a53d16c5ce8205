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

#include "ehraudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ehraudit/error.hpp"
#include "ehraudit/util.hpp"

namespace ehraudit {

using nlohmann::json;

json Num(double v) { return std::isfinite(v) ? json(Round6(v)) : json(nullptr); }

namespace {

json Opt(const std::optional<double>& v) { return v ? Num(*v) : json(nullptr); }

json SummaryJson(const Summary& s) {
  return json{{"count", s.count}, {"mean", Num(s.mean)},      {"sd", Num(s.sd)},
              {"min", Num(s.min)}, {"median", Num(s.median)}, {"max", Num(s.max)}};
}

json PromptJson(const Prompt& p) {
  return json{{"source_patient", p.source_patient},
              {"setup", p.setup.Label()},
              {"tokens", ToWire(p.tokens)},
              {"statics", StaticsToJson(p.ModelStatics())}};
}

std::string Csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string F(double v) { return std::isfinite(v) ? Format6(v) : ""; }
std::string F(const std::optional<double>& v) { return v ? F(*v) : ""; }

std::string Xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string P(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

constexpr double kW = 640, kH = 400, kL = 70, kR = 20, kT = 40, kB = 70;

// `kind` names the chart type in a data-kind attribute on the root element.
std::string SvgOpen(const std::string& kind, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" data-kind=\"" + kind +
                  "\" width=\"" + P(kW) +
                  "\" height=\"" + P(kH) + "\" viewBox=\"0 0 " + P(kW) + " " + P(kH) +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + P(kW) + "\" height=\"" + P(kH) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + P(kW / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       Xml(title) + "</text>\n";
  return s;
}

// Axes with a y-range [lo, hi] and four ticks.
std::string Axes(double lo, double hi, const std::string& y_label) {
  std::string s;
  s += "<line x1=\"" + P(kL) + "\" y1=\"" + P(kH - kB) + "\" x2=\"" + P(kW - kR) + "\" y2=\"" +
       P(kH - kB) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + P(kL) + "\" y1=\"" + P(kT) + "\" x2=\"" + P(kL) + "\" y2=\"" +
       P(kH - kB) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = kH - kB - (kH - kT - kB) * i / 4.0;
    s += "<text x=\"" + P(kL - 6) + "\" y=\"" + P(y + 4) + "\" text-anchor=\"end\">" +
         Xml(Format6(Round6(v))) + "</text>\n";
  }
  s += "<text x=\"16\" y=\"" + P((kT + kH - kB) / 2) +
       "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + P((kT + kH - kB) / 2) +
       ")\">" + Xml(y_label) + "</text>\n";
  return s;
}

double YPix(double v, double lo, double hi) {
  const double f = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return kH - kB - (kH - kT - kB) * std::clamp(f, 0.0, 1.0);
}

double NiceMax(double m) { return m > 0 ? m * 1.1 : 1.0; }

}  // namespace

json T1ToJson(const T1Result& r) {
  json setups = json::array();
  for (const auto& s : r.setups) {
    json per = json::array();
    for (const auto& p : s.per_prompt) {
      per.push_back({{"patient_id", p.patient_id},
                     {"samples", p.samples},
                     {"mean", Num(p.mean)},
                     {"min", Num(p.min)},
                     {"random_mean", Num(p.random_mean)}});
    }
    setups.push_back({{"setup", s.setup},
                      {"prompts", s.prompts},
                      {"skipped_short", s.skipped_short},
                      {"degenerate_samples", s.degenerate_samples},
                      {"samples", s.samples},
                      {"distance", SummaryJson(s.distance)},
                      {"per_prompt_min_mean", Num(s.per_prompt_min_mean)},
                      {"per_prompt_mean_mean", Num(s.per_prompt_mean_mean)},
                      {"random_baseline_mean", Num(s.random_baseline_mean)},
                      {"better_than_random_share", Num(s.better_than_random_share)},
                      {"per_prompt", per}});
  }
  return json{{"setups", setups}, {"cohort_random_mean", Opt(r.cohort_random_mean)}};
}

json FlaggedPromptToJson(const FlaggedPrompt& f) {
  return json{{"id", f.id},
              {"prompt", PromptJson(f.prompt)},
              {"category", f.category.name},
              {"hit_rate", Num(f.hit_rate)},
              {"disposition", DispositionName(f.disposition)},
              {"note", f.note}};
}

json T2ToJson(const T2Result& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"attribute", row.attribute},
                    {"prompt", row.setup},
                    {"patients", row.patients},
                    {"positives", row.positives},
                    {"patient_prevalence", Num(row.patient_prevalence)},
                    {"auroc", Opt(row.auroc)},
                    {"auprc", Opt(row.auprc)},
                    {"precision", Num(row.precision)},
                    {"recall", Num(row.recall)},
                    {"positive_prediction_count", row.positive_prediction_count}});
  }
  json flagged = json::array();
  for (const auto& f : r.flagged) flagged.push_back(FlaggedPromptToJson(f));
  return json{{"table", rows}, {"flagged", flagged}};
}

json T3ToJson(const T3Result& r) {
  json sweeps = json::array();
  for (const auto& s : r.sweeps) {
    json cells = json::array();
    for (const auto& c : s.cells) {
      json cell{{"prefix_len", c.prefix_len},
                {"fraction", c.fraction},
                {"available", c.available},
                {"n_pos", c.n_pos},
                {"n_total", c.n_total},
                {"n_eval", c.n_eval}};
      if (c.available) {
        cell["auroc"] = Num(c.auroc);
        cell["auprc"] = Num(c.auprc);
        cell["f1"] = Num(c.f1);
        cell["accuracy"] = Num(c.accuracy);
        cell["precision"] = Num(c.precision);
        cell["recall"] = Num(c.recall);
        cell["repeats_used"] = c.repeats_used;
        cell["null_auroc_99"] = Num(c.null_auroc_99);
      } else {
        cell["unavailable_reason"] = c.unavailable_reason;
      }
      cells.push_back(cell);
    }
    sweeps.push_back({{"attribute", s.attribute},
                      {"eval_patients", s.eval_patients},
                      {"eval_positives", s.eval_positives},
                      {"cells", cells}});
  }
  return json{{"sweeps", sweeps}, {"failed", r.failed}};
}

Histogram TwoSampleHistogram(std::span<const double> a, std::span<const double> b,
                             int bins) {
  Histogram h;
  bins = std::max(bins, 1);
  double lo = INFINITY, hi = -INFINITY;
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi <= lo) hi = lo + 1.0;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * i / bins);
  h.a.assign(static_cast<std::size_t>(bins), 0);
  h.b.assign(static_cast<std::size_t>(bins), 0);
  auto bin = [&](double v) {
    const auto k = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
    return static_cast<std::size_t>(std::clamp<long>(k, 0, bins - 1));
  };
  for (double v : a) ++h.a[bin(v)];
  for (double v : b) ++h.b[bin(v)];
  return h;
}

json T4ToJson(const T4Result& r) {
  const Histogram h = TwoSampleHistogram(r.member_scores, r.nonmember_scores, 20);
  json edges = json::array();
  for (double e : h.edges) edges.push_back(Num(e));
  auto summary = [](const std::vector<double>& v) { return SummaryJson(Summarize(v)); };
  return json{{"k", Num(r.k)},
              {"risk_bound", Num(r.risk_bound)},
              {"auroc", Num(r.auroc)},
              {"failed", r.failed},
              {"skipped_short", r.skipped_short},
              {"members", summary(r.member_scores)},
              {"nonmembers", summary(r.nonmember_scores)},
              {"histogram", {{"edges", edges}, {"members", h.a}, {"nonmembers", h.b}}}};
}

json T5ToJson(std::span<const PerturbationCurve> curves) {
  json out = json::array();
  for (const auto& c : curves) {
    json grid = json::array(), rates = json::array();
    for (const auto& g : c.grid) grid.push_back(StaticValueToJson(g));
    for (double h : c.hit_rates) rates.push_back(Num(h));
    json j{{"prompt_id", c.prompt_id},
           {"identifier", c.identifier},
           {"category", c.category},
           {"grid", grid},
           {"hit_rates", rates},
           {"original_value", StaticValueToJson(c.original_value)},
           {"original_index", c.original_index},
           {"grid_median", Num(c.grid_median)},
           {"flagged", c.flagged}};
    if (!c.warning.empty()) j["warning"] = c.warning;
    out.push_back(j);
  }
  return out;
}

json CoreSuiteToJson(const CoreSuiteResult& r) {
  json j{{"patients", r.patients}};
  if (r.t1) j["t1"] = T1ToJson(*r.t1);
  if (r.t2) j["t2"] = T2ToJson(*r.t2);
  if (r.t3) j["t3"] = T3ToJson(*r.t3);
  if (r.t4) j["t4"] = T4ToJson(*r.t4);
  if (!r.t5.empty()) j["t5"] = T5ToJson(r.t5);
  json una = json::array();
  for (const auto& [test, why] : r.unavailable) una.push_back({{"test", test}, {"reason", why}});
  j["unavailable"] = una;
  j["flagged"] = CoreSuiteFlagged(r);
  return j;
}

json T6ToJson(const T6Result& r) {
  json prompts = json::array();
  for (const auto& p : r.rare_code.prompts) {
    json rates = json::array();
    for (double h : p.hit_rates) rates.push_back(Num(h));
    prompts.push_back({{"patient_id", p.patient_id},
                       {"code", p.code},
                       {"hit_rates", rates},
                       {"flagged", p.flagged}});
  }
  json means = json::array();
  for (double m : r.rare_code.mean_hit_rates) means.push_back(Num(m));
  json rare{{"patients", r.rare_code.patients},
            {"available", !r.rare_code.prompts.empty()},
            {"categories", r.rare_code.categories},
            {"mean_hit_rates", means},
            {"flagged", r.rare_code.flagged},
            {"prompts", prompts}};
  json subgroups = json::array();
  for (const auto& s : r.subgroups) {
    json sj{{"name", s.name}, {"description", s.description}, {"size", s.size},
            {"available", s.available}};
    if (s.available) {
      sj["suite"] = CoreSuiteToJson(s.suite);
    } else {
      sj["unavailable_reason"] = s.unavailable_reason;
    }
    subgroups.push_back(sj);
  }
  json j{{"rare_code", rare}, {"subgroups", subgroups}, {"flagged", r.flagged}};
  if (r.full) j["full_cohort"] = CoreSuiteToJson(*r.full);
  return j;
}

std::string T1Csv(const T1Result& r) {
  std::string s =
      "setup,prompts,samples,skipped_short,degenerate_samples,mean,sd,per_prompt_min_mean,"
      "per_prompt_mean_mean,random_baseline_mean,better_than_random_share\n";
  for (const auto& x : r.setups) {
    s += Csv(x.setup) + "," + std::to_string(x.prompts) + "," + std::to_string(x.samples) +
         "," + std::to_string(x.skipped_short) + "," + std::to_string(x.degenerate_samples) +
         "," + F(x.distance.mean) + "," + F(x.distance.sd) + "," + F(x.per_prompt_min_mean) +
         "," + F(x.per_prompt_mean_mean) + "," + F(x.random_baseline_mean) + "," +
         F(x.better_than_random_share) + "\n";
  }
  return s;
}

std::string SensitivityCsv(std::span<const SensitivityRow> rows) {
  std::string s =
      "attribute,patient_prevalence,prompt,auroc,auprc,precision,recall,"
      "positive_prediction_count\n";
  for (const auto& r : rows) {
    s += Csv(r.attribute) + "," + F(r.patient_prevalence) + "," + Csv(r.setup) + "," +
         F(r.auroc) + "," + F(r.auprc) + "," + F(r.precision) + "," + F(r.recall) + "," +
         std::to_string(r.positive_prediction_count) + "\n";
  }
  return s;
}

std::string WorklistJsonl(std::span<const FlaggedPrompt> flagged) {
  std::string s;
  for (const auto& f : flagged) {
    s += json{{"id", f.id},
              {"patient", f.prompt.source_patient},
              {"category", f.category.name},
              {"setup", f.prompt.setup.Label()},
              {"hit_rate", Num(f.hit_rate)},
              {"disposition", DispositionName(f.disposition)},
              {"note", f.note}}
             .dump() +
         "\n";
  }
  return s;
}

std::string ProbeSweepCsv(std::span<const SweepResult> sweeps) {
  std::string s = "attribute,prefix_len,fraction,auroc,auprc,f1,n_pos,n_total\n";
  for (const auto& sw : sweeps) {
    for (const auto& c : sw.cells) {
      s += Csv(sw.attribute) + "," + std::to_string(c.prefix_len) + "," + c.fraction + "," +
           (c.available ? F(c.auroc) : "") + "," + (c.available ? F(c.auprc) : "") + "," +
           (c.available ? F(c.f1) : "") + "," + std::to_string(c.n_pos) + "," +
           std::to_string(c.n_total) + "\n";
    }
  }
  return s;
}

std::string T4Csv(const T4Result& r) {
  std::string s = "group,index,min_k_score\n";
  for (std::size_t i = 0; i < r.member_scores.size(); ++i) {
    s += "member," + std::to_string(i) + "," + F(r.member_scores[i]) + "\n";
  }
  for (std::size_t i = 0; i < r.nonmember_scores.size(); ++i) {
    s += "nonmember," + std::to_string(i) + "," + F(r.nonmember_scores[i]) + "\n";
  }
  return s;
}

std::string T5Csv(std::span<const PerturbationCurve> curves) {
  std::string s = "prompt_id,identifier,category,value,hit_rate,is_original,flagged\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.grid.size(); ++i) {
      s += Csv(c.prompt_id) + "," + Csv(c.identifier) + "," + Csv(c.category) + "," +
           Csv(StaticToString(c.grid[i])) + "," + F(c.hit_rates[i]) + "," +
           (i == c.original_index ? "1" : "0") + "," + (c.flagged ? "1" : "0") + "\n";
    }
  }
  return s;
}

std::string RareCodeCsv(const RareCodeResult& r) {
  std::string s = "patient_id,code,category,hit_rate,flagged\n";
  for (const auto& p : r.prompts) {
    for (std::size_t c = 0; c < r.categories.size(); ++c) {
      s += Csv(p.patient_id) + "," + Csv(p.code) + "," + Csv(r.categories[c]) + "," +
           F(p.hit_rates[c]) + "," + (p.flagged ? "1" : "0") + "\n";
    }
  }
  return s;
}

std::string SubgroupComparisonCsv(const T6Result& r) {
  std::string s =
      "subgroup,cohort,attribute,patient_prevalence,prompt,auroc,auprc,precision,recall,"
      "positive_prediction_count\n";
  auto rows = [&](const std::string& sub, const std::string& which, const CoreSuiteResult& c) {
    if (!c.t2) return;
    const std::string body = SensitivityCsv(c.t2->rows);
    std::istringstream in(body);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) s += Csv(sub) + "," + which + "," + line + "\n";
  };
  for (const auto& sg : r.subgroups) {
    if (!sg.available) continue;
    if (r.full) rows(sg.name, "full", *r.full);
    rows(sg.name, "subgroup", sg.suite);
  }
  return s;
}

std::string BarChartSvg(const std::string& title, const std::string& y_label,
                        std::span<const Bar> bars) {
  double hi = 0.0;
  for (const auto& b : bars) {
    if (std::isfinite(b.value)) hi = std::max(hi, b.value);
  }
  hi = NiceMax(hi);
  std::string s = SvgOpen("bar", title) + Axes(0.0, hi, y_label);
  const double span = kW - kL - kR;
  const double slot = bars.empty() ? span : span / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::isfinite(bars[i].value) ? bars[i].value : 0.0;
    const double x = kL + slot * static_cast<double>(i) + slot * 0.15;
    const double y = YPix(v, 0.0, hi);
    s += "<rect x=\"" + P(x) + "\" y=\"" + P(y) + "\" width=\"" + P(slot * 0.7) +
         "\" height=\"" + P(kH - kB - y) + "\" fill=\"#4878a8\"/>\n";
    s += "<text x=\"" + P(x + slot * 0.35) + "\" y=\"" + P(y - 4) +
         "\" text-anchor=\"middle\">" + Xml(Format6(Round6(v))) + "</text>\n";
    s += "<text x=\"" + P(x + slot * 0.35) + "\" y=\"" + P(kH - kB + 16) +
         "\" text-anchor=\"middle\">" + Xml(bars[i].label) + "</text>\n";
  }
  return s + "</svg>\n";
}

std::string HistogramSvg(const std::string& title, const Histogram& h,
                         const std::string& a_label, const std::string& b_label) {
  std::size_t peak = 0;
  for (auto v : h.a) peak = std::max(peak, v);
  for (auto v : h.b) peak = std::max(peak, v);
  const double hi = NiceMax(static_cast<double>(peak));
  std::string s = SvgOpen("histogram", title) + Axes(0.0, hi, "count");
  const std::size_t bins = h.a.size();
  const double slot = (kW - kL - kR) / static_cast<double>(std::max<std::size_t>(bins, 1));
  auto series = [&](const std::vector<std::size_t>& c, const char* color) {
    for (std::size_t i = 0; i < bins; ++i) {
      const double y = YPix(static_cast<double>(c[i]), 0.0, hi);
      s += "<rect x=\"" + P(kL + slot * static_cast<double>(i)) + "\" y=\"" + P(y) +
           "\" width=\"" + P(slot) + "\" height=\"" + P(kH - kB - y) + "\" fill=\"" + color +
           "\" fill-opacity=\"0.5\"/>\n";
    }
  };
  series(h.a, "#c04040");
  series(h.b, "#4060c0");
  if (!h.edges.empty()) {
    s += "<text x=\"" + P(kL) + "\" y=\"" + P(kH - kB + 16) + "\" text-anchor=\"start\">" +
         Xml(Format6(Round6(h.edges.front()))) + "</text>\n";
    s += "<text x=\"" + P(kW - kR) + "\" y=\"" + P(kH - kB + 16) + "\" text-anchor=\"end\">" +
         Xml(Format6(Round6(h.edges.back()))) + "</text>\n";
  }
  s += "<rect x=\"" + P(kL + 10) + "\" y=\"" + P(kH - 30) +
       "\" width=\"10\" height=\"10\" fill=\"#c04040\" fill-opacity=\"0.5\"/>\n";
  s += "<text x=\"" + P(kL + 24) + "\" y=\"" + P(kH - 21) + "\">" + Xml(a_label) + "</text>\n";
  s += "<rect x=\"" + P(kL + 200) + "\" y=\"" + P(kH - 30) +
       "\" width=\"10\" height=\"10\" fill=\"#4060c0\" fill-opacity=\"0.5\"/>\n";
  s += "<text x=\"" + P(kL + 214) + "\" y=\"" + P(kH - 21) + "\">" + Xml(b_label) + "</text>\n";
  return s + "</svg>\n";
}

std::string PerturbationSvg(const PerturbationCurve& c, double threshold) {
  std::string s = SvgOpen("curve", "Hit rate of " + c.category + " vs " + c.identifier) +
                  Axes(0.0, 1.0, "hit rate");
  const std::size_t n = c.grid.size();
  const double span = kW - kL - kR;
  auto xpix = [&](std::size_t i) {
    return n < 2 ? kL + span / 2 : kL + 20 + (span - 40) * static_cast<double>(i) / (n - 1);
  };
  const double ty = YPix(threshold, 0.0, 1.0);
  s += "<line x1=\"" + P(kL) + "\" y1=\"" + P(ty) + "\" x2=\"" + P(kW - kR) + "\" y2=\"" +
       P(ty) + "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  std::string path;
  for (std::size_t i = 0; i < n; ++i) {
    path += (i ? " L" : "M") + P(xpix(i)) + " " + P(YPix(c.hit_rates[i], 0.0, 1.0));
  }
  if (!path.empty()) {
    s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"#4878a8\" stroke-width=\"2\"/>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool orig = i == c.original_index;
    s += "<circle cx=\"" + P(xpix(i)) + "\" cy=\"" + P(YPix(c.hit_rates[i], 0.0, 1.0)) +
         "\" r=\"" + (orig ? "5" : "3") + "\" fill=\"" + (orig ? "#c04040" : "#4878a8") +
         "\"/>\n";
    s += "<text x=\"" + P(xpix(i)) + "\" y=\"" + P(kH - kB + 16) +
         "\" text-anchor=\"middle\">" + Xml(StaticToString(c.grid[i])) + "</text>\n";
  }
  return s + "</svg>\n";
}

std::string FrequencyScatterSvg(const std::string& title,
                                std::span<const double> x, std::span<const double> y,
                                const std::string& x_label, const std::string& y_label) {
  double hi = 1.0;
  for (double v : x) hi = std::max(hi, std::log10(v + 1.0));
  for (double v : y) hi = std::max(hi, std::log10(v + 1.0));
  hi = std::ceil(hi);
  std::string s = SvgOpen("scatter", title) + Axes(0.0, hi, "log10(1 + " + y_label + ")");
  const double span = kW - kL - kR;
  auto xp = [&](double v) { return kL + span * std::log10(v + 1.0) / hi; };
  s += "<line x1=\"" + P(kL) + "\" y1=\"" + P(YPix(0, 0, hi)) + "\" x2=\"" + P(kL + span) +
       "\" y2=\"" + P(YPix(hi, 0, hi)) + "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
    s += "<circle cx=\"" + P(xp(x[i])) + "\" cy=\"" + P(YPix(std::log10(y[i] + 1.0), 0, hi)) +
         "\" r=\"3\" fill=\"#4878a8\"/>\n";
  }
  s += "<text x=\"" + P(kL + span / 2) + "\" y=\"" + P(kH - kB + 36) +
       "\" text-anchor=\"middle\">log10(1 + " + Xml(x_label) + ")</text>\n";
  return s + "</svg>\n";
}

std::string T1Svg(const T1Result& r) {
  std::vector<Bar> bars;
  for (const auto& s : r.setups) bars.push_back({s.setup, s.distance.mean});
  return BarChartSvg("Mean distance to the true continuation by prompt setup", "mean d_EMD",
                     bars);
}

std::string T4Svg(const T4Result& r) {
  return HistogramSvg("Min-k membership scores",
                      TwoSampleHistogram(r.member_scores, r.nonmember_scores, 20), "members",
                      "nonmembers");
}

std::string T6Svg(const T6Result& r) {
  std::vector<Bar> bars;
  for (std::size_t c = 0; c < r.rare_code.categories.size(); ++c) {
    bars.push_back({r.rare_code.categories[c], r.rare_code.mean_hit_rates[c]});
  }
  return BarChartSvg("Rare-code subgroup: likelihood of generating each category",
                     "mean hit rate", bars);
}

void OutputBundle::Add(const std::string& name, std::string content) {
  files_[name] = std::move(content);
}

void WriteTextFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out << content;
  out.close();
  if (!out) Fail(ErrorCode::kIo, "cannot write '" + path + "'");
}

void OutputBundle::WriteTo(const std::string& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create output directory '" + dir + "': " + ec.message());
  for (const auto& [name, content] : files_) {
    WriteTextFile((std::filesystem::path(dir) / name).string(), content);
  }
}

std::string DumpJson(const json& j) { return j.dump(2) + "\n"; }

}  // namespace ehraudit
