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

#include "ehraudit/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ehraudit/error.hpp"

namespace ehraudit {

EmbeddingTable::EmbeddingTable(int dim, UnknownCodePolicy policy)
    : dim_(dim), policy_(policy) {
  if (dim <= 0) {
    Fail(ErrorCode::kInvalidArgument,
         "embedding dim must be positive, got " + std::to_string(dim));
  }
}

void EmbeddingTable::Add(const std::string& code, std::vector<double> vector) {
  if (static_cast<int>(vector.size()) != dim_) {
    Fail(ErrorCode::kParse, "embedding for '" + code + "' has " +
                                std::to_string(vector.size()) +
                                " values, expected " + std::to_string(dim_));
  }
  double sq = 0.0;
  for (double v : vector) {
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kNumeric,
           "embedding for '" + code + "' has a non-finite component");
    }
    sq += v * v;
  }
  Entry entry{std::move(vector), std::sqrt(sq)};
  if (!entries_.emplace(code, std::move(entry)).second) {
    Fail(ErrorCode::kParse, "duplicate embedding for code '" + code + "'");
  }
  order_.push_back(code);
}

bool EmbeddingTable::Contains(std::string_view code) const {
  return entries_.find(std::string(code)) != entries_.end();
}

const std::vector<double>* EmbeddingTable::Find(std::string_view code) const {
  const Entry* e = Lookup(code);
  return e ? &e->vector : nullptr;
}

const EmbeddingTable::Entry* EmbeddingTable::Lookup(
    std::string_view code) const {
  const auto it = entries_.find(std::string(code));
  return it == entries_.end() ? nullptr : &it->second;
}

double EmbeddingTable::GroundCost(std::string_view a,
                                  std::string_view b) const {
  if (a == b) return 0.0;
  const Entry* ea = Lookup(a);
  const Entry* eb = Lookup(b);
  if (ea == nullptr || eb == nullptr) {
    if (policy_ == UnknownCodePolicy::kZeroVector) return 1.0;
    Fail(ErrorCode::kUnknownCode,
         "no embedding for code '" + std::string(ea == nullptr ? a : b) + "'");
  }
  if (ea->norm == 0.0 || eb->norm == 0.0) {
    Fail(ErrorCode::kNumeric,
         "cosine undefined for zero vector of code '" +
             std::string(ea->norm == 0.0 ? a : b) + "'");
  }
  double dot = 0.0;
  for (int i = 0; i < dim_; ++i) dot += ea->vector[i] * eb->vector[i];
  const double cos = std::clamp(dot / (ea->norm * eb->norm), -1.0, 1.0);
  return 1.0 - cos;
}

namespace {

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double ParseReal(const std::string& text, const std::string& code) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    Fail(ErrorCode::kParse,
         "embedding for '" + code + "' has non-numeric value '" + text + "'");
  }
  return v;
}

}  // namespace

EmbeddingTable LoadEmbeddingTable(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    Fail(ErrorCode::kParse, "embedding table is empty (missing dim header)");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = SplitTabs(line);
  if (header.size() != 2 || header[0] != "dim") {
    Fail(ErrorCode::kParse, "first line must be \"dim\\t<D>\"");
  }
  char* end = nullptr;
  const long dim = std::strtol(header[1].c_str(), &end, 10);
  if (header[1].empty() || *end != '\0' || dim <= 0) {
    Fail(ErrorCode::kParse, "invalid embedding dim '" + header[1] + "'");
  }
  EmbeddingTable table(static_cast<int>(dim));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    const std::string& code = fields[0];
    if (code.empty()) {
      Fail(ErrorCode::kParse,
           "line " + std::to_string(line_no) + ": empty code id");
    }
    if (static_cast<long>(fields.size()) - 1 != dim) {
      Fail(ErrorCode::kParse, "line " + std::to_string(line_no) +
                                  ": embedding for '" + code + "' has " +
                                  std::to_string(fields.size() - 1) +
                                  " values, expected " + std::to_string(dim));
    }
    std::vector<double> v;
    v.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      v.push_back(ParseReal(fields[i], code));
    }
    table.Add(code, std::move(v));
  }
  return table;
}

EmbeddingTable LoadEmbeddingFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open embedding file: " + path);
  try {
    return LoadEmbeddingTable(in);
  } catch (const Error& e) {
    Fail(e.code(), path + ": " + e.what());
  }
}

void WriteEmbeddingTable(std::ostream& out, const EmbeddingTable& table) {
  out << "dim\t" << table.dim() << '\n';
  char buf[40];
  for (const auto& code : table.codes()) {
    out << code;
    for (double v : *table.Find(code)) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
}

}  // namespace ehraudit
