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

// Synthetic EHR cohort and a bigram sequence model trained on it. Used by
// tests that exercise the whole pipeline without a real foundation model.

#ifndef EHRAUDIT_TESTS_SUPPORT_SYNTHETIC_EHR_HPP_
#define EHRAUDIT_TESTS_SUPPORT_SYNTHETIC_EHR_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ehraudit/corpus.hpp"
#include "ehraudit/embedding.hpp"
#include "ehraudit/model.hpp"

namespace ehraudit::testing {

struct SyntheticEhr {
  std::vector<Trajectory> cohort;
  EmbeddingTable table{16};
};

// Patients follow one of a few clinical profiles; some profiles carry codes
// from the built-in sensitive categories. Ages span 18 to 99.
SyntheticEhr MakeSyntheticEhr(int n_train, int n_test, std::uint64_t seed);

// Bigram model over event codes fit on train-tagged records, with a fixed
// chance of emitting a time gap. Embeddings average the code vectors of the
// prefix.
class BigramEhrModel : public Model {
 public:
  BigramEhrModel(const std::vector<Trajectory>& cohort, const EmbeddingTable& table);

  Capabilities capabilities() const override;

 protected:
  GenResponse DoGenerate(const GenRequest& request) override;
  std::vector<double> DoLogprobs(std::span<const CodeToken> tokens) override;
  std::vector<double> DoEmbed(const EmbedRequest& request) override;

 private:
  double NextProb(const std::string& prev, const CodeToken& next) const;

  std::vector<std::string> codes_;
  std::map<std::string, std::vector<double>> next_;  // previous code -> probs
  const EmbeddingTable* table_;
};

}  // namespace ehraudit::testing

#endif  // EHRAUDIT_TESTS_SUPPORT_SYNTHETIC_EHR_HPP_
