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

// Reference implementations used only by tests. Each one is written from the
// defining formula and shares no code with the library.

#ifndef EHRAUDIT_TESTS_SUPPORT_ORACLES_HPP_
#define EHRAUDIT_TESTS_SUPPORT_ORACLES_HPP_

#include <cstddef>
#include <vector>

namespace ehraudit::testing {

// min <C, X> subject to row sums mu, column sums nu, X >= 0, solved as a
// dense LP by a two-phase tableau simplex with Bland's rule.
double DenseLpTransport(const std::vector<double>& cost, std::size_t rows,
                        std::size_t cols, const std::vector<double>& mu,
                        const std::vector<double>& nu);

// Share of (positive, negative) pairs ranked correctly, ties counted half.
double PairwiseAuroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision from confusion counts recomputed at every distinct
// threshold.
double EnumeratedAuprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};
Confusion CountAt(const std::vector<double>& scores, const std::vector<int>& labels,
                  double thr);

// Smallest mean over every subset of size ceil(k n), by enumeration.
double SubsetMinK(const std::vector<double>& logprobs, double k);

// log P(x[i] | x[0..i)) for the toy generative process, from the joint
// probability of every record prefix obtained by enumerating the forced slot
// and all completions of the block.
std::vector<double> EnumeratedToyLogprobs(const std::vector<int>& digits,
                                          const std::vector<int>& trigger, int forced,
                                          int gen_len, int vocab);

}  // namespace ehraudit::testing

#endif  // EHRAUDIT_TESTS_SUPPORT_ORACLES_HPP_
