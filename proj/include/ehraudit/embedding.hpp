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

#ifndef EHRAUDIT_EMBEDDING_HPP_
#define EHRAUDIT_EMBEDDING_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ehraudit {

enum class UnknownCodePolicy {
  kError,
  // Unknown codes behave as zero vectors: cosine similarity 0 against any
  // other code, so the ground cost is 1.
  kZeroVector,
};

// Static per-code embedding table h(.). Immutable after loading.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(int dim,
                          UnknownCodePolicy policy = UnknownCodePolicy::kError);

  // Throws on arity mismatch, non-finite components or a duplicate code.
  void Add(const std::string& code, std::vector<double> vector);

  int dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }
  UnknownCodePolicy policy() const { return policy_; }
  void set_policy(UnknownCodePolicy policy) { policy_ = policy; }

  bool Contains(std::string_view code) const;
  // nullptr when absent.
  const std::vector<double>* Find(std::string_view code) const;
  const std::vector<std::string>& codes() const { return order_; }

  // 1 - cos(h(a), h(b)), in [0, 2]. Identical ids cost 0.
  double GroundCost(std::string_view a, std::string_view b) const;

 private:
  struct Entry {
    std::vector<double> vector;
    double norm = 0.0;
  };
  const Entry* Lookup(std::string_view code) const;

  int dim_;
  UnknownCodePolicy policy_;
  std::unordered_map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

// TSV: first line "dim\t<D>", then "<code>\t<v1>\t...\t<vD>".
EmbeddingTable LoadEmbeddingTable(std::istream& in);
EmbeddingTable LoadEmbeddingFile(const std::string& path);
void WriteEmbeddingTable(std::ostream& out, const EmbeddingTable& table);

}  // namespace ehraudit

#endif  // EHRAUDIT_EMBEDDING_HPP_
