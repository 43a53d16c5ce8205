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

// Small shared utilities: deterministic random streams, hashing, a fixed
// worker pool and number formatting used by the report writers.

#ifndef EHRAUDIT_UTIL_HPP_
#define EHRAUDIT_UTIL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace ehraudit {

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combines a parent seed with a tag into an independent child seed.
inline std::uint64_t DeriveSeed(std::uint64_t parent, std::uint64_t tag) {
  return SplitMix64(SplitMix64(parent) ^ (tag * 0xd6e8feb86659fd93ULL));
}

// 64-bit FNV-1a; stable across platforms, used to key seed substreams.
std::uint64_t Fnv1a64(std::string_view bytes);

inline std::uint64_t DeriveSeed(std::uint64_t parent, std::string_view tag) {
  return DeriveSeed(parent, Fnv1a64(tag));
}

// xoshiro256** seeded through SplitMix64. All sampling goes through this
// generator with hand-written transforms so that streams are identical on
// every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t NextU64();
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  // Uniform integer in [0, n).
  std::uint64_t Below(std::uint64_t n);
  double Gaussian();
  // Index drawn from a discrete distribution given by its cumulative sums.
  std::size_t Categorical(std::span<const double> cdf);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Lower-case hex SHA-256 of the input.
std::string Sha256Hex(std::string_view bytes);

// Runs body(i) for i in [0, n) on up to `workers` threads. Iterations must
// write to disjoint state; the first exception is rethrown after joining.
void ParallelFor(std::size_t n, int workers,
                 const std::function<void(std::size_t)>& body);

// Worker count from the AUDIT_WORKERS environment variable, else 1.
int WorkersFromEnv();

// Rounds to 6 significant digits (the report precision contract).
double Round6(double value);

// Formats with 6 significant digits, shortest form ("0.931", "1e-07").
std::string Format6(double value);

}  // namespace ehraudit

#endif  // EHRAUDIT_UTIL_HPP_
