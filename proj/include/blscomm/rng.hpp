/*
 * Copyright (c) 2026, the blscomm authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <initializer_list>

namespace blscomm {

/// splitmix64. All model weights, synthetic batches and delay schedules
/// derive from this generator so that runs are reproducible bit-for-bit
/// across platforms and standard libraries (std:: distributions are not
/// pinned by the standard).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 significant bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Modulo bias is irrelevant at the
  /// magnitudes used here (n <= 10^6) and keeps the draw pinned.
  std::uint32_t next_below(std::uint32_t n) {
    return static_cast<std::uint32_t>(next() % n);
  }

  float next_uniform(float lo, float hi) {
    return lo + static_cast<float>(next_unit()) * (hi - lo);
  }

 private:
  std::uint64_t state_;
};

/// Folds a key tuple into one 64-bit stream seed by chaining splitmix
/// steps. Distinct tuples give independent streams for all practical
/// purposes.
inline std::uint64_t key_mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t acc = 0x8000000080003ADULL;
  for (std::uint64_t p : parts) {
    SplitMix64 g(acc ^ (p + 0x9E3779B97F4A7C15ULL));
    acc = g.next();
  }
  return acc;
}

/// Stream tags for the independent generator families.
enum RngStream : std::uint64_t {
  kRngEmbedding = 1,
  kRngMlp = 2,
  kRngDense = 3,
  kRngSparse = 4,
  kRngDelay = 5,
  kRngPayload = 6,
  kRngChaos = 7,
};

}  // namespace blscomm
