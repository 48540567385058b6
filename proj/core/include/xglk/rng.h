// Copyright 2026 The xglk Authors.
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

#ifndef XGLK_RNG_H_
#define XGLK_RNG_H_

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace xglk {

// Counter-based generator. A stream is identified by a 64-bit key derived from
// (master seed, stream labels); the i-th output is a bijective mix of
// key + i * golden_gamma (the SplitMix64 finalizer). Splitting derives a child
// key from the parent key and a label, never from the parent's position, so
// parallel trials see the same numbers whatever order they are scheduled in.
class Rng {
 public:
  using result_type = uint64_t;

  explicit Rng(uint64_t seed) : key_(Mix(seed ^ 0x6a09e667f3bcc909ULL)) {}
  Rng(uint64_t seed, std::string_view stream) : Rng(Rng(seed).Split(stream)) {}

  Rng Split(std::string_view label) const;
  Rng Split(uint64_t index) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() { return Mix(key_ + kGamma * counter_++); }

  // Uniform on [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  // Uniform integer on [0, n).
  uint64_t UniformInt(uint64_t n);
  // Standard normal via Box-Muller; the second variate is cached.
  double Normal();

  void FillNormal(std::span<double> out, double stddev = 1.0);
  std::vector<size_t> Permutation(size_t n);

  uint64_t key() const { return key_; }

  static uint64_t Mix(uint64_t z);
  static uint64_t HashLabel(std::string_view label);

 private:
  struct FromKey {};
  Rng(FromKey, uint64_t key) : key_(key) {}

  static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  uint64_t key_;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace xglk

#endif  // XGLK_RNG_H_
