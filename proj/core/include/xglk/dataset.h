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

#ifndef XGLK_DATASET_H_
#define XGLK_DATASET_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xglk/tensor.h"

namespace xglk {

enum class Split { kPrivateTrain = 0, kPublicPool, kTest, kCalibration };
inline constexpr size_t kNumSplits = 4;
const char* SplitName(Split split);

struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<size_t> labels;
  std::vector<uint64_t> ids;
  size_t num_classes = 0;
  // Row indices belonging to each split; splits are disjoint.
  std::array<std::vector<size_t>, kNumSplits> splits;

  size_t size() const { return inputs.size(); }
  const std::vector<size_t>& split(Split s) const {
    return splits[static_cast<size_t>(s)];
  }
  // Copies the listed rows into a new dataset (ids preserved, no splits).
  Dataset Subset(std::span<const size_t> rows) const;
  Dataset SplitData(Split s) const { return Subset(split(s)); }

  // Raises on label/shape/split inconsistencies.
  void Validate() const;
};

struct SplitSizes {
  size_t private_train = 0;
  size_t public_pool = 0;
  size_t test = 0;
  size_t calibration = 0;
};

// Shuffles rows with `seed` and assigns consecutive blocks to the splits.
void AssignSplits(Dataset& data, const SplitSizes& sizes, uint64_t seed);

// Gaussian clusters: centers ~ N(0, I), points = center + spread * N(0, I).
Dataset GenBlobs(size_t n_classes, size_t dim, size_t n_per_class,
                 double spread, uint64_t seed);

// Procedurally rendered seven-segment style glyphs for the ten digits on a
// side x side canvas with random placement, stroke width and additive
// Gaussian pixel noise of std `pixel_noise`. Pixels lie in [0, 1].
Dataset GenDigits(size_t side, size_t n_per_class, uint64_t seed,
                  double pixel_noise = 0.05);

// IDX files (big-endian): images magic 0x00000803 with [count, rows, cols],
// labels magic 0x00000801 with [count]. Pixels are scaled to [0, 1] and the
// images come back as [1, rows, cols] tensors.
Dataset LoadIdx(const std::string& images_path, const std::string& labels_path);

}  // namespace xglk

#endif  // XGLK_DATASET_H_
