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

#include "xglk/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "xglk/error.h"
#include "xglk/rng.h"

namespace xglk {

const char* SplitName(Split split) {
  switch (split) {
    case Split::kPrivateTrain:
      return "private_train";
    case Split::kPublicPool:
      return "public_pool";
    case Split::kTest:
      return "test";
    case Split::kCalibration:
      return "calibration";
  }
  return "?";
}

Dataset Dataset::Subset(std::span<const size_t> rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.inputs.reserve(rows.size());
  for (size_t r : rows) {
    Require(r < size(), ErrorKind::kIndex, "dataset row out of range");
    out.inputs.push_back(inputs[r]);
    out.labels.push_back(labels[r]);
    out.ids.push_back(ids[r]);
  }
  return out;
}

void Dataset::Validate() const {
  Require(labels.size() == inputs.size() && ids.size() == inputs.size(),
          ErrorKind::kContract, "dataset columns have different lengths");
  Require(num_classes >= 2, ErrorKind::kContract, "dataset needs >= 2 classes");
  for (size_t i = 0; i < size(); ++i) {
    Require(labels[i] < num_classes, ErrorKind::kContract,
            "label out of range at row " + std::to_string(i));
    Require(inputs[i].shape() == inputs[0].shape(), ErrorKind::kShape,
            "inconsistent input shapes");
  }
  std::set<size_t> seen;
  for (const auto& s : splits) {
    for (size_t r : s) {
      Require(r < size(), ErrorKind::kContract, "split row out of range");
      Require(seen.insert(r).second, ErrorKind::kContract,
              "splits overlap at row " + std::to_string(r));
    }
  }
}

void AssignSplits(Dataset& data, const SplitSizes& sizes, uint64_t seed) {
  const size_t total = sizes.private_train + sizes.public_pool + sizes.test +
                       sizes.calibration;
  Require(total <= data.size(), ErrorKind::kContract,
          "split sizes exceed dataset size");
  Rng rng(seed, "splits");
  const std::vector<size_t> perm = rng.Permutation(data.size());
  const std::array<size_t, kNumSplits> counts = {
      sizes.private_train, sizes.public_pool, sizes.test, sizes.calibration};
  size_t pos = 0;
  for (size_t s = 0; s < kNumSplits; ++s) {
    data.splits[s].assign(perm.begin() + pos, perm.begin() + pos + counts[s]);
    std::sort(data.splits[s].begin(), data.splits[s].end());
    pos += counts[s];
  }
}

Dataset GenBlobs(size_t n_classes, size_t dim, size_t n_per_class,
                 double spread, uint64_t seed) {
  Require(n_classes >= 2, ErrorKind::kContract, "blobs need >= 2 classes");
  Require(dim >= 1, ErrorKind::kContract, "blobs need dim >= 1");
  Rng centers_rng(seed, "blob-centers");
  std::vector<std::vector<double>> centers(n_classes, std::vector<double>(dim));
  for (auto& c : centers) centers_rng.FillNormal(c);
  Rng points_rng(seed, "blob-points");
  Dataset data;
  data.num_classes = n_classes;
  for (size_t k = 0; k < n_classes; ++k) {
    for (size_t i = 0; i < n_per_class; ++i) {
      std::vector<double> x(dim);
      for (size_t d = 0; d < dim; ++d) {
        x[d] = centers[k][d] + spread * points_rng.Normal();
      }
      data.ids.push_back(data.inputs.size());
      data.inputs.push_back(Tensor::Vector(std::move(x)));
      data.labels.push_back(k);
    }
  }
  return data;
}

namespace {

struct Segment {
  double u0, v0, u1, v1;
};

// a b c d e f g in glyph coordinates (u right, v down, both in [0, 1]).
constexpr Segment kSegments[7] = {
    {0, 0, 1, 0},     {1, 0, 1, 0.5}, {1, 0.5, 1, 1}, {0, 1, 1, 1},
    {0, 0.5, 0, 1},   {0, 0, 0, 0.5}, {0, 0.5, 1, 0.5},
};

// Bit i set means segment i ("abcdefg"[i]) is lit.
constexpr unsigned kDigitSegments[10] = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
};

double SegmentDistance(double px, double py, double x0, double y0, double x1,
                       double y1) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = x0 + t * dx - px, ey = y0 + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Dataset GenDigits(size_t side, size_t n_per_class, uint64_t seed, double pixel_noise) {
  Require(side >= 8, ErrorKind::kContract, "digit canvas side must be >= 8");
  Require(pixel_noise >= 0.0, ErrorKind::kContract, "pixel noise must be >= 0");
  Rng rng(seed, "digits");
  Dataset data;
  data.num_classes = 10;
  const double s = static_cast<double>(side);
  for (size_t digit = 0; digit < 10; ++digit) {
    for (size_t i = 0; i < n_per_class; ++i) {
      const double gw = s * (0.36 + 0.10 * rng.Uniform());
      const double gh = s * (0.58 + 0.12 * rng.Uniform());
      const double x0 = (s - gw) / 2 + (rng.Uniform() - 0.5) * 0.18 * s;
      const double y0 = (s - gh) / 2 + (rng.Uniform() - 0.5) * 0.14 * s;
      const double slant = (rng.Uniform() - 0.5) * 0.3;
      const double width = 0.7 + 0.6 * rng.Uniform();
      const double ink = 0.75 + 0.25 * rng.Uniform();
      Tensor img({1, side, side});
      for (size_t seg = 0; seg < 7; ++seg) {
        if (!((kDigitSegments[digit] >> seg) & 1u)) continue;
        const Segment& g = kSegments[seg];
        const double ax = x0 + g.u0 * gw + slant * (0.5 - g.v0) * gh;
        const double ay = y0 + g.v0 * gh;
        const double bx = x0 + g.u1 * gw + slant * (0.5 - g.v1) * gh;
        const double by = y0 + g.v1 * gh;
        for (size_t y = 0; y < side; ++y) {
          for (size_t x = 0; x < side; ++x) {
            const double d = SegmentDistance(x + 0.5, y + 0.5, ax, ay, bx, by);
            const double v = std::clamp(width + 0.5 - d, 0.0, 1.0) * ink;
            img.at(0, y, x) = std::max(img.at(0, y, x), v);
          }
        }
      }
      for (double& p : img.mutable_values()) {
        p = std::clamp(p + pixel_noise * rng.Normal(), 0.0, 1.0);
      }
      data.ids.push_back(data.inputs.size());
      data.inputs.push_back(std::move(img));
      data.labels.push_back(digit);
    }
  }
  return data;
}

namespace {

std::vector<unsigned char> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

uint32_t ReadBigEndian32(const std::vector<unsigned char>& b, size_t pos,
                         const std::string& path) {
  Require(pos + 4 <= b.size(), ErrorKind::kFormat, path + " is truncated");
  return (uint32_t{b[pos]} << 24) | (uint32_t{b[pos + 1]} << 16) |
         (uint32_t{b[pos + 2]} << 8) | uint32_t{b[pos + 3]};
}

}  // namespace

Dataset LoadIdx(const std::string& images_path, const std::string& labels_path) {
  const auto img = ReadFile(images_path);
  const auto lab = ReadFile(labels_path);
  const uint32_t img_magic = ReadBigEndian32(img, 0, images_path);
  Require(img_magic == 0x00000803, ErrorKind::kFormat,
          images_path + ": bad image magic");
  const uint32_t lab_magic = ReadBigEndian32(lab, 0, labels_path);
  Require(lab_magic == 0x00000801, ErrorKind::kFormat,
          labels_path + ": bad label magic");
  const uint32_t n = ReadBigEndian32(img, 4, images_path);
  const uint32_t rows = ReadBigEndian32(img, 8, images_path);
  const uint32_t cols = ReadBigEndian32(img, 12, images_path);
  const uint32_t n_labels = ReadBigEndian32(lab, 4, labels_path);
  Require(n == n_labels, ErrorKind::kFormat,
          "image count " + std::to_string(n) + " != label count " +
              std::to_string(n_labels));
  Require(rows > 0 && cols > 0, ErrorKind::kFormat, "zero image dimension");
  const size_t pixels = size_t{rows} * cols;
  Require(img.size() >= 16 + size_t{n} * pixels, ErrorKind::kFormat,
          images_path + " is truncated");
  Require(lab.size() >= 8 + size_t{n}, ErrorKind::kFormat,
          labels_path + " is truncated");
  Dataset data;
  size_t max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    std::vector<double> px(pixels);
    for (size_t p = 0; p < pixels; ++p) px[p] = img[16 + i * pixels + p] / 255.0;
    data.inputs.emplace_back(Shape{1, rows, cols}, std::move(px));
    data.labels.push_back(lab[8 + i]);
    data.ids.push_back(i);
    max_label = std::max<size_t>(max_label, lab[8 + i]);
  }
  data.num_classes = std::max<size_t>(2, max_label + 1);
  return data;
}

}  // namespace xglk
