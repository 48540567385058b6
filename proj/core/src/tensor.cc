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

#include "xglk/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "xglk/error.h"

namespace xglk {

size_t ShapeSize(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

void CheckShape(const Shape& shape) {
  Require(!shape.empty(), ErrorKind::kShape, "tensor shape must be nonempty");
  for (size_t d : shape) {
    Require(d > 0, ErrorKind::kShape,
            "tensor extents must be positive, got " + ShapeString(shape));
  }
}

void CheckSameShape(const Tensor& a, const Tensor& b) {
  Require(a.shape() == b.shape(), ErrorKind::kShape,
          "shape mismatch " + ShapeString(a.shape()) + " vs " +
              ShapeString(b.shape()));
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  CheckShape(shape_);
  data_.assign(ShapeSize(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckShape(shape_);
  Require(ShapeSize(shape_) == data_.size(), ErrorKind::kShape,
          "shape " + ShapeString(shape_) + " does not match " +
              std::to_string(data_.size()) + " values");
}

Tensor Tensor::Vector(std::vector<double> data) {
  const size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::Filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::Reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::CheckFinite(const char* what) const {
  if (!AllFinite()) Fail(ErrorKind::kNumeric, std::string(what) + " is not finite");
}

Tensor& Tensor::operator+=(const Tensor& other) {
  CheckSameShape(*this, other);
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  CheckSameShape(*this, other);
  for (size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

double Dot(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), ErrorKind::kShape, "dot of unequal lengths");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double SquaredNorm(std::span<const double> a) { return Dot(a, a); }

double Norm2(std::span<const double> a) { return std::sqrt(SquaredNorm(a)); }

double Distance(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), ErrorKind::kShape, "distance of unequal lengths");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void Axpy(double a, std::span<const double> x, std::span<double> y) {
  Require(x.size() == y.size(), ErrorKind::kShape, "axpy of unequal lengths");
  for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  const double na = Norm2(a);
  const double nb = Norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return Dot(a, b) / (na * nb);
}

size_t ArgMax(std::span<const double> a) {
  Require(!a.empty(), ErrorKind::kShape, "argmax of empty vector");
  return static_cast<size_t>(std::max_element(a.begin(), a.end()) - a.begin());
}

Tensor Softmax(const Tensor& logits) {
  Require(logits.rank() == 1, ErrorKind::kShape,
          "softmax expects a rank-1 tensor, got " + ShapeString(logits.shape()));
  Require(logits.size() >= 2, ErrorKind::kShape,
          "softmax needs at least two classes");
  logits.CheckFinite("softmax input");
  const auto x = logits.data();
  const double m = *std::max_element(x.begin(), x.end());
  Tensor out(logits.shape());
  double z = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  for (size_t i = 0; i < x.size(); ++i) out[i] /= z;
  return out;
}

Tensor FiniteDifferenceGradient(const ScalarFunction& f, const Tensor& x,
                                double h) {
  Require(h > 0.0, ErrorKind::kContract, "finite-difference step must be > 0");
  Tensor grad = Tensor::ZerosLike(x);
  Tensor probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace xglk
