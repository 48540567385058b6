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

#ifndef XGLK_TENSOR_H_
#define XGLK_TENSOR_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace xglk {

using Shape = std::vector<size_t>;

size_t ShapeSize(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major array of doubles. Shapes are lists of positive extents and
// the element count always equals their product.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Vector(std::vector<double> data);
  static Tensor Vector(std::initializer_list<double> data) {
    return Vector(std::vector<double>(data));
  }
  static Tensor Filled(Shape shape, double value);
  static Tensor ZerosLike(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::vector<double>& mutable_values() { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }
  // Element of a rank-3 [c, h, w] tensor.
  double& at(size_t c, size_t h, size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double at(size_t c, size_t h, size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  Tensor Reshaped(Shape shape) const;

  bool AllFinite() const;
  // Raises a numeric error naming `what` if any entry is NaN or infinite.
  void CheckFinite(const char* what) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

double Dot(std::span<const double> a, std::span<const double> b);
double Norm2(std::span<const double> a);
double SquaredNorm(std::span<const double> a);
double Distance(std::span<const double> a, std::span<const double> b);
// y += a * x
void Axpy(double a, std::span<const double> x, std::span<double> y);
double CosineSimilarity(std::span<const double> a, std::span<const double> b);
size_t ArgMax(std::span<const double> a);

// Numerically stable softmax of a rank-1 tensor with at least two entries.
Tensor Softmax(const Tensor& logits);

using ScalarFunction = std::function<double(const Tensor&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
Tensor FiniteDifferenceGradient(const ScalarFunction& f, const Tensor& x,
                                double h);

}  // namespace xglk

#endif  // XGLK_TENSOR_H_
