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

#ifndef XGLK_MODEL_H_
#define XGLK_MODEL_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xglk/tensor.h"

namespace xglk {

// Fixed layer vocabulary. Convolutions are stride 1 with zero "same" padding;
// pools are 2x2 with stride 2 and drop a trailing odd row/column.
enum class LayerKind { kDense, kConv2D, kRelu, kMaxPool2, kAvgPool2, kFlatten };

const char* LayerKindName(LayerKind kind);
LayerKind ParseLayerKind(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  size_t units = 0;   // dense outputs or conv output channels
  size_t kernel = 0;  // conv kernel side (odd)

  static LayerSpec Dense(size_t units) { return {LayerKind::kDense, units, 0}; }
  static LayerSpec Conv(size_t channels, size_t kernel) {
    return {LayerKind::kConv2D, channels, kernel};
  }
  static LayerSpec Relu() { return {LayerKind::kRelu, 0, 0}; }
  static LayerSpec MaxPool() { return {LayerKind::kMaxPool2, 0, 0}; }
  static LayerSpec AvgPool() { return {LayerKind::kAvgPool2, 0, 0}; }
  static LayerSpec Flatten() { return {LayerKind::kFlatten, 0, 0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Shape in_shape;
  Shape out_shape;
  size_t param_offset = 0;
  size_t weight_count = 0;
  size_t bias_count = 0;
};

// A sequential network with all parameters in one flat vector. Parameter
// order is layer order, and within a layer weights (row-major, dense as
// [out][in], conv as [out][in][ky][kx]) followed by biases.
class ModelGraph {
 public:
  // Validates that the layers compose and allocates zeroed parameters.
  static ModelGraph FromSpec(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const Shape& input_shape() const { return spec_.input_shape; }
  const Shape& output_shape() const;
  size_t num_classes() const { return ShapeSize(output_shape()); }
  size_t num_params() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }
  std::span<const double> weights(size_t layer) const;
  std::span<const double> bias(size_t layer) const;

  bool HasConv() const;

 private:
  ModelSpec spec_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

enum class ScoreKind { kLogit, kSoftmax };

// Names the scalar output an explanation or gradient is taken of: either the
// raw logit F(x)_i or the softmax probability f(x)_i.
struct ScoreSelector {
  ScoreKind kind = ScoreKind::kSoftmax;
  size_t class_index = 0;

  friend bool operator==(const ScoreSelector&, const ScoreSelector&) = default;
};

const char* ScoreKindName(ScoreKind kind);
ScoreKind ParseScoreKind(const std::string& name);

// Activations of one forward pass: acts[0] is the input, acts[i + 1] the
// output of layer i.
struct Tape {
  std::vector<Tensor> acts;
  const Tensor& logits() const { return acts.back(); }
};

Tape Record(const ModelGraph& model, const Tensor& x);
Tensor Forward(const ModelGraph& model, const Tensor& x);

double SelectedScore(const Tensor& logits, const ScoreSelector& sel);
// d score / d logits.
Tensor ScoreSeed(const Tensor& logits, const ScoreSelector& sel);

enum class ReluRule {
  kStandard,
  // Upstream gradient passes only where the pre-activation and the upstream
  // gradient are both positive.
  kGuided,
};

struct BackwardOptions {
  ReluRule relu_rule = ReluRule::kStandard;
  // The seed is the adjoint of acts[from_layer]; npos means the logits.
  size_t from_layer = static_cast<size_t>(-1);
  // Propagation stops at acts[to_layer].
  size_t to_layer = 0;
  // When nonempty (num_params long), parameter gradients are added into it.
  std::span<double> param_grad;
};

// Reverse pass over a recorded tape. Returns the adjoint of acts[to_layer].
Tensor Backward(const ModelGraph& model, const Tape& tape, const Tensor& seed,
                const BackwardOptions& options = {});

Tensor GradInput(const ModelGraph& model, const Tensor& x,
                 const ScoreSelector& sel,
                 ReluRule relu_rule = ReluRule::kStandard);

struct LossValue {
  Tensor value;  // must hold exactly one entry
  Tensor grad;   // d loss / d logits
};
using LossFn = std::function<LossValue(const Tensor& logits)>;

struct ParamGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

ParamGradient GradParams(const ModelGraph& model, const Tensor& x,
                         const LossFn& loss);

// Per-ReLU masks of the guided backward rule for `sel` at the recorded point;
// entries are 1 where the guided rule passes gradient. Layers that are not
// ReLUs get empty tensors.
std::vector<Tensor> GuidedReluMasks(const ModelGraph& model, const Tape& tape,
                                    const ScoreSelector& sel);

struct DualOptions {
  // The tangent is injected at acts[start_layer].
  size_t start_layer = 0;
  // Optional per-layer ReLU masks for the tangent path (guided backprop).
  const std::vector<Tensor>* relu_tangent_masks = nullptr;
};

struct DualGradient {
  double value = 0.0;           // <d score / d acts[start], tangent>
  std::vector<double> params;   // its gradient w.r.t. parameters after start
  Tensor start_adjoint;         // its gradient w.r.t. acts[start]
};

// Forward-over-reverse: the directional derivative of the selected score along
// `tangent` and its gradients. This is the vector-Jacobian product of the
// input-gradient map, which is what explanation-matching losses need.
DualGradient DirectionalScoreGradient(const ModelGraph& model, const Tape& tape,
                                      const ScoreSelector& sel,
                                      const Tensor& tangent,
                                      const DualOptions& options = {});

}  // namespace xglk

#endif  // XGLK_MODEL_H_
