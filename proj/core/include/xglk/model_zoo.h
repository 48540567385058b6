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

#ifndef XGLK_MODEL_ZOO_H_
#define XGLK_MODEL_ZOO_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xglk/dataset.h"
#include "xglk/model.h"

namespace xglk {

// 2x`hidden` ReLU MLP for vector data.
ModelSpec MlpSpec(size_t input_dim, size_t num_classes, size_t hidden = 128);
// conv8-relu-pool-conv16-relu-pool-dense for [channels, side, side] images.
ModelSpec CnnSpec(size_t side, size_t channels, size_t num_classes);

// Deterministic He-normal initialization (std sqrt(2 / fan_in)), zero biases.
// Requires at least two output classes.
ModelGraph BuildModel(const ModelSpec& spec, uint64_t seed);

enum class OptimizerKind { kSgdMomentum, kAdam };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  size_t batch_size = 32;
  size_t epochs = 10;
  double weight_decay = 0.0;
  double momentum = 0.9;
  uint64_t seed = 0;
  // Forces weight decay off; used to produce memorizing victims.
  bool overfit_mode = false;
};

// Per-sample loss: returns the loss and adds its parameter gradient to `grad`.
using SampleLossFn = std::function<double(const ModelGraph& model, size_t index,
                                          std::span<double> grad)>;

struct TrainResult {
  std::vector<double> epoch_loss;  // mean sample loss seen during each epoch
};

// Minibatch optimization of an arbitrary per-sample loss over `n` samples.
TrainResult Optimize(ModelGraph& model, size_t n, const SampleLossFn& loss,
                     const TrainConfig& cfg);

LossValue CrossEntropyLoss(const Tensor& logits, size_t label);

// Cross-entropy training on labelled data.
TrainResult Train(ModelGraph& model, const Dataset& data, const TrainConfig& cfg);

double EvaluateAccuracy(const ModelGraph& model, const Dataset& data);
std::vector<size_t> Predict(const ModelGraph& model, const Dataset& data);

std::string ModelSpecToJson(const ModelSpec& spec);
ModelSpec ModelSpecFromJson(const std::string& json);

// Binary model file: "XGLK", u32 format version, u32 spec length, spec JSON,
// u64 parameter count, parameters as little-endian IEEE-754 doubles.
inline constexpr uint32_t kModelFormatVersion = 1;
std::vector<unsigned char> SerializeModel(const ModelGraph& model);
ModelGraph DeserializeModel(std::span<const unsigned char> bytes);
void SaveModel(const ModelGraph& model, const std::string& path);
ModelGraph LoadModel(const std::string& path);

}  // namespace xglk

#endif  // XGLK_MODEL_ZOO_H_
