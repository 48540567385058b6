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

#include "xglk/model_zoo.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "xglk/error.h"
#include "xglk/rng.h"

namespace xglk {

ModelSpec MlpSpec(size_t input_dim, size_t num_classes, size_t hidden) {
  return {{input_dim},
          {LayerSpec::Dense(hidden), LayerSpec::Relu(), LayerSpec::Dense(hidden),
           LayerSpec::Relu(), LayerSpec::Dense(num_classes)}};
}

ModelSpec CnnSpec(size_t side, size_t channels, size_t num_classes) {
  return {{channels, side, side},
          {LayerSpec::Conv(8, 3), LayerSpec::Relu(), LayerSpec::MaxPool(),
           LayerSpec::Conv(16, 3), LayerSpec::Relu(), LayerSpec::MaxPool(),
           LayerSpec::Flatten(), LayerSpec::Dense(num_classes)}};
}

ModelGraph BuildModel(const ModelSpec& spec, uint64_t seed) {
  ModelGraph model = ModelGraph::FromSpec(spec);
  Require(model.num_classes() >= 2, ErrorKind::kSpec,
          "a model needs at least two output classes");
  Rng rng(seed, "init");
  auto params = model.mutable_params();
  for (size_t i = 0; i < model.layers().size(); ++i) {
    const Layer& l = model.layers()[i];
    if (l.weight_count == 0) continue;
    const size_t fan_in = l.weight_count / l.spec.units;
    Rng layer_rng = rng.Split(i);
    layer_rng.FillNormal(params.subspan(l.param_offset, l.weight_count),
                         std::sqrt(2.0 / static_cast<double>(fan_in)));
  }
  return model;
}

namespace {

class OptimizerState {
 public:
  OptimizerState(const TrainConfig& cfg, size_t n)
      : cfg_(cfg), m_(n, 0.0), v_(cfg.optimizer == OptimizerKind::kAdam ? n : 0, 0.0) {}

  void Step(std::span<double> params, std::span<const double> grad) {
    const double decay = cfg_.overfit_mode ? 0.0 : cfg_.weight_decay;
    if (cfg_.optimizer == OptimizerKind::kSgdMomentum) {
      for (size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + decay * params[i];
        m_[i] = cfg_.momentum * m_[i] + g;
        params[i] -= cfg_.learning_rate * m_[i];
      }
      return;
    }
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i] + decay * params[i];
      m_[i] = kBeta1 * m_[i] + (1 - kBeta1) * g;
      v_[i] = kBeta2 * v_[i] + (1 - kBeta2) * g * g;
      params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  uint64_t t_ = 0;
};

}  // namespace

TrainResult Optimize(ModelGraph& model, size_t n, const SampleLossFn& loss,
                     const TrainConfig& cfg) {
  Require(cfg.learning_rate > 0.0, ErrorKind::kContract,
          "learning rate must be positive");
  Require(cfg.batch_size >= 1, ErrorKind::kContract, "batch size must be >= 1");
  TrainResult result;
  if (cfg.epochs == 0) return result;
  Require(n > 0, ErrorKind::kContract, "cannot train on zero samples");
  OptimizerState opt(cfg, model.num_params());
  std::vector<double> grad(model.num_params());
  Rng rng(cfg.seed, "train-order");
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<size_t> order = rng.Split(epoch).Permutation(n);
    double total = 0.0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t end = std::min(n, start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      try {
        for (size_t j = start; j < end; ++j) total += loss(model, order[j], grad);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::kNumeric) throw;
        Fail(ErrorKind::kTraining, "training diverged at epoch " +
                                       std::to_string(epoch) + ": " + err.what());
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= scale;
      opt.Step(model.mutable_params(), grad);
    }
    const double mean = total / static_cast<double>(n);
    const bool params_ok = std::all_of(model.params().begin(), model.params().end(),
                                       [](double p) { return std::isfinite(p); });
    if (!std::isfinite(mean) || !params_ok) {
      Fail(ErrorKind::kTraining,
           "training diverged at epoch " + std::to_string(epoch));
    }
    result.epoch_loss.push_back(mean);
  }
  return result;
}

LossValue CrossEntropyLoss(const Tensor& logits, size_t label) {
  Require(label < logits.size(), ErrorKind::kIndex, "label out of range");
  Tensor p = Softmax(logits);
  const double loss = -std::log(std::max(p[label], 1e-300));
  p[label] -= 1.0;
  return {Tensor::Vector({loss}), std::move(p)};
}

TrainResult Train(ModelGraph& model, const Dataset& data, const TrainConfig& cfg) {
  if (cfg.epochs == 0) return {};
  Require(data.size() > 0, ErrorKind::kContract, "training set is empty");
  for (size_t y : data.labels) {
    Require(y < model.num_classes(), ErrorKind::kContract,
            "label outside the model's classes");
  }
  return Optimize(
      model, data.size(),
      [&](const ModelGraph& m, size_t i, std::span<double> grad) {
        const ParamGradient pg = GradParams(m, data.inputs[i], [&](const Tensor& z) {
          return CrossEntropyLoss(z, data.labels[i]);
        });
        for (size_t k = 0; k < grad.size(); ++k) grad[k] += pg.grad[k];
        return pg.loss;
      },
      cfg);
}

std::vector<size_t> Predict(const ModelGraph& model, const Dataset& data) {
  std::vector<size_t> out;
  out.reserve(data.size());
  for (const Tensor& x : data.inputs) out.push_back(ArgMax(Forward(model, x).data()));
  return out;
}

double EvaluateAccuracy(const ModelGraph& model, const Dataset& data) {
  Require(data.size() > 0, ErrorKind::kContract,
          "accuracy of an empty dataset is undefined");
  const std::vector<size_t> pred = Predict(model, data);
  size_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string ModelSpecToJson(const ModelSpec& spec) {
  nlohmann::json j;
  j["input_shape"] = spec.input_shape;
  j["layers"] = nlohmann::json::array();
  for (const LayerSpec& l : spec.layers) {
    nlohmann::json lj = {{"kind", LayerKindName(l.kind)}};
    if (l.kind == LayerKind::kDense || l.kind == LayerKind::kConv2D) {
      lj["units"] = l.units;
    }
    if (l.kind == LayerKind::kConv2D) lj["kernel"] = l.kernel;
    j["layers"].push_back(lj);
  }
  return j.dump();
}

ModelSpec ModelSpecFromJson(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    ModelSpec spec;
    spec.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = ParseLayerKind(lj.at("kind").get<std::string>());
      l.units = lj.value("units", size_t{0});
      l.kernel = lj.value("kernel", size_t{0});
      spec.layers.push_back(l);
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("bad model spec: ") + e.what());
  }
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "model files are written with native little-endian stores");

template <typename T>
void Put(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T Take(std::span<const unsigned char> bytes, size_t& pos) {
  Require(pos + sizeof(T) <= bytes.size(), ErrorKind::kFormat,
          "model file is truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<unsigned char> SerializeModel(const ModelGraph& model) {
  std::vector<unsigned char> out = {'X', 'G', 'L', 'K'};
  Put<uint32_t>(out, kModelFormatVersion);
  const std::string spec = ModelSpecToJson(model.spec());
  Put<uint32_t>(out, static_cast<uint32_t>(spec.size()));
  out.insert(out.end(), spec.begin(), spec.end());
  Put<uint64_t>(out, model.num_params());
  for (double p : model.params()) Put<double>(out, p);
  return out;
}

ModelGraph DeserializeModel(std::span<const unsigned char> bytes) {
  Require(bytes.size() >= 4 && std::memcmp(bytes.data(), "XGLK", 4) == 0,
          ErrorKind::kFormat, "not a model file (bad magic)");
  size_t pos = 4;
  const uint32_t version = Take<uint32_t>(bytes, pos);
  Require(version == kModelFormatVersion, ErrorKind::kFormat,
          "unsupported model format version " + std::to_string(version));
  const uint32_t spec_len = Take<uint32_t>(bytes, pos);
  Require(pos + spec_len <= bytes.size(), ErrorKind::kFormat,
          "model file is truncated");
  const std::string spec_text(bytes.begin() + pos, bytes.begin() + pos + spec_len);
  pos += spec_len;
  ModelGraph model = ModelGraph::FromSpec(ModelSpecFromJson(spec_text));
  const uint64_t count = Take<uint64_t>(bytes, pos);
  Require(count == model.num_params(), ErrorKind::kFormat,
          "parameter count " + std::to_string(count) + " does not match spec (" +
              std::to_string(model.num_params()) + ")");
  auto params = model.mutable_params();
  for (size_t i = 0; i < count; ++i) params[i] = Take<double>(bytes, pos);
  Require(pos == bytes.size(), ErrorKind::kFormat, "trailing bytes in model file");
  return model;
}

void SaveModel(const ModelGraph& model, const std::string& path) {
  const auto bytes = SerializeModel(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  Require(static_cast<bool>(out), ErrorKind::kIo, "write failed for " + path);
}

ModelGraph LoadModel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  const std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  return DeserializeModel(bytes);
}

}  // namespace xglk
