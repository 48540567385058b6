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

#include "xglk/model.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "xglk/error.h"

namespace xglk {

const char* LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense:
      return "dense";
    case LayerKind::kConv2D:
      return "conv2d";
    case LayerKind::kRelu:
      return "relu";
    case LayerKind::kMaxPool2:
      return "maxpool2";
    case LayerKind::kAvgPool2:
      return "avgpool2";
    case LayerKind::kFlatten:
      return "flatten";
  }
  return "?";
}

LayerKind ParseLayerKind(const std::string& name) {
  for (LayerKind k : {LayerKind::kDense, LayerKind::kConv2D, LayerKind::kRelu,
                      LayerKind::kMaxPool2, LayerKind::kAvgPool2,
                      LayerKind::kFlatten}) {
    if (name == LayerKindName(k)) return k;
  }
  Fail(ErrorKind::kSpec, "unknown layer kind '" + name + "'");
}

const char* ScoreKindName(ScoreKind kind) {
  return kind == ScoreKind::kLogit ? "logit" : "softmax";
}

ScoreKind ParseScoreKind(const std::string& name) {
  if (name == "logit") return ScoreKind::kLogit;
  if (name == "softmax") return ScoreKind::kSoftmax;
  Fail(ErrorKind::kConfig, "unknown score kind '" + name + "'");
}

ModelGraph ModelGraph::FromSpec(const ModelSpec& spec) {
  ModelGraph g;
  g.spec_ = spec;
  Require(!spec.input_shape.empty(), ErrorKind::kSpec, "empty input shape");
  for (size_t d : spec.input_shape) {
    Require(d > 0, ErrorKind::kSpec, "input extents must be positive");
  }
  Shape shape = spec.input_shape;
  size_t offset = 0;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& ls = spec.layers[i];
    Layer layer;
    layer.spec = ls;
    layer.in_shape = shape;
    layer.param_offset = offset;
    const std::string where = "layer " + std::to_string(i) + " (" +
                              LayerKindName(ls.kind) + ") on input " +
                              ShapeString(shape);
    switch (ls.kind) {
      case LayerKind::kDense:
        Require(shape.size() == 1, ErrorKind::kSpec, where + " needs rank 1");
        Require(ls.units > 0, ErrorKind::kSpec, where + " needs units > 0");
        layer.weight_count = ls.units * shape[0];
        layer.bias_count = ls.units;
        shape = {ls.units};
        break;
      case LayerKind::kConv2D:
        Require(shape.size() == 3, ErrorKind::kSpec, where + " needs rank 3");
        Require(ls.units > 0, ErrorKind::kSpec, where + " needs channels > 0");
        Require(ls.kernel % 2 == 1, ErrorKind::kSpec,
                where + " needs an odd kernel");
        layer.weight_count = ls.units * shape[0] * ls.kernel * ls.kernel;
        layer.bias_count = ls.units;
        shape = {ls.units, shape[1], shape[2]};
        break;
      case LayerKind::kRelu:
        break;
      case LayerKind::kMaxPool2:
      case LayerKind::kAvgPool2:
        Require(shape.size() == 3 && shape[1] >= 2 && shape[2] >= 2,
                ErrorKind::kSpec, where + " needs rank 3 with sides >= 2");
        shape = {shape[0], shape[1] / 2, shape[2] / 2};
        break;
      case LayerKind::kFlatten:
        shape = {ShapeSize(shape)};
        break;
    }
    layer.out_shape = shape;
    offset += layer.weight_count + layer.bias_count;
    g.layers_.push_back(std::move(layer));
  }
  Require(shape.size() == 1, ErrorKind::kSpec,
          "network output must be rank 1, got " + ShapeString(shape));
  g.params_.assign(offset, 0.0);
  return g;
}

const Shape& ModelGraph::output_shape() const {
  return layers_.empty() ? spec_.input_shape : layers_.back().out_shape;
}

std::span<const double> ModelGraph::weights(size_t layer) const {
  const Layer& l = layers_.at(layer);
  return std::span<const double>(params_).subspan(l.param_offset,
                                                  l.weight_count);
}

std::span<const double> ModelGraph::bias(size_t layer) const {
  const Layer& l = layers_.at(layer);
  return std::span<const double>(params_).subspan(
      l.param_offset + l.weight_count, l.bias_count);
}

bool ModelGraph::HasConv() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const Layer& l) {
    return l.spec.kind == LayerKind::kConv2D;
  });
}

namespace {

// How a ReLU treats signals flowing through it in a given pass.
struct ReluMode {
  ReluRule rule = ReluRule::kStandard;
  const Tensor* mask = nullptr;  // explicit mask overrides the rule
};

// Linear part of a layer (no bias) applied to `in`, with ReLU and max-pool
// routing decided by the primal activation `primal`.
Tensor ApplyLinear(const ModelGraph& model, size_t li, const Tensor& primal,
                   const Tensor& in, const Tensor* relu_mask) {
  const Layer& layer = model.layers()[li];
  const auto w = model.weights(li);
  Tensor out(layer.out_shape);
  switch (layer.spec.kind) {
    case LayerKind::kDense: {
      const size_t n_in = layer.in_shape[0];
      for (size_t o = 0; o < layer.spec.units; ++o) {
        const double* row = w.data() + o * n_in;
        double s = 0.0;
        for (size_t i = 0; i < n_in; ++i) s += row[i] * in[i];
        out[o] = s;
      }
      break;
    }
    case LayerKind::kConv2D: {
      const size_t cin = layer.in_shape[0], h = layer.in_shape[1],
                   wd = layer.in_shape[2], k = layer.spec.kernel;
      const long pad = static_cast<long>(k / 2);
      for (size_t o = 0; o < layer.spec.units; ++o) {
        for (size_t c = 0; c < cin; ++c) {
          const double* kern = w.data() + (o * cin + c) * k * k;
          for (size_t ky = 0; ky < k; ++ky) {
            for (size_t kx = 0; kx < k; ++kx) {
              const double wv = kern[ky * k + kx];
              if (wv == 0.0) continue;
              const long dy = static_cast<long>(ky) - pad;
              const long dx = static_cast<long>(kx) - pad;
              const size_t y0 = dy < 0 ? static_cast<size_t>(-dy) : 0;
              const size_t y1 = dy > 0 ? h - static_cast<size_t>(dy) : h;
              const size_t x0 = dx < 0 ? static_cast<size_t>(-dx) : 0;
              const size_t x1 = dx > 0 ? wd - static_cast<size_t>(dx) : wd;
              for (size_t y = y0; y < y1; ++y) {
                const double* src =
                    &in.data()[(c * h + static_cast<size_t>(y + dy)) * wd];
                double* dst = &out.data()[(o * h + y) * wd];
                for (size_t x = x0; x < x1; ++x) {
                  dst[x] += wv * src[static_cast<long>(x) + dx];
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::kRelu:
      for (size_t i = 0; i < in.size(); ++i) {
        const bool pass = relu_mask ? (*relu_mask)[i] > 0.0 : primal[i] > 0.0;
        out[i] = pass ? in[i] : 0.0;
      }
      break;
    case LayerKind::kMaxPool2:
    case LayerKind::kAvgPool2: {
      const bool is_max = layer.spec.kind == LayerKind::kMaxPool2;
      const size_t c = layer.out_shape[0], oh = layer.out_shape[1],
                   ow = layer.out_shape[2];
      for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < oh; ++y) {
          for (size_t x = 0; x < ow; ++x) {
            if (is_max) {
              size_t by = 2 * y, bx = 2 * x;
              double best = primal.at(ch, by, bx);
              for (size_t dy = 0; dy < 2; ++dy) {
                for (size_t dx = 0; dx < 2; ++dx) {
                  const double v = primal.at(ch, 2 * y + dy, 2 * x + dx);
                  if (v > best) {
                    best = v;
                    by = 2 * y + dy;
                    bx = 2 * x + dx;
                  }
                }
              }
              out.at(ch, y, x) = in.at(ch, by, bx);
            } else {
              out.at(ch, y, x) =
                  0.25 * (in.at(ch, 2 * y, 2 * x) + in.at(ch, 2 * y, 2 * x + 1) +
                          in.at(ch, 2 * y + 1, 2 * x) +
                          in.at(ch, 2 * y + 1, 2 * x + 1));
            }
          }
        }
      }
      break;
    }
    case LayerKind::kFlatten:
      out = in.Reshaped(layer.out_shape);
      break;
  }
  return out;
}

Tensor ForwardLayer(const ModelGraph& model, size_t li, const Tensor& in) {
  Tensor out = ApplyLinear(model, li, in, in, nullptr);
  const auto b = model.bias(li);
  if (!b.empty()) {
    const size_t per = out.size() / b.size();
    for (size_t o = 0; o < b.size(); ++o) {
      for (size_t j = 0; j < per; ++j) out[o * per + j] += b[o];
    }
  }
  return out;
}

// Transposed linear map. `weights_input` is what multiplies the weights in the
// forward direction (the primal activation or the tangent); parameter
// gradients are accumulated into `param_grad` when it is nonempty.
Tensor BackwardLayer(const ModelGraph& model, size_t li, const Tensor& primal,
                     const Tensor& weights_input, const Tensor& upstream,
                     const ReluMode& relu, std::span<double> param_grad,
                     bool include_bias) {
  const Layer& layer = model.layers()[li];
  const auto w = model.weights(li);
  Tensor down(layer.in_shape);
  double* wg = param_grad.empty() ? nullptr
                                  : param_grad.data() + layer.param_offset;
  double* bg = wg ? wg + layer.weight_count : nullptr;
  switch (layer.spec.kind) {
    case LayerKind::kDense: {
      const size_t n_in = layer.in_shape[0];
      for (size_t o = 0; o < layer.spec.units; ++o) {
        const double u = upstream[o];
        if (u == 0.0) continue;
        const double* row = w.data() + o * n_in;
        for (size_t i = 0; i < n_in; ++i) down[i] += row[i] * u;
        if (wg) {
          double* grow = wg + o * n_in;
          for (size_t i = 0; i < n_in; ++i) grow[i] += u * weights_input[i];
          if (include_bias) bg[o] += u;
        }
      }
      break;
    }
    case LayerKind::kConv2D: {
      const size_t cin = layer.in_shape[0], h = layer.in_shape[1],
                   wd = layer.in_shape[2], k = layer.spec.kernel;
      const long pad = static_cast<long>(k / 2);
      for (size_t o = 0; o < layer.spec.units; ++o) {
        if (bg && include_bias) {
          double s = 0.0;
          for (size_t j = 0; j < h * wd; ++j) s += upstream[o * h * wd + j];
          bg[o] += s;
        }
        for (size_t c = 0; c < cin; ++c) {
          const double* kern = w.data() + (o * cin + c) * k * k;
          double* gkern = wg ? wg + (o * cin + c) * k * k : nullptr;
          for (size_t ky = 0; ky < k; ++ky) {
            for (size_t kx = 0; kx < k; ++kx) {
              const double wv = kern[ky * k + kx];
              const long dy = static_cast<long>(ky) - pad;
              const long dx = static_cast<long>(kx) - pad;
              const size_t y0 = dy < 0 ? static_cast<size_t>(-dy) : 0;
              const size_t y1 = dy > 0 ? h - static_cast<size_t>(dy) : h;
              const size_t x0 = dx < 0 ? static_cast<size_t>(-dx) : 0;
              const size_t x1 = dx > 0 ? wd - static_cast<size_t>(dx) : wd;
              double gsum = 0.0;
              for (size_t y = y0; y < y1; ++y) {
                const double* up = &upstream.data()[(o * h + y) * wd];
                const size_t row = (c * h + static_cast<size_t>(y + dy)) * wd;
                double* dst = &down.data()[row];
                const double* src = &weights_input.data()[row];
                for (size_t x = x0; x < x1; ++x) {
                  const long sx = static_cast<long>(x) + dx;
                  dst[sx] += wv * up[x];
                  gsum += up[x] * src[sx];
                }
              }
              if (gkern) gkern[ky * k + kx] += gsum;
            }
          }
        }
      }
      break;
    }
    case LayerKind::kRelu:
      for (size_t i = 0; i < upstream.size(); ++i) {
        bool pass;
        if (relu.mask) {
          pass = (*relu.mask)[i] > 0.0;
        } else {
          pass = primal[i] > 0.0;
          if (relu.rule == ReluRule::kGuided) pass = pass && upstream[i] > 0.0;
        }
        down[i] = pass ? upstream[i] : 0.0;
      }
      break;
    case LayerKind::kMaxPool2:
    case LayerKind::kAvgPool2: {
      const bool is_max = layer.spec.kind == LayerKind::kMaxPool2;
      const size_t c = layer.out_shape[0], oh = layer.out_shape[1],
                   ow = layer.out_shape[2];
      for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < oh; ++y) {
          for (size_t x = 0; x < ow; ++x) {
            const double u = upstream.at(ch, y, x);
            if (is_max) {
              size_t by = 2 * y, bx = 2 * x;
              double best = primal.at(ch, by, bx);
              for (size_t dy = 0; dy < 2; ++dy) {
                for (size_t dx = 0; dx < 2; ++dx) {
                  const double v = primal.at(ch, 2 * y + dy, 2 * x + dx);
                  if (v > best) {
                    best = v;
                    by = 2 * y + dy;
                    bx = 2 * x + dx;
                  }
                }
              }
              down.at(ch, by, bx) += u;
            } else {
              for (size_t dy = 0; dy < 2; ++dy) {
                for (size_t dx = 0; dx < 2; ++dx) {
                  down.at(ch, 2 * y + dy, 2 * x + dx) += 0.25 * u;
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::kFlatten:
      down = upstream.Reshaped(layer.in_shape);
      break;
  }
  return down;
}

void CheckInput(const ModelGraph& model, const Tensor& x) {
  Require(x.shape() == model.input_shape(), ErrorKind::kShape,
          "input shape " + ShapeString(x.shape()) + " does not match model " +
              ShapeString(model.input_shape()));
}

void CheckSelector(const ModelGraph& model, const ScoreSelector& sel) {
  Require(sel.class_index < model.num_classes(), ErrorKind::kIndex,
          "class index " + std::to_string(sel.class_index) + " out of range [0," +
              std::to_string(model.num_classes()) + ")");
}

}  // namespace

Tape Record(const ModelGraph& model, const Tensor& x) {
  CheckInput(model, x);
  Tape tape;
  tape.acts.reserve(model.layers().size() + 1);
  tape.acts.push_back(x);
  for (size_t i = 0; i < model.layers().size(); ++i) {
    tape.acts.push_back(ForwardLayer(model, i, tape.acts.back()));
  }
  tape.acts.back().CheckFinite("model output");
  return tape;
}

Tensor Forward(const ModelGraph& model, const Tensor& x) {
  CheckInput(model, x);
  Tensor a = x;
  for (size_t i = 0; i < model.layers().size(); ++i) {
    a = ForwardLayer(model, i, a);
  }
  a.CheckFinite("model output");
  return a;
}

double SelectedScore(const Tensor& logits, const ScoreSelector& sel) {
  Require(sel.class_index < logits.size(), ErrorKind::kIndex,
          "class index out of range");
  if (sel.kind == ScoreKind::kLogit) return logits[sel.class_index];
  return Softmax(logits)[sel.class_index];
}

Tensor ScoreSeed(const Tensor& logits, const ScoreSelector& sel) {
  Require(sel.class_index < logits.size(), ErrorKind::kIndex,
          "class index out of range");
  Tensor seed(logits.shape());
  const size_t t = sel.class_index;
  if (sel.kind == ScoreKind::kLogit) {
    seed[t] = 1.0;
    return seed;
  }
  const Tensor p = Softmax(logits);
  for (size_t j = 0; j < p.size(); ++j) {
    seed[j] = p[t] * ((j == t ? 1.0 : 0.0) - p[j]);
  }
  return seed;
}

Tensor Backward(const ModelGraph& model, const Tape& tape, const Tensor& seed,
                const BackwardOptions& options) {
  const size_t n_layers = model.layers().size();
  const size_t from =
      options.from_layer == static_cast<size_t>(-1) ? n_layers
                                                    : options.from_layer;
  Require(from <= n_layers && options.to_layer <= from, ErrorKind::kContract,
          "invalid backward layer range");
  Require(tape.acts.size() == n_layers + 1, ErrorKind::kContract,
          "tape does not belong to this model");
  Require(seed.shape() == tape.acts[from].shape(), ErrorKind::kShape,
          "backward seed shape mismatch");
  Require(options.param_grad.empty() ||
              options.param_grad.size() == model.num_params(),
          ErrorKind::kShape, "parameter gradient buffer has wrong size");
  Tensor adj = seed;
  const ReluMode relu{options.relu_rule, nullptr};
  for (size_t i = from; i-- > options.to_layer;) {
    adj = BackwardLayer(model, i, tape.acts[i], tape.acts[i], adj, relu,
                        options.param_grad, true);
  }
  return adj;
}

Tensor GradInput(const ModelGraph& model, const Tensor& x,
                 const ScoreSelector& sel, ReluRule relu_rule) {
  CheckSelector(model, sel);
  const Tape tape = Record(model, x);
  BackwardOptions opts;
  opts.relu_rule = relu_rule;
  Tensor g = Backward(model, tape, ScoreSeed(tape.logits(), sel), opts);
  g.CheckFinite("input gradient");
  return g;
}

ParamGradient GradParams(const ModelGraph& model, const Tensor& x,
                         const LossFn& loss) {
  const Tape tape = Record(model, x);
  LossValue lv = loss(tape.logits());
  Require(lv.value.size() == 1, ErrorKind::kContract,
          "loss must evaluate to a scalar, got " +
              std::to_string(lv.value.size()) + " values");
  Require(lv.grad.shape() == tape.logits().shape(), ErrorKind::kShape,
          "loss gradient must match the logits shape");
  ParamGradient out;
  out.loss = lv.value[0];
  out.grad.assign(model.num_params(), 0.0);
  BackwardOptions opts;
  opts.param_grad = out.grad;
  Backward(model, tape, lv.grad, opts);
  for (double g : out.grad) {
    if (!std::isfinite(g)) Fail(ErrorKind::kNumeric, "parameter gradient is not finite");
  }
  return out;
}

std::vector<Tensor> GuidedReluMasks(const ModelGraph& model, const Tape& tape,
                                    const ScoreSelector& sel) {
  CheckSelector(model, sel);
  const size_t n_layers = model.layers().size();
  std::vector<Tensor> masks(n_layers);
  Tensor adj = ScoreSeed(tape.logits(), sel);
  const ReluMode relu{ReluRule::kGuided, nullptr};
  for (size_t i = n_layers; i-- > 0;) {
    if (model.layers()[i].spec.kind == LayerKind::kRelu) {
      Tensor m(adj.shape());
      for (size_t j = 0; j < m.size(); ++j) {
        m[j] = (tape.acts[i][j] > 0.0 && adj[j] > 0.0) ? 1.0 : 0.0;
      }
      masks[i] = std::move(m);
    }
    adj = BackwardLayer(model, i, tape.acts[i], tape.acts[i], adj, relu, {},
                        false);
  }
  return masks;
}

DualGradient DirectionalScoreGradient(const ModelGraph& model, const Tape& tape,
                                      const ScoreSelector& sel,
                                      const Tensor& tangent,
                                      const DualOptions& options) {
  CheckSelector(model, sel);
  const size_t n_layers = model.layers().size();
  const size_t start = options.start_layer;
  Require(start <= n_layers, ErrorKind::kContract, "start layer out of range");
  Require(tape.acts.size() == n_layers + 1, ErrorKind::kContract,
          "tape does not belong to this model");
  Require(tangent.shape() == tape.acts[start].shape(), ErrorKind::kShape,
          "tangent shape mismatch");
  const std::vector<Tensor>* masks = options.relu_tangent_masks;
  Require(masks == nullptr || masks->size() == n_layers, ErrorKind::kContract,
          "one tangent mask slot per layer expected");

  auto mask_for = [&](size_t i) -> const Tensor* {
    if (masks == nullptr || model.layers()[i].spec.kind != LayerKind::kRelu) {
      return nullptr;
    }
    return &(*masks)[i];
  };

  // Tangent forward from the injection point.
  std::vector<Tensor> tan(n_layers + 1);
  tan[start] = tangent;
  for (size_t i = start; i < n_layers; ++i) {
    tan[i + 1] = ApplyLinear(model, i, tape.acts[i], tan[i], mask_for(i));
  }

  const Tensor& z = tape.logits();
  const Tensor& zdot = tan[n_layers];
  const size_t t = sel.class_index;
  Tensor z_adj(z.shape());
  Tensor zdot_adj = ScoreSeed(z, sel);
  DualGradient out;
  out.value = Dot(zdot_adj.data(), zdot.data());
  if (sel.kind == ScoreKind::kSoftmax) {
    const Tensor p = Softmax(z);
    const double q = Dot(p.data(), zdot.data());
    for (size_t j = 0; j < z.size(); ++j) {
      const double dpt = p[t] * ((j == t ? 1.0 : 0.0) - p[j]);
      z_adj[j] = dpt * (zdot[t] - q) - p[t] * p[j] * (zdot[j] - q);
    }
  }

  out.params.assign(model.num_params(), 0.0);
  const ReluMode primal_relu{ReluRule::kStandard, nullptr};
  for (size_t i = n_layers; i-- > start;) {
    z_adj = BackwardLayer(model, i, tape.acts[i], tape.acts[i], z_adj,
                          primal_relu, out.params, true);
    const ReluMode tangent_relu{ReluRule::kStandard, mask_for(i)};
    zdot_adj = BackwardLayer(model, i, tape.acts[i], tan[i], zdot_adj,
                             tangent_relu, out.params, false);
  }
  out.start_adjoint = std::move(z_adj);
  return out;
}

}  // namespace xglk
