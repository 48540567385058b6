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

#include "xglk/explainers.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "xglk/error.h"
#include "xglk/rng.h"

namespace xglk {

const char* ExplainMethodName(ExplainMethod method) {
  switch (method) {
    case ExplainMethod::kGradient:
      return "gradient";
    case ExplainMethod::kSmoothGrad:
      return "smoothgrad";
    case ExplainMethod::kIntGrad:
      return "intgrad";
    case ExplainMethod::kGuidedBackprop:
      return "guided_backprop";
    case ExplainMethod::kGradCam:
      return "gradcam";
    case ExplainMethod::kLime:
      return "lime";
  }
  return "?";
}

std::vector<ExplainMethod> AllExplainMethods() {
  return {ExplainMethod::kGradient,       ExplainMethod::kSmoothGrad,
          ExplainMethod::kIntGrad,        ExplainMethod::kGuidedBackprop,
          ExplainMethod::kGradCam,        ExplainMethod::kLime};
}

ExplainMethod ParseExplainMethod(const std::string& name) {
  for (ExplainMethod m : AllExplainMethods()) {
    if (name == ExplainMethodName(m)) return m;
  }
  Fail(ErrorKind::kConfig, "unknown explanation method '" + name + "'");
}

const char* ExplanationFormName(ExplanationForm form) {
  return form == ExplanationForm::kTrue ? "true" : "abs";
}

ExplanationForm ParseExplanationForm(const std::string& name) {
  if (name == "true") return ExplanationForm::kTrue;
  if (name == "abs") return ExplanationForm::kAbs;
  Fail(ErrorKind::kConfig, "unknown explanation form '" + name + "'");
}

namespace {

Explanation Make(Tensor values, ExplainMethod method, const ScoreSelector& sel) {
  values.CheckFinite(ExplainMethodName(method));
  return {std::move(values), method, sel, ExplanationForm::kTrue};
}

// Index of the activation a Grad-CAM map is built from, and of the layer whose
// output it is.
size_t GradCamActivationIndex(const ModelGraph& model) {
  const auto& layers = model.layers();
  size_t last_conv = layers.size();
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.kind == LayerKind::kConv2D) last_conv = i;
  }
  Require(last_conv < layers.size(), ErrorKind::kInapplicable,
          "gradcam needs a convolutional layer; the model is dense-only");
  if (last_conv + 1 < layers.size() &&
      layers[last_conv + 1].spec.kind == LayerKind::kRelu) {
    return last_conv + 2;
  }
  return last_conv + 1;
}

// Bilinear (half-pixel centers) interpolation weights from a src-long axis to
// a dst-long axis: for each destination, two source taps.
struct Taps {
  std::vector<size_t> lo, hi;
  std::vector<double> frac;
};

Taps LinearTaps(size_t src, size_t dst) {
  Taps t;
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (size_t d = 0; d < dst; ++d) {
    double pos = (static_cast<double>(d) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, src - 1);
    t.lo.push_back(lo);
    t.hi.push_back(hi);
    t.frac.push_back(pos - static_cast<double>(lo));
  }
  return t;
}

// [h, w] map -> [H, W].
std::vector<double> Upsample(const std::vector<double>& map, size_t h, size_t w,
                             size_t H, size_t W) {
  const Taps ty = LinearTaps(h, H), tx = LinearTaps(w, W);
  std::vector<double> out(H * W);
  for (size_t y = 0; y < H; ++y) {
    for (size_t x = 0; x < W; ++x) {
      const double fy = ty.frac[y], fx = tx.frac[x];
      out[y * W + x] = (1 - fy) * ((1 - fx) * map[ty.lo[y] * w + tx.lo[x]] +
                                   fx * map[ty.lo[y] * w + tx.hi[x]]) +
                       fy * ((1 - fx) * map[ty.hi[y] * w + tx.lo[x]] +
                             fx * map[ty.hi[y] * w + tx.hi[x]]);
    }
  }
  return out;
}

std::vector<double> UpsampleTranspose(const std::vector<double>& grad, size_t h,
                                      size_t w, size_t H, size_t W) {
  const Taps ty = LinearTaps(h, H), tx = LinearTaps(w, W);
  std::vector<double> out(h * w, 0.0);
  for (size_t y = 0; y < H; ++y) {
    for (size_t x = 0; x < W; ++x) {
      const double g = grad[y * W + x];
      const double fy = ty.frac[y], fx = tx.frac[x];
      out[ty.lo[y] * w + tx.lo[x]] += (1 - fy) * (1 - fx) * g;
      out[ty.lo[y] * w + tx.hi[x]] += (1 - fy) * fx * g;
      out[ty.hi[y] * w + tx.lo[x]] += fy * (1 - fx) * g;
      out[ty.hi[y] * w + tx.hi[x]] += fy * fx * g;
    }
  }
  return out;
}

struct GradCamParts {
  size_t act_index = 0;
  Tensor grad_act;              // d score / d A
  std::vector<double> weights;  // per channel
  std::vector<double> raw;      // sum_c w_c A_c, [h, w]
  Tensor map;                   // final explanation
};

GradCamParts ComputeGradCam(const ModelGraph& model, const Tape& tape,
                            const ScoreSelector& sel) {
  const Shape& in_shape = model.input_shape();
  Require(in_shape.size() == 3, ErrorKind::kInapplicable,
          "gradcam needs image-shaped input");
  GradCamParts p;
  p.act_index = GradCamActivationIndex(model);
  const Tensor& act = tape.acts[p.act_index];
  BackwardOptions opts;
  opts.to_layer = p.act_index;
  p.grad_act = Backward(model, tape, ScoreSeed(tape.logits(), sel), opts);
  const size_t c = act.shape()[0], h = act.shape()[1], w = act.shape()[2];
  p.weights.assign(c, 0.0);
  for (size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (size_t j = 0; j < h * w; ++j) s += p.grad_act[ch * h * w + j];
    p.weights[ch] = s / static_cast<double>(h * w);
  }
  p.raw.assign(h * w, 0.0);
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t j = 0; j < h * w; ++j) p.raw[j] += p.weights[ch] * act[ch * h * w + j];
  }
  std::vector<double> relu(h * w);
  for (size_t j = 0; j < h * w; ++j) relu[j] = std::max(0.0, p.raw[j]);
  const size_t H = in_shape[1], W = in_shape[2];
  const std::vector<double> up = Upsample(relu, h, w, H, W);
  p.map = Tensor(in_shape);
  for (size_t ch = 0; ch < in_shape[0]; ++ch) {
    for (size_t j = 0; j < H * W; ++j) p.map[ch * H * W + j] = std::max(0.0, up[j]);
  }
  return p;
}

std::vector<Tensor> SmoothGradPoints(const Tensor& x, double sigma, size_t n,
                                     uint64_t seed) {
  Rng rng(seed, "smoothgrad");
  std::vector<Tensor> pts;
  pts.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    Tensor p = x;
    if (sigma > 0.0) {
      for (double& v : p.mutable_values()) v += sigma * rng.Normal();
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

std::vector<Tensor> PathPoints(const Tensor& x, const Tensor& baseline,
                               size_t steps) {
  std::vector<Tensor> pts;
  pts.reserve(steps);
  for (size_t k = 0; k < steps; ++k) {
    const double a = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    Tensor p = baseline;
    for (size_t i = 0; i < p.size(); ++i) p[i] += a * (x[i] - baseline[i]);
    pts.push_back(std::move(p));
  }
  return pts;
}

Tensor GradAt(const ModelGraph& model, const Tape& tape, const ScoreSelector& sel,
              ReluRule rule = ReluRule::kStandard) {
  BackwardOptions opts;
  opts.relu_rule = rule;
  return Backward(model, tape, ScoreSeed(tape.logits(), sel), opts);
}

void CheckSelector(const ModelGraph& model, const ScoreSelector& sel) {
  Require(sel.class_index < model.num_classes(), ErrorKind::kIndex,
          "explanation class index out of range");
}

}  // namespace

Explanation GradientSaliency(const ModelGraph& model, const Tensor& x,
                             const ScoreSelector& sel) {
  return Make(GradInput(model, x, sel), ExplainMethod::kGradient, sel);
}

Explanation SmoothGrad(const ModelGraph& model, const Tensor& x,
                       const ScoreSelector& sel, double sigma, size_t n_samples,
                       uint64_t seed) {
  Require(n_samples >= 1, ErrorKind::kContract, "smoothgrad needs >= 1 sample");
  Require(sigma >= 0.0, ErrorKind::kContract, "smoothgrad sigma must be >= 0");
  CheckSelector(model, sel);
  // Without noise every sample coincides; return the gradient bit-for-bit.
  if (sigma == 0.0) {
    return Make(GradInput(model, x, sel), ExplainMethod::kSmoothGrad, sel);
  }
  Tensor acc = Tensor::ZerosLike(x);
  for (const Tensor& p : SmoothGradPoints(x, sigma, n_samples, seed)) {
    acc += GradAt(model, Record(model, p), sel);
  }
  acc *= 1.0 / static_cast<double>(n_samples);
  return Make(std::move(acc), ExplainMethod::kSmoothGrad, sel);
}

Explanation IntegratedGradients(const ModelGraph& model, const Tensor& x,
                                const Tensor& baseline, const ScoreSelector& sel,
                                size_t steps) {
  Require(baseline.shape() == x.shape(), ErrorKind::kShape,
          "baseline shape must match the input");
  Require(steps >= 1, ErrorKind::kContract, "integrated gradients needs >= 1 step");
  CheckSelector(model, sel);
  Tensor acc = Tensor::ZerosLike(x);
  for (const Tensor& p : PathPoints(x, baseline, steps)) {
    acc += GradAt(model, Record(model, p), sel);
  }
  for (size_t i = 0; i < acc.size(); ++i) {
    acc[i] *= (x[i] - baseline[i]) / static_cast<double>(steps);
  }
  return Make(std::move(acc), ExplainMethod::kIntGrad, sel);
}

Explanation GuidedBackprop(const ModelGraph& model, const Tensor& x,
                           const ScoreSelector& sel) {
  return Make(GradInput(model, x, sel, ReluRule::kGuided),
              ExplainMethod::kGuidedBackprop, sel);
}

Explanation GradCam(const ModelGraph& model, const Tensor& x,
                    const ScoreSelector& sel) {
  CheckSelector(model, sel);
  const Tape tape = Record(model, x);
  return Make(ComputeGradCam(model, tape, sel).map, ExplainMethod::kGradCam, sel);
}

std::vector<std::vector<size_t>> DefaultLimeGroups(const Shape& shape) {
  std::vector<std::vector<size_t>> groups;
  if (shape.size() != 3) {
    for (size_t i = 0; i < ShapeSize(shape); ++i) groups.push_back({i});
    return groups;
  }
  const size_t c = shape[0], h = shape[1], w = shape[2];
  for (size_t y = 0; y < h; y += 2) {
    for (size_t x = 0; x < w; x += 2) {
      std::vector<size_t> g;
      for (size_t ch = 0; ch < c; ++ch) {
        for (size_t dy = 0; dy < 2 && y + dy < h; ++dy) {
          for (size_t dx = 0; dx < 2 && x + dx < w; ++dx) {
            g.push_back((ch * h + y + dy) * w + x + dx);
          }
        }
      }
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

LimeFit FitLime(const ScoreFn& score, const Tensor& x,
                const std::vector<std::vector<size_t>>& groups, size_t n_perturb,
                double kernel_width, double ridge, uint64_t seed) {
  const size_t g = groups.size();
  Require(g >= 1, ErrorKind::kContract, "lime needs at least one group");
  Require(n_perturb >= g + 1, ErrorKind::kContract,
          "lime needs n_perturb >= groups + 1");
  Require(kernel_width > 0.0 && ridge >= 0.0, ErrorKind::kContract,
          "lime kernel width must be > 0 and ridge >= 0");
  std::vector<int> owner(x.size(), -1);
  for (size_t j = 0; j < g; ++j) {
    for (size_t i : groups[j]) {
      Require(i < x.size() && owner[i] < 0, ErrorKind::kContract,
              "lime groups must partition the input coordinates");
      owner[i] = static_cast<int>(j);
    }
  }
  Require(std::all_of(owner.begin(), owner.end(), [](int o) { return o >= 0; }),
          ErrorKind::kContract, "lime groups must cover every coordinate");

  Rng rng(seed, "lime");
  Eigen::MatrixXd a(n_perturb, g + 1);
  Eigen::VectorXd y(n_perturb), sw(n_perturb);
  for (size_t s = 0; s < n_perturb; ++s) {
    std::vector<double> mask(g, 1.0);
    if (s > 0) {
      const size_t off = 1 + rng.UniformInt(g);
      const std::vector<size_t> perm = rng.Permutation(g);
      for (size_t k = 0; k < off; ++k) mask[perm[k]] = 0.0;
    }
    Tensor z = x;
    size_t n_off = 0;
    for (size_t j = 0; j < g; ++j) {
      if (mask[j] == 0.0) {
        ++n_off;
        for (size_t i : groups[j]) z[i] = 0.0;
      }
    }
    const double d = static_cast<double>(n_off) / static_cast<double>(g);
    a(s, 0) = 1.0;
    for (size_t j = 0; j < g; ++j) a(s, j + 1) = mask[j];
    y(s) = score(z);
    Require(std::isfinite(y(s)), ErrorKind::kNumeric, "lime score is not finite");
    sw(s) = std::sqrt(std::exp(-(d * d) / (kernel_width * kernel_width)));
  }
  // Weighted ridge as an augmented least-squares problem.
  Eigen::MatrixXd lhs(n_perturb + g, g + 1);
  Eigen::VectorXd rhs(n_perturb + g);
  lhs.setZero();
  rhs.setZero();
  lhs.topRows(n_perturb) = sw.asDiagonal() * a;
  rhs.head(n_perturb) = sw.cwiseProduct(y);
  for (size_t j = 0; j < g; ++j) lhs(n_perturb + j, j + 1) = std::sqrt(ridge);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(lhs);
  qr.setThreshold(1e-12);
  Require(qr.rank() == static_cast<Eigen::Index>(g + 1), ErrorKind::kNumeric,
          "lime regression is singular; increase ridge or n_perturb");
  const Eigen::VectorXd beta = qr.solve(rhs);
  LimeFit fit;
  fit.intercept = beta(0);
  fit.coefficients.assign(beta.data() + 1, beta.data() + 1 + g);
  return fit;
}

Explanation LimeExplain(const ScoreFn& score, const Tensor& x,
                        const std::vector<std::vector<size_t>>& groups,
                        size_t n_perturb, double kernel_width, double ridge,
                        uint64_t seed) {
  const LimeFit fit =
      FitLime(score, x, groups, n_perturb, kernel_width, ridge, seed);
  Tensor values = Tensor::ZerosLike(x);
  for (size_t j = 0; j < groups.size(); ++j) {
    for (size_t i : groups[j]) values[i] = fit.coefficients[j];
  }
  return Make(std::move(values), ExplainMethod::kLime, ScoreSelector{});
}

Explanation ToAbsolute(const Explanation& e) {
  Explanation out = e;
  for (double& v : out.values.mutable_values()) v = std::abs(v);
  out.form = ExplanationForm::kAbs;
  return out;
}

Explanation NormalizeUnit(const Explanation& e) {
  const double n = Norm2(e.values.data());
  Require(n > 0.0, ErrorKind::kDegenerate,
          "cannot normalize an all-zero explanation");
  Explanation out = e;
  out.values *= 1.0 / n;
  return out;
}

double DefaultSmoothGradSigma(const Tensor& x) {
  const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
  const double range = *hi - *lo;
  return 0.1 * (range > 0.0 ? range : 1.0);
}

bool IsApplicable(ExplainMethod method, const ModelGraph& model) {
  if (method != ExplainMethod::kGradCam) return true;
  return model.HasConv() && model.input_shape().size() == 3;
}

Explanation Explain(const ModelGraph& model, const Tensor& x,
                    const ScoreSelector& sel, ExplainMethod method,
                    const ExplainerParams& params) {
  switch (method) {
    case ExplainMethod::kGradient:
      return GradientSaliency(model, x, sel);
    case ExplainMethod::kSmoothGrad:
      return SmoothGrad(model, x, sel,
                        params.smoothgrad_sigma.value_or(DefaultSmoothGradSigma(x)),
                        params.smoothgrad_samples, params.seed);
    case ExplainMethod::kIntGrad:
      return IntegratedGradients(model, x,
                                 params.baseline.value_or(Tensor::ZerosLike(x)),
                                 sel, params.ig_steps);
    case ExplainMethod::kGuidedBackprop:
      return GuidedBackprop(model, x, sel);
    case ExplainMethod::kGradCam:
      return GradCam(model, x, sel);
    case ExplainMethod::kLime: {
      CheckSelector(model, sel);
      Explanation e = LimeExplain(
          [&](const Tensor& z) { return SelectedScore(Forward(model, z), sel); }, x,
          DefaultLimeGroups(x.shape()), params.lime_samples,
          params.lime_kernel_width, params.lime_ridge, params.seed);
      e.selector = sel;
      return e;
    }
  }
  Fail(ErrorKind::kContract, "unknown explanation method");
}

MatchGradient ExplanationMatchGradient(const ModelGraph& model, const Tensor& x,
                                       const ScoreSelector& sel,
                                       ExplainMethod method,
                                       const ExplainerParams& params,
                                       const Tensor& target) {
  Require(target.shape() == x.shape(), ErrorKind::kShape,
          "target explanation must be shaped like the input");
  CheckSelector(model, sel);
  MatchGradient out;
  out.params.assign(model.num_params(), 0.0);
  auto finish = [&](Tensor e) -> Tensor {
    Tensor r = e - target;
    out.loss = 0.5 * SquaredNorm(r.data());
    out.explanation = std::move(e);
    return r;
  };
  auto add = [&](const std::vector<double>& g) {
    for (size_t i = 0; i < g.size(); ++i) out.params[i] += g[i];
  };

  switch (method) {
    case ExplainMethod::kGradient:
    case ExplainMethod::kGuidedBackprop: {
      const bool guided = method == ExplainMethod::kGuidedBackprop;
      const Tape tape = Record(model, x);
      const Tensor r = finish(
          GradAt(model, tape, sel, guided ? ReluRule::kGuided : ReluRule::kStandard));
      std::vector<Tensor> masks;
      DualOptions dual;
      if (guided) {
        masks = GuidedReluMasks(model, tape, sel);
        dual.relu_tangent_masks = &masks;
      }
      add(DirectionalScoreGradient(model, tape, sel, r, dual).params);
      break;
    }
    case ExplainMethod::kSmoothGrad:
    case ExplainMethod::kIntGrad: {
      const bool smooth = method == ExplainMethod::kSmoothGrad;
      const Tensor baseline = params.baseline.value_or(Tensor::ZerosLike(x));
      const std::vector<Tensor> pts =
          smooth ? SmoothGradPoints(
                       x, params.smoothgrad_sigma.value_or(DefaultSmoothGradSigma(x)),
                       params.smoothgrad_samples, params.seed)
                 : PathPoints(x, baseline, params.ig_steps);
      Require(!pts.empty(), ErrorKind::kContract, "explainer needs >= 1 sample");
      const double inv = 1.0 / static_cast<double>(pts.size());
      std::vector<Tape> tapes;
      tapes.reserve(pts.size());
      Tensor e = Tensor::ZerosLike(x);
      for (const Tensor& p : pts) {
        tapes.push_back(Record(model, p));
        e += GradAt(model, tapes.back(), sel);
      }
      e *= inv;
      if (!smooth) {
        for (size_t i = 0; i < e.size(); ++i) e[i] *= x[i] - baseline[i];
      }
      Tensor dir = finish(std::move(e));
      for (size_t i = 0; i < dir.size(); ++i) {
        dir[i] *= smooth ? inv : inv * (x[i] - baseline[i]);
      }
      for (const Tape& t : tapes) {
        add(DirectionalScoreGradient(model, t, sel, dir).params);
      }
      break;
    }
    case ExplainMethod::kGradCam: {
      const Tape tape = Record(model, x);
      GradCamParts p = ComputeGradCam(model, tape, sel);
      const Tensor r = finish(p.map);
      const Tensor& act = tape.acts[p.act_index];
      const size_t c = act.shape()[0], h = act.shape()[1], w = act.shape()[2];
      const Shape& in_shape = model.input_shape();
      const size_t H = in_shape[1], W = in_shape[2];
      std::vector<double> r_up(H * W, 0.0);
      for (size_t ch = 0; ch < in_shape[0]; ++ch) {
        for (size_t j = 0; j < H * W; ++j) r_up[j] += r[ch * H * W + j];
      }
      std::vector<double> r_raw = UpsampleTranspose(r_up, h, w, H, W);
      for (size_t j = 0; j < h * w; ++j) {
        if (p.raw[j] <= 0.0) r_raw[j] = 0.0;
      }
      Tensor direct(act.shape());
      Tensor v(act.shape());
      for (size_t ch = 0; ch < c; ++ch) {
        double dw = 0.0;
        for (size_t j = 0; j < h * w; ++j) {
          direct[ch * h * w + j] = r_raw[j] * p.weights[ch];
          dw += r_raw[j] * act[ch * h * w + j];
        }
        for (size_t j = 0; j < h * w; ++j) {
          v[ch * h * w + j] = dw / static_cast<double>(h * w);
        }
      }
      DualOptions dual;
      dual.start_layer = p.act_index;
      DualGradient dg = DirectionalScoreGradient(model, tape, sel, v, dual);
      add(dg.params);
      Tensor adj = direct + dg.start_adjoint;
      BackwardOptions opts;
      opts.from_layer = p.act_index;
      opts.param_grad = out.params;
      Backward(model, tape, adj, opts);
      break;
    }
    case ExplainMethod::kLime:
      Fail(ErrorKind::kInapplicable,
           "lime attributions are not differentiable in the model parameters");
  }
  return out;
}

}  // namespace xglk
