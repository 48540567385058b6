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

#ifndef XGLK_EXPLAINERS_H_
#define XGLK_EXPLAINERS_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xglk/model.h"
#include "xglk/tensor.h"

namespace xglk {

enum class ExplainMethod {
  kGradient,
  kSmoothGrad,
  kIntGrad,
  kGuidedBackprop,
  kGradCam,
  kLime,
};
enum class ExplanationForm { kTrue, kAbs };

const char* ExplainMethodName(ExplainMethod method);
ExplainMethod ParseExplainMethod(const std::string& name);
const char* ExplanationFormName(ExplanationForm form);  // "true" / "abs"
ExplanationForm ParseExplanationForm(const std::string& name);
std::vector<ExplainMethod> AllExplainMethods();

// An attribution map shaped like the model input.
struct Explanation {
  Tensor values;
  ExplainMethod method = ExplainMethod::kGradient;
  ScoreSelector selector;
  ExplanationForm form = ExplanationForm::kTrue;
};

// Knobs shared by the explainers. Unset optionals take the documented
// defaults: SmoothGrad sigma 0.1 x (value range of x), zero baselines,
// singleton LIME groups for vectors and 2x2 patches for images.
struct ExplainerParams {
  std::optional<double> smoothgrad_sigma;
  size_t smoothgrad_samples = 50;
  size_t ig_steps = 64;
  std::optional<Tensor> baseline;
  size_t lime_samples = 300;
  double lime_kernel_width = 0.25;
  double lime_ridge = 1e-3;
  uint64_t seed = 0;
};

Explanation GradientSaliency(const ModelGraph& model, const Tensor& x,
                             const ScoreSelector& sel);

Explanation SmoothGrad(const ModelGraph& model, const Tensor& x,
                       const ScoreSelector& sel, double sigma, size_t n_samples,
                       uint64_t seed);

// Riemann-midpoint integrated gradients along the straight path from
// `baseline` to `x`.
Explanation IntegratedGradients(const ModelGraph& model, const Tensor& x,
                                const Tensor& baseline, const ScoreSelector& sel,
                                size_t steps);

Explanation GuidedBackprop(const ModelGraph& model, const Tensor& x,
                           const ScoreSelector& sel);

// Gradient-weighted class activation map at the last convolution (after its
// ReLU when one follows), bilinearly upsampled to the input's spatial size and
// replicated over input channels.
Explanation GradCam(const ModelGraph& model, const Tensor& x,
                    const ScoreSelector& sel);

using ScoreFn = std::function<double(const Tensor&)>;

struct LimeFit {
  std::vector<double> coefficients;  // one per group
  double intercept = 0.0;
};

// Weighted ridge regression of scores on binary group masks. A masked-off
// group is set to 0. Sample weights are exp(-d^2 / width^2) with d the
// fraction of masked groups. The intercept is not penalized.
LimeFit FitLime(const ScoreFn& score, const Tensor& x,
                const std::vector<std::vector<size_t>>& groups, size_t n_perturb,
                double kernel_width, double ridge, uint64_t seed);

Explanation LimeExplain(const ScoreFn& score, const Tensor& x,
                        const std::vector<std::vector<size_t>>& groups,
                        size_t n_perturb, double kernel_width, double ridge,
                        uint64_t seed);

// Singletons for rank-1 inputs; non-overlapping 2x2 patches (shared across
// channels) for [c, h, w] inputs.
std::vector<std::vector<size_t>> DefaultLimeGroups(const Shape& shape);

Explanation ToAbsolute(const Explanation& e);
Explanation NormalizeUnit(const Explanation& e);

double DefaultSmoothGradSigma(const Tensor& x);

// Dispatches to one of the methods above using `params` defaults. LIME uses
// the model's selected score as its black box.
Explanation Explain(const ModelGraph& model, const Tensor& x,
                    const ScoreSelector& sel, ExplainMethod method,
                    const ExplainerParams& params = {});

// Whether `method` can run on `model` (GradCam needs a convolution).
bool IsApplicable(ExplainMethod method, const ModelGraph& model);

struct MatchGradient {
  double loss = 0.0;            // 0.5 * ||E(model, x) - target||^2
  std::vector<double> params;   // d loss / d parameters
  Tensor explanation;           // E(model, x)
};

// Explanation-matching loss and its exact parameter gradient for the
// gradient-based methods (all but LIME).
MatchGradient ExplanationMatchGradient(const ModelGraph& model, const Tensor& x,
                                       const ScoreSelector& sel,
                                       ExplainMethod method,
                                       const ExplainerParams& params,
                                       const Tensor& target);

}  // namespace xglk

#endif  // XGLK_EXPLAINERS_H_
