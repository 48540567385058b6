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

#ifndef XGLK_EVASION_H_
#define XGLK_EVASION_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "xglk/explainers.h"
#include "xglk/model.h"
#include "xglk/model_zoo.h"
#include "xglk/oracle.h"
#include "xglk/rng.h"
#include "xglk/tensor.h"

namespace xglk {

enum class AttackStrategy { kNes, kEgta, kEgsa, kEgsma };
const char* AttackStrategyName(AttackStrategy s);
AttackStrategy ParseAttackStrategy(const std::string& name);

// How EGSMA turns the surrogate gradient into a prior.
enum class SurrogatePrior { kEgsaScaling, kEgtaShift };

// Soft-label descent direction: the elementwise sign of the estimate, or the
// estimate rescaled to L2 norm step_size * sqrt(n) (the L2 length of a sign
// step).
enum class StepRule { kSign, kL2 };
const char* StepRuleName(StepRule rule);
StepRule ParseStepRule(const std::string& name);

struct AttackConfig {
  double lambda = 0.9;
  double delta = 0.01;            // NES finite-difference radius
  size_t samples = 10;            // B
  double epsilon_budget = 1.25;   // soft-label L2 budget
  double hard_threshold = 12.5;   // hard-label success distance
  double step_size = 0.01;        // soft-label per-coordinate sign step
  StepRule step_rule = StepRule::kSign;
  int64_t max_queries = 10000;
  // Variance of the search distribution N(0, eps I); <= 0 selects 1/n so that
  // search vectors and unit priors have comparable length.
  double sampler_variance = 0.0;
  // Hard-label probe radius as a fraction of the current distance; <= 0
  // selects 1/sqrt(n).
  double probe_scale = 0.0;
  uint64_t seed = 0;

  // EGSMA.
  double alpha = 0.5;
  int64_t refit_every = 500;
  size_t refit_epochs = 20;
  size_t buffer_capacity = 256;
  SurrogatePrior surrogate_prior = SurrogatePrior::kEgsaScaling;
  TrainConfig surrogate_train;
};

struct AttackTrace {
  bool success = false;
  int64_t queries_used = 0;
  // (queries so far, L2 distance) at every accepted iterate.
  std::vector<std::pair<int64_t, double>> distortion_history;
  Tensor final_input;
  AttackStrategy strategy = AttackStrategy::kNes;
};

enum class SamplerKind { kPlain, kEgta, kEgsa };

// Search distribution for one estimate. `prior` is a unit vector for EGTA and
// a nonnegative scaling vector for EGSA; it is ignored for kPlain.
struct SamplerSpec {
  SamplerKind kind = SamplerKind::kPlain;
  double lambda = 1.0;
  double variance = 1.0;
  Tensor prior;
};

// sqrt(lambda) u + sqrt(1 - lambda) e, with ||e|| = 1.
Tensor EgtaSample(const Tensor& u, const Tensor& e, double lambda);
// sqrt(lambda) u + sqrt(1 - lambda) |e| * u, with e nonnegative.
Tensor EgsaSample(const Tensor& u, const Tensor& e_abs, double lambda);
Tensor DrawSearchVector(const SamplerSpec& sampler, const Shape& shape, Rng& rng);

// Antithetic NES estimate (1 / 2 delta B) sum (f(x + delta u_b) - f(x - delta
// u_b)) u_b of an arbitrary scalar function.
Tensor NesEstimate(const ScalarFunction& f, const Tensor& x,
                   const SamplerSpec& sampler, size_t samples, double delta,
                   Rng& rng);

// The same estimate of the soft-label probability of class `cls`, spending
// exactly 2 B queries. Raises BudgetExhausted carrying the queries spent when
// fewer than that remain in `query_budget`.
Tensor NesGradientEstimate(Oracle& oracle, const Tensor& x, size_t cls,
                           const SamplerSpec& sampler, size_t samples,
                           double delta, Rng& rng, int64_t query_budget);

// Hard-label direction estimate (1 / B) sum phi(x + delta u_b) u_b with
// phi in {+1, -1}.
using DecisionFn = std::function<bool(const Tensor&)>;
Tensor HardLabelDirection(const DecisionFn& phi, const Tensor& x,
                          const SamplerSpec& sampler, size_t samples, double delta,
                          Rng& rng);

Tensor L2Project(const Tensor& z, const Tensor& center, double radius);

// Untargeted soft-label attack against the currently predicted class `t`.
// kEgta and kEgsa take their prior from the explanation attached to each
// verification query. kEgsma is served by EgsmaAttack.
AttackTrace SoftLabelAttack(Oracle& oracle, const Tensor& x, size_t t,
                            const AttackConfig& cfg, AttackStrategy strategy);

// phi(z) = 1 iff the prediction at z is `cls` (targeted) or differs from it
// (untargeted).
struct AttackGoal {
  size_t cls = 0;
  bool targeted = false;
};

// Decision-boundary walk from `x_init_adv` (which must satisfy the goal)
// toward `x_orig`. Success once an accepted iterate lies within
// cfg.hard_threshold of x_orig.
AttackTrace HardLabelAttack(Oracle& oracle, const Tensor& x_orig,
                            const Tensor& x_init_adv, const AttackGoal& goal,
                            const AttackConfig& cfg, AttackStrategy strategy);

struct BufferEntry {
  Tensor x;
  size_t label = 0;
  std::optional<Tensor> explanation;  // true-form victim explanation
};

// How the surrogate reproduces the victim's explanations.
struct SurrogateExplainer {
  ExplainMethod method = ExplainMethod::kGradient;
  ScoreKind score_kind = ScoreKind::kSoftmax;
  ExplainerParams params;
};

// Per-entry surrogate loss: hinge max(0, max_{i != t} F_i - F_t) plus
// alpha / 2 ||E(x) - e||^2 on entries that carry an explanation.
double SurrogateLoss(const ModelGraph& surrogate, const std::vector<BufferEntry>& buffer,
                     double alpha, const SurrogateExplainer& explainer);

struct FinetuneResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::vector<double> epoch_loss;
};

// Minimizes SurrogateLoss over `buffer`. The returned model never has a larger
// buffer loss than the input model.
FinetuneResult SurrogateFinetune(ModelGraph& surrogate,
                                 const std::vector<BufferEntry>& buffer, double alpha,
                                 const TrainConfig& cfg,
                                 const SurrogateExplainer& explainer);

struct EgsmaSetup {
  ModelGraph surrogate;
  std::vector<BufferEntry> initial_buffer;  // gathered before the attack
  SurrogateExplainer explainer;
  bool prefit = true;  // fit on the initial buffer before the first query
};

// Soft-label attack whose prior is the (normalized) input gradient of a
// surrogate refit every cfg.refit_every queries on the responses seen so far.
// Surrogate evaluations are free; only oracle calls are counted.
AttackTrace EgsmaAttack(Oracle& oracle, const Tensor& x, size_t t,
                        const AttackConfig& cfg, EgsmaSetup& setup);

// abs form -> EGSA; true form with cos >= threshold -> EGTA; else EGSMA.
AttackStrategy ChooseStrategy(ExplanationForm form, std::optional<double> cos_estimate,
                              double threshold = 0.5);

// Rescales a nonnegative vector to root-mean-square 1 (EGSA prior scaling).
Tensor RmsNormalize(const Tensor& v);

}  // namespace xglk

#endif  // XGLK_EVASION_H_
