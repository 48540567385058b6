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

#ifndef XGLK_EXTRACTION_H_
#define XGLK_EXTRACTION_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "xglk/dataset.h"
#include "xglk/evasion.h"
#include "xglk/explainers.h"
#include "xglk/model.h"
#include "xglk/model_zoo.h"
#include "xglk/oracle.h"

namespace xglk {

enum class PredictionMatch { kSoftmaxL2, kLogitL2 };

struct MeaConfig {
  double alpha = 0.5;
  int64_t budget = 2000;
  TrainConfig train;
  PredictionMatch prediction = PredictionMatch::kSoftmaxL2;
  // Random masks per sample when matching LIME explanations.
  size_t lime_masks = 8;
  uint64_t seed = 0;
};

// A pool point and the victim's (cached) answer.
struct MeaSample {
  Tensor x;
  Tensor probs;
  std::optional<Explanation> explanation;
};

struct MeaTrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int64_t queries = 0;
  std::vector<double> epoch_loss;
};

// Per-sample joint loss 1/2 ||F'(x) - F(x)||^2 + alpha L_E, where L_E is
// 1/2 ||E'(x) - E(x)||^2 for gradient-based explanations and, for LIME, the
// squared mismatch between the surrogate's score change under random group
// masks and the change predicted by the victim's local linear model.
double MeaLoss(const ModelGraph& surrogate, const std::vector<MeaSample>& samples,
               const MeaConfig& cfg, const SurrogateExplainer& explainer);

// Queries the first cfg.budget points of a seeded permutation of `pool`, once
// each, then fits `surrogate` to the cached answers. The surrogate is never
// left with a larger joint loss than it started with.
MeaTrainResult MeaTrain(Oracle& victim, ModelGraph& surrogate,
                        const std::vector<Tensor>& pool, const MeaConfig& cfg,
                        const SurrogateExplainer& explainer);

// (victim - surrogate) * 100 percentage points.
double RTest(double victim_accuracy, double surrogate_accuracy);

// Mean square value ||e||^2 / n.
double Msv(const Tensor& e);

// Fraction of inputs on which both models predict the same class.
double Agreement(const ModelGraph& a, const ModelGraph& b,
                 const std::vector<Tensor>& inputs);

struct MeaCell {
  ExplainMethod method = ExplainMethod::kGradient;
  double alpha = 0.5;
  ExplainerParams params;
};

struct MeaResult {
  int64_t budget = 0;
  ExplainMethod method = ExplainMethod::kGradient;
  double alpha = 0.0;
  double r_test = 0.0;
  double surrogate_accuracy = 0.0;
  double victim_accuracy = 0.0;
  double agreement = 0.0;
  double msv_mean = 0.0;
  int64_t queries = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct SweepSetup {
  std::shared_ptr<const ModelGraph> victim;
  ModelSpec surrogate_spec;
  std::vector<Tensor> pool;
  Dataset test;
  MeaConfig base;
  // Inputs used for the mean MSV of each method (up to msv_samples of them).
  std::vector<Tensor> msv_inputs;
  size_t msv_samples = 1000;
};

// One fresh oracle (own ledger) and fresh surrogate per (budget, cell).
// Budgets must be ascending.
std::vector<MeaResult> BudgetSweep(const SweepSetup& setup,
                                   const std::vector<int64_t>& budgets,
                                   const std::vector<MeaCell>& cells);

// Mean MSV of the victim's true-form explanations of its predicted class.
double MeanMsv(const ModelGraph& victim, const std::vector<Tensor>& inputs,
               ExplainMethod method, const ExplainerParams& params, size_t limit);

// Spearman rank correlation with average ranks for ties. Raises a degenerate
// error when either sample is constant.
double SpearmanCorrelation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace xglk

#endif  // XGLK_EXTRACTION_H_
