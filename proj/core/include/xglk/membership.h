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

#ifndef XGLK_MEMBERSHIP_H_
#define XGLK_MEMBERSHIP_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xglk/oracle.h"
#include "xglk/tensor.h"

namespace xglk {

enum class MiaAttack { kExplanationVariance, kOptVar, kGap, kLossThreshold };
const char* MiaAttackName(MiaAttack attack);
MiaAttack ParseMiaAttack(const std::string& name);

enum class MiaDirection { kLowerIsMember, kHigherIsMember };

struct MiaScore {
  uint64_t sample_id = 0;
  double score = 0.0;
  MiaAttack attack = MiaAttack::kExplanationVariance;
  MiaDirection direction = MiaDirection::kLowerIsMember;
  // Set when the loss score hit the probability floor.
  bool clamped = false;
};

// (1/n) sum (v_i - mean)^2, computed in two passes. Needs n >= 2.
double PopulationVariance(std::span<const double> v);

// Variance of the released explanation; one query. The oracle must attach
// explanations of the softmax score (ExplanationVarianceScore) or of the
// logit (OptVarScore); anything else is a policy error.
MiaScore ExplanationVarianceScore(Oracle& oracle, const Tensor& x, uint64_t id = 0);
MiaScore OptVarScore(Oracle& oracle, const Tensor& x, uint64_t id = 0);

// 1 when the prediction matches the true label; members score 1.
MiaScore GapAttackScore(Oracle& oracle, const Tensor& x, size_t true_label,
                        uint64_t id = 0);

// -log p[true_label] with p clamped below at 1e-12. Soft-label oracles only.
MiaScore LossThresholdScore(Oracle& oracle, const Tensor& x, size_t true_label,
                            uint64_t id = 0);

inline constexpr double kLossProbabilityFloor = 1e-12;

// Lower-is-member predicts member iff score < threshold; higher-is-member iff
// score > threshold.
bool PredictMember(double score, double threshold, MiaDirection direction);

struct Calibration {
  double threshold = 0.0;
  double balanced_accuracy = 0.5;
  bool degenerate = false;  // member and non-member scores are identical
};

// Threshold maximizing balanced accuracy on the calibration scores. Among the
// maximizing thresholds the midpoint of the first maximal interval is chosen.
Calibration CalibrateThreshold(std::span<const double> members,
                               std::span<const double> nonmembers,
                               MiaDirection direction);

struct MiaEvaluation {
  double accuracy = 0.0;
  double advantage = 0.0;  // accuracy - 0.5
  double threshold = 0.0;
  size_t true_member = 0;      // member predicted member
  size_t false_nonmember = 0;  // member predicted non-member
  size_t false_member = 0;     // non-member predicted member
  size_t true_nonmember = 0;   // non-member predicted non-member
  size_t total() const {
    return true_member + false_nonmember + false_member + true_nonmember;
  }
};

// Raises a contract error on unequal member/non-member counts unless
// allow_unbalanced is set.
MiaEvaluation EvaluateMia(std::span<const double> scores,
                          const std::vector<bool>& is_member, double threshold,
                          MiaDirection direction, bool allow_unbalanced = false);

// One-sided Mann-Whitney p-value (normal approximation with tie correction)
// for the hypothesis that `a` tends to be smaller than `b`.
double MannWhitneyLessPValue(std::span<const double> a, std::span<const double> b);

}  // namespace xglk

#endif  // XGLK_MEMBERSHIP_H_
