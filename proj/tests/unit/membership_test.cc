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

#include "xglk/membership.h"

#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "xglk/error.h"
#include "xglk/model_zoo.h"
#include "xglk/rng.h"

namespace xglk {
namespace {

// Returns a fixed response for every query and counts the calls.
class ScriptedOracle : public Oracle {
 public:
  explicit ScriptedOracle(OracleResponse response) : response_(std::move(response)) {}
  OracleResponse Query(const Tensor&, QueryPurpose purpose) override {
    ledger_.Charge(purpose);
    return response_;
  }
  const QueryLedger& ledger() const override { return ledger_; }

 private:
  OracleResponse response_;
  QueryLedger ledger_;
};

OracleResponse WithExplanation(std::vector<double> values, ScoreKind kind) {
  OracleResponse r;
  r.probs = Tensor::Vector({0.25, 0.75});
  r.explanation = Explanation{Tensor::Vector(std::move(values)), ExplainMethod::kGradient,
                              {kind, 1}, ExplanationForm::kTrue};
  return r;
}

OracleResponse WithProbs(std::vector<double> probs) {
  OracleResponse r;
  r.probs = Tensor::Vector(std::move(probs));
  return r;
}

const Tensor kInput = Tensor::Vector({0.0, 0.0});

TEST(PopulationVarianceTest, MatchesTwoPassBruteForce) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(3 + trial);
    rng.FillNormal(v);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    EXPECT_NEAR(PopulationVariance(v), var, 1e-12);
  }
  EXPECT_THROW(PopulationVariance(std::vector<double>{1.0}), Error);
}

TEST(ExplanationVarianceTest, SpecExamples) {
  ScriptedOracle constant(WithExplanation({0.3, 0.3, 0.3}, ScoreKind::kSoftmax));
  EXPECT_EQ(ExplanationVarianceScore(constant, kInput).score, 0.0);
  ScriptedOracle pm(WithExplanation({1.0, -1.0}, ScoreKind::kSoftmax));
  const MiaScore s = ExplanationVarianceScore(pm, kInput, 9);
  EXPECT_DOUBLE_EQ(s.score, 1.0);
  EXPECT_EQ(s.sample_id, 9u);
  EXPECT_EQ(s.direction, MiaDirection::kLowerIsMember);
  EXPECT_EQ(pm.ledger().count(), 1);
}

TEST(ExplanationVarianceTest, SelectorKindIsEnforced) {
  ScriptedOracle logit(WithExplanation({1.0, -1.0}, ScoreKind::kLogit));
  EXPECT_THROW(ExplanationVarianceScore(logit, kInput), Error);
  EXPECT_DOUBLE_EQ(OptVarScore(logit, kInput).score, 1.0);
  ScriptedOracle softmax(WithExplanation({1.0, -1.0}, ScoreKind::kSoftmax));
  EXPECT_THROW(OptVarScore(softmax, kInput), Error);
  ScriptedOracle bare(WithProbs({0.5, 0.5}));
  try {
    ExplanationVarianceScore(bare, kInput);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPolicy);
  }
}

TEST(ExplanationVarianceTest, SingleFeatureIsContractError) {
  ScriptedOracle oracle(WithExplanation({1.0}, ScoreKind::kSoftmax));
  EXPECT_THROW(ExplanationVarianceScore(oracle, Tensor::Vector({0.0})), Error);
  EXPECT_EQ(oracle.ledger().count(), 0);
}

TEST(ExplanationVarianceTest, LogitAndSoftmaxVariancesDifferOnOneLayerModel) {
  ModelGraph m = ModelGraph::FromSpec({{5}, {LayerSpec::Dense(3)}});
  auto params = m.mutable_params();
  Rng(2).FillNormal(params);
  auto model = std::make_shared<const ModelGraph>(std::move(m));
  OraclePolicy softmax;
  softmax.explanation = ExplanationPolicy{};
  OraclePolicy logit = softmax;
  logit.explanation->score_kind = ScoreKind::kLogit;
  LocalOracle a(model, softmax), b(model, logit);
  Tensor x(Shape{5});
  Rng(3).FillNormal(x.data());
  const double va = ExplanationVarianceScore(a, x).score;
  const double vb = OptVarScore(b, x).score;
  EXPECT_GT(std::abs(va - vb), 1e-6);
}

TEST(GapAttackTest, ScoresMatchPrediction) {
  ScriptedOracle oracle(WithProbs({0.2, 0.8}));
  const MiaScore right = GapAttackScore(oracle, kInput, 1);
  const MiaScore wrong = GapAttackScore(oracle, kInput, 0);
  EXPECT_TRUE(PredictMember(right.score, 0.5, right.direction));
  EXPECT_FALSE(PredictMember(wrong.score, 0.5, wrong.direction));
}

TEST(LossThresholdTest, SpecExamples) {
  ScriptedOracle certain(WithProbs({0.0, 1.0}));
  EXPECT_EQ(LossThresholdScore(certain, kInput, 1).score, 0.0);
  const double inv_e = std::exp(-1.0);
  ScriptedOracle e(WithProbs({inv_e, 1.0 - inv_e}));
  EXPECT_NEAR(LossThresholdScore(e, kInput, 0).score, 1.0, 1e-15);
  ScriptedOracle uniform(WithProbs({0.25, 0.25, 0.25, 0.25}));
  EXPECT_NEAR(LossThresholdScore(uniform, kInput, 2).score, std::log(4.0), 1e-15);
  const MiaScore clamped = LossThresholdScore(certain, kInput, 0);
  EXPECT_TRUE(clamped.clamped);
  EXPECT_NEAR(clamped.score, -std::log(kLossProbabilityFloor), 1e-9);
}

TEST(LossThresholdTest, HardOracleIsPolicyError) {
  OracleResponse r;
  r.label = 1;
  ScriptedOracle oracle(r);
  EXPECT_THROW(LossThresholdScore(oracle, kInput, 1), Error);
}

TEST(CalibrateThresholdTest, SeparatedScoresGiveMidpoint) {
  const std::vector<double> members(10, 0.0), nonmembers(10, 1.0);
  const Calibration c =
      CalibrateThreshold(members, nonmembers, MiaDirection::kLowerIsMember);
  EXPECT_DOUBLE_EQ(c.threshold, 0.5);
  EXPECT_DOUBLE_EQ(c.balanced_accuracy, 1.0);
  EXPECT_FALSE(c.degenerate);
  const Calibration h =
      CalibrateThreshold(nonmembers, members, MiaDirection::kHigherIsMember);
  EXPECT_DOUBLE_EQ(h.threshold, 0.5);
}

TEST(CalibrateThresholdTest, IdenticalMultisetsAreDegenerate) {
  const std::vector<double> a = {3.0, 1.0, 2.0, 4.0}, b = {4.0, 2.0, 3.0, 1.0};
  const Calibration c = CalibrateThreshold(a, b, MiaDirection::kLowerIsMember);
  EXPECT_TRUE(c.degenerate);
  EXPECT_DOUBLE_EQ(c.threshold, 2.5);
  EXPECT_DOUBLE_EQ(c.balanced_accuracy, 0.5);
}

TEST(CalibrateThresholdTest, SameDistributionNearChance) {
  Rng rng(8);
  std::vector<double> a(2000), b(2000);
  rng.FillNormal(a);
  rng.FillNormal(b);
  const Calibration c = CalibrateThreshold(a, b, MiaDirection::kLowerIsMember);
  EXPECT_LT(c.balanced_accuracy, 0.56);
}

double BalancedAccuracy(const std::vector<double>& m, const std::vector<double>& nm,
                        double t, MiaDirection d) {
  double tp = 0.0, tn = 0.0;
  for (double s : m) tp += PredictMember(s, t, d);
  for (double s : nm) tn += !PredictMember(s, t, d);
  return 0.5 * (tp / static_cast<double>(m.size()) + tn / static_cast<double>(nm.size()));
}

TEST(CalibrateThresholdTest, MatchesExhaustiveSweep) {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::vector<double> m(15 + seed), nm(25);
    for (double& v : m) v = std::round(4.0 * rng.Normal()) / 4.0;
    for (double& v : nm) v = std::round(4.0 * (rng.Normal() + 0.7)) / 4.0;
    for (MiaDirection d : {MiaDirection::kLowerIsMember, MiaDirection::kHigherIsMember}) {
      std::vector<double> all = m;
      all.insert(all.end(), nm.begin(), nm.end());
      std::sort(all.begin(), all.end());
      std::vector<double> candidates = {all.front() - 1.0, all.back() + 1.0};
      for (size_t i = 0; i + 1 < all.size(); ++i) {
        candidates.push_back(0.5 * (all[i] + all[i + 1]));
      }
      double best = 0.0;
      for (double t : candidates) best = std::max(best, BalancedAccuracy(m, nm, t, d));
      const Calibration c = CalibrateThreshold(m, nm, d);
      EXPECT_NEAR(c.balanced_accuracy, best, 1e-12) << "seed " << seed;
      EXPECT_NEAR(BalancedAccuracy(m, nm, c.threshold, d), best, 1e-12);
    }
  }
}

TEST(EvaluateMiaTest, PerfectSeparation) {
  const std::vector<double> scores = {0.1, 0.2, 0.9, 0.8};
  const std::vector<bool> member = {true, true, false, false};
  const MiaEvaluation ev = EvaluateMia(scores, member, 0.5, MiaDirection::kLowerIsMember);
  EXPECT_DOUBLE_EQ(ev.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(ev.advantage, 0.5);
  EXPECT_EQ(ev.true_member, 2u);
  EXPECT_EQ(ev.true_nonmember, 2u);
  EXPECT_EQ(ev.total(), 4u);
}

TEST(EvaluateMiaTest, IndependentScoresNearChance) {
  Rng rng(5);
  std::vector<double> scores(2000);
  rng.FillNormal(scores);
  std::vector<bool> member(2000);
  for (size_t i = 0; i < member.size(); ++i) member[i] = i % 2 == 0;
  const MiaEvaluation ev = EvaluateMia(scores, member, 0.0, MiaDirection::kLowerIsMember);
  EXPECT_GE(ev.accuracy, 0.45);
  EXPECT_LE(ev.accuracy, 0.55);
  EXPECT_EQ(ev.total(), 2000u);
}

TEST(EvaluateMiaTest, UnbalancedNeedsOverride) {
  const std::vector<double> scores = {0.1, 0.2, 0.9};
  const std::vector<bool> member = {true, true, false};
  EXPECT_THROW(EvaluateMia(scores, member, 0.5, MiaDirection::kLowerIsMember), Error);
  const MiaEvaluation ev =
      EvaluateMia(scores, member, 0.5, MiaDirection::kLowerIsMember, true);
  EXPECT_EQ(ev.total(), 3u);
  EXPECT_THROW(EvaluateMia(scores, {true, false}, 0.5, MiaDirection::kLowerIsMember),
               Error);
}

TEST(MannWhitneyTest, DetectsShiftAndIsSymmetricUnderNull) {
  Rng rng(11);
  std::vector<double> a(500), b(500);
  rng.FillNormal(a);
  rng.FillNormal(b);
  for (double& v : b) v += 0.5;
  EXPECT_LT(MannWhitneyLessPValue(a, b), 1e-6);
  EXPECT_GT(MannWhitneyLessPValue(b, a), 0.999);
  const std::vector<double> same = {1.0, 2.0, 3.0};
  EXPECT_NEAR(MannWhitneyLessPValue(same, same), 0.5, 1e-12);
}

TEST(MiaAttackTest, NamesRoundTrip) {
  for (MiaAttack a : {MiaAttack::kExplanationVariance, MiaAttack::kOptVar,
                      MiaAttack::kGap, MiaAttack::kLossThreshold}) {
    EXPECT_EQ(ParseMiaAttack(MiaAttackName(a)), a);
  }
  EXPECT_THROW(ParseMiaAttack("shadow"), Error);
}

}  // namespace
}  // namespace xglk
