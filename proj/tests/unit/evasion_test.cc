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

#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "xglk/error.h"
#include "xglk/evasion.h"
#include "xglk/model_zoo.h"
#include "xglk/oracle.h"
#include "xglk/rng.h"

namespace xglk {
namespace {

// Two-class linear victim whose logit gap is w . x (class 1 minus class 0).
std::shared_ptr<const ModelGraph> HalfspaceModel(const std::vector<double>& w) {
  ModelGraph m = ModelGraph::FromSpec({{w.size()}, {LayerSpec::Dense(2)}});
  auto p = m.mutable_params();
  for (size_t i = 0; i < w.size(); ++i) p[w.size() + i] = w[i];
  return std::make_shared<const ModelGraph>(std::move(m));
}

std::vector<double> UnitVector(size_t n, uint64_t seed) {
  std::vector<double> w(n);
  Rng(seed).FillNormal(w);
  const double norm = Norm2(w);
  for (double& v : w) v /= norm;
  return w;
}

Tensor Along(const std::vector<double>& w, double t) {
  Tensor x = Tensor::Vector(std::vector<double>(w.size(), 0.0));
  Axpy(t, w, x.data());
  return x;
}

OraclePolicy HardPolicy() {
  OraclePolicy p;
  p.label_mode = LabelMode::kHard;
  return p;
}

TEST(NesEstimateTest, ConstantFunctionGivesZero) {
  Rng rng(3);
  const Tensor g = NesEstimate([](const Tensor&) { return 0.25; },
                               Tensor::Vector({1, 2, 3}), {}, 50, 0.1, rng);
  EXPECT_EQ(g, Tensor::Vector({0.0, 0.0, 0.0}));
}

TEST(NesEstimateTest, EgtaLambdaZeroIsExactProjection) {
  const Tensor a = Tensor::Vector({0.5, -1.0, 2.0, 0.0});
  const Tensor e = Tensor::Vector({0.6, 0.0, 0.0, 0.8});
  SamplerSpec s{SamplerKind::kEgta, 0.0, 1.0, e};
  Rng rng(1);
  const Tensor g = NesEstimate(
      [&](const Tensor& z) { return Dot(a.data(), z.data()); },
      Tensor::Vector({1, 1, 1, 1}), s, 7, 0.01, rng);
  const double ae = Dot(a.data(), e.data());
  for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], ae * e[i], 1e-12);
}

// On a linear score the estimate is (1/B) sum (a . u) u, whose mean is
// E[u u^T] a.
TEST(NesEstimateTest, EgtaMeanOnLinearScore) {
  const size_t n = 5;
  const std::vector<double> a_vec = {1.0, -0.5, 0.25, 2.0, -1.0};
  const Tensor a = Tensor::Vector(a_vec);
  const Tensor e = Tensor::Vector(UnitVector(n, 9));
  const double lambda = 0.3, eps = 0.5;
  SamplerSpec s{SamplerKind::kEgta, lambda, eps, e};
  const int trials = 20000;
  std::vector<double> sum(n, 0.0), sum2(n, 0.0);
  Rng rng(11);
  const ScalarFunction f = [&](const Tensor& z) { return Dot(a.data(), z.data()); };
  for (int t = 0; t < trials; ++t) {
    const Tensor g = NesEstimate(f, Tensor(Shape{n}), s, 1, 0.1, rng);
    for (size_t i = 0; i < n; ++i) {
      sum[i] += g[i];
      sum2[i] += g[i] * g[i];
    }
  }
  const double ae = Dot(a.data(), e.data());
  for (size_t i = 0; i < n; ++i) {
    const double mean = sum[i] / trials;
    const double se = std::sqrt((sum2[i] / trials - mean * mean) / trials);
    const double expected = lambda * eps * a[i] + (1 - lambda) * ae * e[i];
    EXPECT_NEAR(mean, expected, 3.5 * se) << "coordinate " << i;
  }
}

TEST(SamplerTest, EgtaRejectsNonUnitPrior) {
  try {
    EgtaSample(Tensor::Vector({1, 1}), Tensor::Vector({1, 1}), 0.5);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kContract);
  }
}

TEST(SamplerTest, EgsaRejectsNegativePrior) {
  try {
    EgsaSample(Tensor::Vector({1, 1}), Tensor::Vector({1, -1}), 0.5);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kContract);
  }
}

TEST(SamplerTest, EgsaEndpoints) {
  const Tensor u = Tensor::Vector({1.0, -2.0, 3.0});
  const Tensor p = Tensor::Vector({0.0, 0.5, 2.0});
  EXPECT_EQ(EgsaSample(u, p, 1.0), u);
  EXPECT_EQ(EgsaSample(u, p, 0.0), Tensor::Vector({0.0, -1.0, 6.0}));
}

// A single draw scales each coordinate by sqrt(l) + sqrt(1 - l) p_i, so the
// covariance is eps * diag((sqrt(l) + sqrt(1 - l) p_i)^2).
TEST(SamplerTest, EgsaCovarianceIsDiagonalSquaredScale) {
  const Tensor p = Tensor::Vector({0.0, 0.5, 1.0, 2.0});
  const double lambda = 0.4, eps = 2.0;
  SamplerSpec s{SamplerKind::kEgsa, lambda, eps, p};
  Rng rng(5);
  const int draws = 200000;
  std::vector<double> var(4, 0.0);
  double cross = 0.0;
  for (int d = 0; d < draws; ++d) {
    const Tensor u = DrawSearchVector(s, {4}, rng);
    for (size_t i = 0; i < 4; ++i) var[i] += u[i] * u[i] / draws;
    cross += u[1] * u[2] / draws;
  }
  for (size_t i = 0; i < 4; ++i) {
    const double scale = std::sqrt(lambda) + std::sqrt(1 - lambda) * p[i];
    EXPECT_NEAR(var[i], eps * scale * scale, 0.02 * eps * scale * scale);
  }
  EXPECT_NEAR(cross, 0.0, 0.03);
}

TEST(L2ProjectTest, InsideIsUnchanged) {
  const Tensor z = Tensor::Vector({0.3, 0.4});
  EXPECT_EQ(L2Project(z, Tensor::Vector({0, 0}), 1.0), z);
}

TEST(L2ProjectTest, OutsideLandsOnSphere) {
  const Tensor c = Tensor::Vector({1, 1});
  const Tensor p = L2Project(Tensor::Vector({4, 5}), c, 2.5);
  EXPECT_NEAR(p[0], 1 + 1.5, 1e-12);
  EXPECT_NEAR(p[1], 1 + 2.0, 1e-12);
}

TEST(NesGradientEstimateTest, SpendsTwoQueriesPerSample) {
  LocalOracle oracle(HalfspaceModel({1, 0, 0}), {});
  Rng rng(0);
  NesGradientEstimate(oracle, Tensor::Vector({0, 0, 0}), 1, {}, 6, 0.01, rng, 100);
  EXPECT_EQ(oracle.ledger().count(), 12);
  EXPECT_EQ(oracle.ledger().count(QueryPurpose::kEstimation), 12);
}

TEST(NesGradientEstimateTest, BudgetExhaustionCarriesSpentQueries) {
  LocalOracle oracle(HalfspaceModel({1, 0, 0}), {});
  Rng rng(0);
  try {
    NesGradientEstimate(oracle, Tensor::Vector({0, 0, 0}), 1, {}, 6, 0.01, rng, 5);
    FAIL();
  } catch (const BudgetExhausted& err) {
    EXPECT_EQ(err.queries_spent(), 5);
    EXPECT_EQ(oracle.ledger().count(), 5);
  }
}

TEST(SoftLabelAttackTest, AlreadyMisclassifiedCostsOneQuery) {
  LocalOracle oracle(HalfspaceModel({1, 0}), {});
  AttackConfig cfg;
  const AttackTrace t = SoftLabelAttack(oracle, Tensor::Vector({1, 0}), 0, cfg,
                                        AttackStrategy::kNes);
  EXPECT_TRUE(t.success);
  EXPECT_EQ(t.queries_used, 1);
  EXPECT_EQ(oracle.ledger().count(), 1);
}

TEST(SoftLabelAttackTest, ReachesNearbyBoundaryWithinBudget) {
  const std::vector<double> w = UnitVector(10, 4);
  LocalOracle oracle(HalfspaceModel(w), {});
  const Tensor x = Along(w, -0.5);
  AttackConfig cfg;
  cfg.epsilon_budget = 1.25;
  cfg.step_size = 0.05;
  cfg.seed = 2;
  const AttackTrace t = SoftLabelAttack(oracle, x, 0, cfg, AttackStrategy::kNes);
  EXPECT_TRUE(t.success);
  EXPECT_LE(Distance(t.final_input.data(), x.data()), 1.25 + 1e-9);
  EXPECT_EQ(t.queries_used, oracle.ledger().count());
  EXPECT_EQ(t.distortion_history.back().first, t.queries_used);
}

TEST(SoftLabelAttackTest, TinyBudgetFailsWithinQueryCap) {
  const std::vector<double> w = UnitVector(10, 4);
  LocalOracle oracle(HalfspaceModel(w), {});
  AttackConfig cfg;
  cfg.epsilon_budget = 0.1;
  cfg.max_queries = 500;
  const AttackTrace t =
      SoftLabelAttack(oracle, Along(w, -0.5), 0, cfg, AttackStrategy::kNes);
  EXPECT_FALSE(t.success);
  EXPECT_LE(t.queries_used, 500);
  EXPECT_EQ(t.queries_used, oracle.ledger().count());
}

TEST(SoftLabelAttackTest, EgtaNeedsExplanations) {
  LocalOracle oracle(HalfspaceModel({1, 0}), {});
  try {
    SoftLabelAttack(oracle, Tensor::Vector({-1, 0}), 0, {}, AttackStrategy::kEgta);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kContract);
  }
}

TEST(SoftLabelAttackTest, EgtaWithExactGradientBeatsNes) {
  const std::vector<double> w = UnitVector(40, 8);
  OraclePolicy pol;
  pol.explanation = ExplanationPolicy{};
  LocalOracle nes_oracle(HalfspaceModel(w), pol), egta_oracle(HalfspaceModel(w), pol);
  AttackConfig cfg;
  cfg.step_size = 0.02;
  cfg.seed = 1;
  const Tensor x = Along(w, -0.6);
  const AttackTrace nes = SoftLabelAttack(nes_oracle, x, 0, cfg, AttackStrategy::kNes);
  const AttackTrace egta =
      SoftLabelAttack(egta_oracle, x, 0, cfg, AttackStrategy::kEgta);
  ASSERT_TRUE(nes.success);
  ASSERT_TRUE(egta.success);
  EXPECT_LT(egta.queries_used, nes.queries_used);
}

TEST(HardLabelDirectionTest, AlignsWithBoundaryNormal) {
  const std::vector<double> w = UnitVector(20, 2);
  const DecisionFn phi = [&](const Tensor& z) { return Dot(w, z.data()) > 0.0; };
  Rng rng(7);
  const Tensor g = HardLabelDirection(phi, Tensor(Shape{20}), {}, 2000, 0.01, rng);
  EXPECT_GE(CosineSimilarity(g.data(), w), 0.9);
}

TEST(HardLabelAttackTest, ConvergesToHalfspaceProjection) {
  const size_t n = 20;
  const std::vector<double> w = UnitVector(n, 6);
  LocalOracle oracle(HalfspaceModel(w), HardPolicy());
  const Tensor x = Along(w, -1.0);  // distance 1 from the boundary
  Tensor init = Along(w, 3.0);
  std::vector<double> side = UnitVector(n, 12);
  Axpy(2.0, side, init.data());
  AttackConfig cfg;
  cfg.hard_threshold = 1.05;
  cfg.samples = 50;
  cfg.max_queries = 20000;
  const AttackTrace t =
      HardLabelAttack(oracle, x, init, {1, true}, cfg, AttackStrategy::kNes);
  EXPECT_TRUE(t.success);
  const double d = Distance(t.final_input.data(), x.data());
  EXPECT_GE(d, 1.0 - 1e-9);
  EXPECT_LE(d, 1.05);
  EXPECT_EQ(oracle.Query(t.final_input).label, 1u);
  EXPECT_EQ(t.queries_used + 1, oracle.ledger().count());
}

TEST(HardLabelAttackTest, InitWithinThresholdSucceedsImmediately) {
  LocalOracle oracle(HalfspaceModel({1, 0}), HardPolicy());
  AttackConfig cfg;
  cfg.hard_threshold = 5.0;
  const AttackTrace t = HardLabelAttack(oracle, Tensor::Vector({-1, 0}),
                                        Tensor::Vector({1, 0}), {0, false}, cfg,
                                        AttackStrategy::kNes);
  EXPECT_TRUE(t.success);
  EXPECT_EQ(t.queries_used, 1);
}

TEST(HardLabelAttackTest, InitMustSatisfyGoal) {
  LocalOracle oracle(HalfspaceModel({1, 0}), HardPolicy());
  try {
    HardLabelAttack(oracle, Tensor::Vector({-1, 0}), Tensor::Vector({-2, 0}),
                    {1, true}, {}, AttackStrategy::kNes);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kPrecondition);
  }
}

std::vector<BufferEntry> VictimBuffer(const ModelGraph& victim, size_t count,
                                      uint64_t seed) {
  std::vector<BufferEntry> buffer;
  Rng rng(seed);
  for (size_t i = 0; i < count; ++i) {
    Tensor x(victim.input_shape());
    rng.FillNormal(x.data());
    const size_t y = ArgMax(Forward(victim, x).data());
    buffer.push_back(
        {x, y, GradInput(victim, x, {ScoreKind::kSoftmax, y})});
  }
  return buffer;
}

TEST(SurrogateFinetuneTest, VictimAsSurrogateHasZeroLossAndStays) {
  const ModelGraph victim = BuildModel(MlpSpec(4, 3, 8), 1);
  const auto buffer = VictimBuffer(victim, 10, 2);
  ModelGraph s = victim;
  TrainConfig cfg;
  cfg.epochs = 5;
  const FinetuneResult r = SurrogateFinetune(s, buffer, 0.5, cfg, {});
  EXPECT_DOUBLE_EQ(r.loss_before, 0.0);
  EXPECT_DOUBLE_EQ(r.loss_after, 0.0);
  EXPECT_TRUE(std::equal(s.params().begin(), s.params().end(),
                         victim.params().begin()));
}

TEST(SurrogateFinetuneTest, AlphaZeroIgnoresExplanations) {
  const ModelGraph victim = BuildModel(MlpSpec(4, 3, 8), 1);
  auto with = VictimBuffer(victim, 10, 2);
  auto without = with;
  for (auto& e : without) e.explanation.reset();
  ModelGraph a = BuildModel(MlpSpec(4, 3, 8), 7), b = a;
  TrainConfig cfg;
  cfg.epochs = 3;
  SurrogateFinetune(a, with, 0.0, cfg, {});
  SurrogateFinetune(b, without, 0.0, cfg, {});
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST(SurrogateFinetuneTest, HalvesLossIn200Epochs) {
  const ModelGraph victim = BuildModel(MlpSpec(4, 3, 8), 1);
  const auto buffer = VictimBuffer(victim, 20, 3);
  ModelGraph s = BuildModel(MlpSpec(4, 3, 8), 9);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 20;
  cfg.learning_rate = 1e-2;
  const FinetuneResult r = SurrogateFinetune(s, buffer, 0.5, cfg, {});
  EXPECT_GT(r.loss_before, 0.0);
  EXPECT_LE(r.loss_after, 0.5 * r.loss_before);
  EXPECT_NEAR(SurrogateLoss(s, buffer, 0.5, {}), r.loss_after, 1e-12);
}

TEST(SurrogateFinetuneTest, LimeCannotBeMatched) {
  const ModelGraph victim = BuildModel(MlpSpec(4, 3, 8), 1);
  ModelGraph s = victim;
  SurrogateExplainer ex;
  ex.method = ExplainMethod::kLime;
  try {
    SurrogateFinetune(s, VictimBuffer(victim, 3, 1), 0.5, {}, ex);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kInapplicable);
  }
}

TEST(EgsmaAttackTest, SurrogateWorkIsFree) {
  const std::vector<double> w = UnitVector(6, 3);
  OraclePolicy pol;
  pol.explanation = ExplanationPolicy{};
  LocalOracle oracle(HalfspaceModel(w), pol);
  EgsmaSetup setup{BuildModel(MlpSpec(6, 2, 8), 2),
                   VictimBuffer(*HalfspaceModel(w), 8, 4),
                   {},
                   true};
  AttackConfig cfg;
  cfg.step_size = 0.05;
  cfg.max_queries = 3000;
  cfg.refit_every = 100;
  cfg.refit_epochs = 2;
  const AttackTrace t = EgsmaAttack(oracle, Along(w, -0.5), 0, cfg, setup);
  EXPECT_TRUE(t.success);
  EXPECT_EQ(t.strategy, AttackStrategy::kEgsma);
  EXPECT_EQ(t.queries_used, oracle.ledger().count());
}

TEST(EgsmaAttackTest, NoRefitWhenCadenceExceedsBudget) {
  const std::vector<double> w = UnitVector(6, 3);
  LocalOracle oracle(HalfspaceModel(w), {});
  const ModelGraph start = BuildModel(MlpSpec(6, 2, 8), 2);
  EgsmaSetup setup{start, {}, {}, true};
  AttackConfig cfg;
  cfg.max_queries = 200;
  cfg.refit_every = 1000;
  cfg.epsilon_budget = 0.05;
  const AttackTrace t = EgsmaAttack(oracle, Along(w, -0.5), 0, cfg, setup);
  EXPECT_FALSE(t.success);
  EXPECT_TRUE(std::equal(start.params().begin(), start.params().end(),
                         setup.surrogate.params().begin()));
  EXPECT_EQ(t.queries_used, oracle.ledger().count());
}

TEST(ChooseStrategyTest, Taxonomy) {
  EXPECT_EQ(ChooseStrategy(ExplanationForm::kAbs, 0.9), AttackStrategy::kEgsa);
  EXPECT_EQ(ChooseStrategy(ExplanationForm::kAbs, std::nullopt), AttackStrategy::kEgsa);
  EXPECT_EQ(ChooseStrategy(ExplanationForm::kTrue, 0.5), AttackStrategy::kEgta);
  EXPECT_EQ(ChooseStrategy(ExplanationForm::kTrue, 0.2), AttackStrategy::kEgsma);
  EXPECT_EQ(ChooseStrategy(ExplanationForm::kTrue, std::nullopt),
            AttackStrategy::kEgsma);
}

TEST(AttackStrategyTest, NamesRoundTrip) {
  for (AttackStrategy s : {AttackStrategy::kNes, AttackStrategy::kEgta,
                           AttackStrategy::kEgsa, AttackStrategy::kEgsma}) {
    EXPECT_EQ(ParseAttackStrategy(AttackStrategyName(s)), s);
  }
  EXPECT_THROW(ParseAttackStrategy("pgd"), Error);
}

TEST(RmsNormalizeTest, UnitRms) {
  const Tensor v = RmsNormalize(Tensor::Vector({3.0, 4.0, 0.0, 0.0}));
  EXPECT_NEAR(SquaredNorm(v.data()), 4.0, 1e-12);
  EXPECT_THROW(RmsNormalize(Tensor::Vector({0.0, 0.0})), Error);
}

}  // namespace
}  // namespace xglk
