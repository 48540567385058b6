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

#include "xglk/extraction.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "xglk/error.h"
#include "xglk/rng.h"

namespace xglk {

namespace {

void CheckConfig(const MeaConfig& cfg) {
  Require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, ErrorKind::kContract,
          "alpha must lie in [0, 1]");
  Require(cfg.budget >= 1, ErrorKind::kContract, "query budget must be >= 1");
  Require(cfg.lime_masks >= 1, ErrorKind::kContract, "need at least one LIME mask");
}

// 1/2 ||softmax(z) - p||^2, or 1/2 ||log softmax(z) - log p||^2.
LossValue PredictionLoss(const Tensor& z, const Tensor& p, PredictionMatch kind) {
  Require(z.shape() == p.shape(), ErrorKind::kShape,
          "surrogate and victim disagree on the number of classes");
  const Tensor q = Softmax(z);
  Tensor r(z.shape());
  if (kind == PredictionMatch::kSoftmaxL2) {
    for (size_t i = 0; i < z.size(); ++i) r[i] = q[i] - p[i];
    const double qr = Dot(q.data(), r.data());
    Tensor g(z.shape());
    for (size_t i = 0; i < z.size(); ++i) g[i] = q[i] * (r[i] - qr);
    return {Tensor::Vector({0.5 * SquaredNorm(r.data())}), std::move(g)};
  }
  for (size_t i = 0; i < z.size(); ++i) {
    r[i] = std::log(std::max(q[i], 1e-300)) - std::log(std::max(p[i], 1e-12));
  }
  double rsum = 0.0;
  for (double v : r.values()) rsum += v;
  Tensor g(z.shape());
  for (size_t i = 0; i < z.size(); ++i) g[i] = r[i] - q[i] * rsum;
  return {Tensor::Vector({0.5 * SquaredNorm(r.data())}), std::move(g)};
}

// Selected score and its parameter gradient.
ParamGradient ScoreParamGradient(const ModelGraph& m, const Tensor& x,
                                 const ScoreSelector& sel) {
  return GradParams(m, x, [&](const Tensor& z) {
    return LossValue{Tensor::Vector({SelectedScore(z, sel)}), ScoreSeed(z, sel)};
  });
}

double LimeMatchLoss(const ModelGraph& m, const MeaSample& s, const MeaConfig& cfg,
                     std::span<double> grad, double weight) {
  const Explanation& e = *s.explanation;
  const auto groups = DefaultLimeGroups(s.x.shape());
  std::vector<double> coef(groups.size());
  for (size_t g = 0; g < groups.size(); ++g) coef[g] = e.values[groups[g].front()];
  const ScoreSelector sel = e.selector;
  const ParamGradient base = ScoreParamGradient(m, s.x, sel);
  Rng rng(ExplanationSeed(cfg.seed, s.x), "mea-lime");
  double loss = 0.0;
  const double k = static_cast<double>(cfg.lime_masks);
  for (size_t j = 0; j < cfg.lime_masks; ++j) {
    const size_t off = 1 + rng.UniformInt(groups.size());
    const std::vector<size_t> order = rng.Permutation(groups.size());
    Tensor masked = s.x;
    double predicted = 0.0;
    for (size_t q = 0; q < off; ++q) {
      for (size_t i : groups[order[q]]) masked[i] = 0.0;
      predicted -= coef[order[q]];
    }
    const ParamGradient pm = ScoreParamGradient(m, masked, sel);
    const double r = (pm.loss - base.loss) - predicted;
    loss += 0.5 * r * r / k;
    if (!grad.empty()) {
      Axpy(weight * r / k, pm.grad, grad);
      Axpy(-weight * r / k, base.grad, grad);
    }
  }
  return loss;
}

double SampleLoss(const ModelGraph& m, const MeaSample& s, const MeaConfig& cfg,
                  const SurrogateExplainer& ex, std::span<double> grad) {
  const ParamGradient pg = GradParams(
      m, s.x, [&](const Tensor& z) { return PredictionLoss(z, s.probs, cfg.prediction); });
  double loss = pg.loss;
  if (!grad.empty()) Axpy(1.0, pg.grad, grad);
  if (cfg.alpha == 0.0 || !s.explanation) return loss;
  Require(s.explanation->form == ExplanationForm::kTrue, ErrorKind::kContract,
          "explanation matching needs true-form explanations");
  if (ex.method == ExplainMethod::kLime) {
    return loss + cfg.alpha * LimeMatchLoss(m, s, cfg, grad, cfg.alpha);
  }
  ExplainerParams params = ex.params;
  params.seed = ExplanationSeed(ex.params.seed, s.x);
  const MatchGradient mg = ExplanationMatchGradient(m, s.x, s.explanation->selector,
                                                    ex.method, params,
                                                    s.explanation->values);
  if (!grad.empty()) Axpy(cfg.alpha, mg.params, grad);
  return loss + cfg.alpha * mg.loss;
}

}  // namespace

double MeaLoss(const ModelGraph& surrogate, const std::vector<MeaSample>& samples,
               const MeaConfig& cfg, const SurrogateExplainer& explainer) {
  CheckConfig(cfg);
  Require(!samples.empty(), ErrorKind::kContract, "no extraction samples");
  double total = 0.0;
  for (const MeaSample& s : samples) total += SampleLoss(surrogate, s, cfg, explainer, {});
  return total / static_cast<double>(samples.size());
}

MeaTrainResult MeaTrain(Oracle& victim, ModelGraph& surrogate,
                        const std::vector<Tensor>& pool, const MeaConfig& cfg,
                        const SurrogateExplainer& explainer) {
  CheckConfig(cfg);
  const auto budget = static_cast<size_t>(cfg.budget);
  Require(budget <= pool.size(), ErrorKind::kContract,
          "query budget exceeds the pool size");
  Require(budget >= cfg.train.batch_size, ErrorKind::kContract,
          "query budget is smaller than one batch");
  const int64_t start = victim.ledger().count();
  const std::vector<size_t> perm = Rng(cfg.seed, "mea-pool").Permutation(pool.size());
  std::vector<MeaSample> samples;
  samples.reserve(budget);
  for (size_t i = 0; i < budget; ++i) {
    const Tensor& x = pool[perm[i]];
    OracleResponse r = victim.Query(x, QueryPurpose::kEstimation);
    Require(r.probs.has_value(), ErrorKind::kPolicy,
            "extraction needs a soft-label victim");
    samples.push_back({x, std::move(*r.probs), std::move(r.explanation)});
  }
  MeaTrainResult result;
  result.queries = victim.ledger().count() - start;
  result.initial_loss = MeaLoss(surrogate, samples, cfg, explainer);
  const ModelGraph before = surrogate;
  const TrainResult tr = Optimize(
      surrogate, samples.size(),
      [&](const ModelGraph& m, size_t i, std::span<double> grad) {
        return SampleLoss(m, samples[i], cfg, explainer, grad);
      },
      cfg.train);
  result.epoch_loss = tr.epoch_loss;
  result.final_loss = MeaLoss(surrogate, samples, cfg, explainer);
  if (result.final_loss > result.initial_loss) {
    surrogate = before;
    result.final_loss = result.initial_loss;
  }
  return result;
}

double RTest(double victim_accuracy, double surrogate_accuracy) {
  return (victim_accuracy - surrogate_accuracy) * 100.0;
}

double Msv(const Tensor& e) {
  Require(!e.empty(), ErrorKind::kContract, "MSV of an empty explanation");
  return SquaredNorm(e.data()) / static_cast<double>(e.size());
}

double Agreement(const ModelGraph& a, const ModelGraph& b,
                 const std::vector<Tensor>& inputs) {
  Require(!inputs.empty(), ErrorKind::kContract, "agreement needs inputs");
  size_t same = 0;
  for (const Tensor& x : inputs) {
    same += ArgMax(Forward(a, x).data()) == ArgMax(Forward(b, x).data());
  }
  return static_cast<double>(same) / static_cast<double>(inputs.size());
}

double MeanMsv(const ModelGraph& victim, const std::vector<Tensor>& inputs,
               ExplainMethod method, const ExplainerParams& params, size_t limit) {
  const size_t n = std::min(limit, inputs.size());
  Require(n > 0, ErrorKind::kContract, "MSV needs inputs");
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Tensor& x = inputs[i];
    const size_t pred = ArgMax(Forward(victim, x).data());
    ExplainerParams p = params;
    p.seed = ExplanationSeed(params.seed, x);
    total += Msv(Explain(victim, x, {ScoreKind::kSoftmax, pred}, method, p).values);
  }
  return total / static_cast<double>(n);
}

std::vector<MeaResult> BudgetSweep(const SweepSetup& setup,
                                   const std::vector<int64_t>& budgets,
                                   const std::vector<MeaCell>& cells) {
  Require(setup.victim != nullptr, ErrorKind::kContract, "sweep needs a victim");
  Require(std::is_sorted(budgets.begin(), budgets.end()), ErrorKind::kContract,
          "budgets must be ascending");
  const double victim_acc = EvaluateAccuracy(*setup.victim, setup.test);
  std::map<ExplainMethod, double> msv;
  std::vector<MeaResult> out;
  for (int64_t budget : budgets) {
    for (const MeaCell& cell : cells) {
      OraclePolicy policy;
      policy.explanation = ExplanationPolicy{cell.method, ScoreKind::kSoftmax,
                                             ExplanationForm::kTrue, cell.params};
      policy.attach_explanation = cell.alpha > 0.0;
      LocalOracle oracle(setup.victim, policy);
      ModelGraph surrogate = BuildModel(setup.surrogate_spec, setup.base.seed);
      MeaConfig cfg = setup.base;
      cfg.alpha = cell.alpha;
      cfg.budget = budget;
      const MeaTrainResult tr = MeaTrain(
          oracle, surrogate, setup.pool, cfg,
          SurrogateExplainer{cell.method, ScoreKind::kSoftmax, cell.params});
      MeaResult r;
      r.budget = budget;
      r.method = cell.method;
      r.alpha = cell.alpha;
      r.victim_accuracy = victim_acc;
      r.surrogate_accuracy = EvaluateAccuracy(surrogate, setup.test);
      r.r_test = RTest(victim_acc, r.surrogate_accuracy);
      r.agreement = Agreement(*setup.victim, surrogate, setup.test.inputs);
      if (!msv.count(cell.method)) {
        msv[cell.method] = MeanMsv(*setup.victim, setup.msv_inputs, cell.method,
                                   cell.params, setup.msv_samples);
      }
      r.msv_mean = msv[cell.method];
      r.queries = tr.queries;
      r.initial_loss = tr.initial_loss;
      r.final_loss = tr.final_loss;
      out.push_back(r);
    }
  }
  return out;
}

namespace {

std::vector<double> AverageRanks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (size_t k = i; k < j; ++k) rank[idx[k]] = avg;
    i = j;
  }
  return rank;
}

}  // namespace

double SpearmanCorrelation(const std::vector<double>& a, const std::vector<double>& b) {
  Require(a.size() == b.size() && a.size() >= 2, ErrorKind::kContract,
          "rank correlation needs two equal-length samples of size >= 2");
  const std::vector<double> ra = AverageRanks(a), rb = AverageRanks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  Require(saa > 0.0 && sbb > 0.0, ErrorKind::kDegenerate,
          "rank correlation of a constant sample is undefined");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace xglk
