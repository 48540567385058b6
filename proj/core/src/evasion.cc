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

#include "xglk/evasion.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>

#include "xglk/error.h"

namespace xglk {

const char* AttackStrategyName(AttackStrategy s) {
  switch (s) {
    case AttackStrategy::kNes:
      return "nes";
    case AttackStrategy::kEgta:
      return "egta";
    case AttackStrategy::kEgsa:
      return "egsa";
    case AttackStrategy::kEgsma:
      return "egsma";
  }
  return "?";
}

AttackStrategy ParseAttackStrategy(const std::string& name) {
  for (AttackStrategy s : {AttackStrategy::kNes, AttackStrategy::kEgta,
                           AttackStrategy::kEgsa, AttackStrategy::kEgsma}) {
    if (name == AttackStrategyName(s)) return s;
  }
  Fail(ErrorKind::kConfig, "unknown attack strategy '" + name + "'");
}

const char* StepRuleName(StepRule rule) {
  return rule == StepRule::kSign ? "sign" : "l2";
}

StepRule ParseStepRule(const std::string& name) {
  if (name == "sign") return StepRule::kSign;
  if (name == "l2") return StepRule::kL2;
  Fail(ErrorKind::kConfig, "unknown step rule '" + name + "'");
}

namespace {

void CheckLambda(double lambda) {
  Require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kContract,
          "lambda must lie in [0, 1]");
}

void ValidateConfig(const AttackConfig& cfg) {
  CheckLambda(cfg.lambda);
  Require(cfg.samples >= 1, ErrorKind::kContract, "B must be >= 1");
  Require(cfg.delta > 0.0, ErrorKind::kContract, "delta must be positive");
  Require(cfg.epsilon_budget > 0.0 && cfg.hard_threshold > 0.0, ErrorKind::kContract,
          "attack budgets must be positive");
  Require(cfg.step_size > 0.0, ErrorKind::kContract, "step size must be positive");
  Require(cfg.max_queries >= 1, ErrorKind::kContract, "max_queries must be >= 1");
}

double SamplerVariance(const AttackConfig& cfg, size_t n) {
  return cfg.sampler_variance > 0.0 ? cfg.sampler_variance
                                    : 1.0 / static_cast<double>(n);
}

// Meters one attack against the oracle's ledger.
class Meter {
 public:
  Meter(Oracle& oracle, int64_t max_queries)
      : oracle_(oracle), start_(oracle.ledger().count()), max_(max_queries) {}

  int64_t used() const { return oracle_.ledger().count() - start_; }
  int64_t remaining() const { return max_ - used(); }

  OracleResponse Query(const Tensor& x, QueryPurpose purpose) {
    if (used() >= max_) throw BudgetExhausted(used(), "attack query budget exhausted");
    return oracle_.Query(x, purpose);
  }

  Oracle& oracle() { return oracle_; }

 private:
  Oracle& oracle_;
  int64_t start_;
  int64_t max_;
};

Tensor Sign(const Tensor& g) {
  Tensor s = Tensor::ZerosLike(g);
  for (size_t i = 0; i < g.size(); ++i) s[i] = (g[i] > 0.0) - (g[i] < 0.0);
  return s;
}

Tensor Step(const Tensor& g, const AttackConfig& cfg) {
  if (cfg.step_rule == StepRule::kSign) return cfg.step_size * Sign(g);
  const double norm = Norm2(g.data());
  if (norm == 0.0) return Tensor::ZerosLike(g);
  return g * (cfg.step_size * std::sqrt(static_cast<double>(g.size())) / norm);
}

// Builds the search distribution of `strategy` from a victim explanation.
SamplerSpec SamplerFromExplanation(AttackStrategy strategy, const AttackConfig& cfg,
                                   double variance,
                                   const std::optional<Explanation>& e) {
  SamplerSpec s;
  s.variance = variance;
  s.lambda = cfg.lambda;
  if (strategy == AttackStrategy::kNes) return s;
  Require(e.has_value(), ErrorKind::kContract,
          std::string(AttackStrategyName(strategy)) +
              " needs an oracle that attaches explanations");
  const double norm = Norm2(e->values.data());
  if (norm == 0.0) return s;  // an all-zero explanation carries no prior
  if (strategy == AttackStrategy::kEgta) {
    s.kind = SamplerKind::kEgta;
    s.prior = e->values * (1.0 / norm);
  } else {
    s.kind = SamplerKind::kEgsa;
    s.prior = RmsNormalize(ToAbsolute(*e).values);
  }
  return s;
}

using SamplerHook =
    std::function<SamplerSpec(const Tensor& x, const OracleResponse& r, Meter& meter)>;

AttackTrace SoftLoop(Oracle& oracle, const Tensor& x0, size_t t,
                     const AttackConfig& cfg, AttackStrategy strategy,
                     const SamplerHook& hook) {
  ValidateConfig(cfg);
  Meter meter(oracle, cfg.max_queries);
  Rng rng(cfg.seed, "soft-label");
  AttackTrace trace;
  trace.strategy = strategy;
  Tensor x = x0;
  const int64_t pair_cost = 2 * static_cast<int64_t>(cfg.samples);
  try {
    for (;;) {
      const OracleResponse r = meter.Query(x, QueryPurpose::kVerification);
      Require(r.probs.has_value(), ErrorKind::kContract,
              "soft-label attacks need a soft-label oracle");
      const double dist = Distance(x.data(), x0.data());
      trace.distortion_history.emplace_back(meter.used(), dist);
      if (r.predicted() != t) {
        trace.success = dist <= cfg.epsilon_budget * (1.0 + 1e-12);
        break;
      }
      const SamplerSpec sampler = hook(x, r, meter);
      if (meter.remaining() < pair_cost + 1) break;
      const Tensor g = NesGradientEstimate(meter.oracle(), x, t, sampler, cfg.samples,
                                           cfg.delta, rng, meter.remaining());
      x = L2Project(x - Step(g, cfg), x0, cfg.epsilon_budget);
    }
  } catch (const BudgetExhausted&) {
    trace.success = false;
  }
  trace.queries_used = meter.used();
  trace.final_input = std::move(x);
  return trace;
}

}  // namespace

Tensor RmsNormalize(const Tensor& v) {
  const double norm = Norm2(v.data());
  Require(norm > 0.0, ErrorKind::kDegenerate, "cannot rescale an all-zero prior");
  return v * (std::sqrt(static_cast<double>(v.size())) / norm);
}

Tensor EgtaSample(const Tensor& u, const Tensor& e, double lambda) {
  CheckLambda(lambda);
  Require(u.shape() == e.shape(), ErrorKind::kShape, "prior shape mismatch");
  Require(std::abs(Norm2(e.data()) - 1.0) <= 1e-9, ErrorKind::kContract,
          "EGTA prior must have unit norm");
  Tensor out = u * std::sqrt(lambda);
  Axpy(std::sqrt(1.0 - lambda), e.data(), out.data());
  return out;
}

Tensor EgsaSample(const Tensor& u, const Tensor& e_abs, double lambda) {
  CheckLambda(lambda);
  Require(u.shape() == e_abs.shape(), ErrorKind::kShape, "prior shape mismatch");
  Tensor out = u * std::sqrt(lambda);
  const double c = std::sqrt(1.0 - lambda);
  for (size_t i = 0; i < u.size(); ++i) {
    Require(e_abs[i] >= 0.0, ErrorKind::kContract,
            "EGSA needs an absolute-value explanation");
    out[i] += c * e_abs[i] * u[i];
  }
  return out;
}

Tensor DrawSearchVector(const SamplerSpec& sampler, const Shape& shape, Rng& rng) {
  Require(sampler.variance > 0.0, ErrorKind::kContract,
          "search variance must be positive");
  Tensor u(shape);
  rng.FillNormal(u.data(), std::sqrt(sampler.variance));
  switch (sampler.kind) {
    case SamplerKind::kPlain:
      return u;
    case SamplerKind::kEgta:
      return EgtaSample(u, sampler.prior, sampler.lambda);
    case SamplerKind::kEgsa:
      return EgsaSample(u, sampler.prior, sampler.lambda);
  }
  return u;
}

Tensor NesEstimate(const ScalarFunction& f, const Tensor& x, const SamplerSpec& sampler,
                   size_t samples, double delta, Rng& rng) {
  Require(samples >= 1, ErrorKind::kContract, "B must be >= 1");
  Require(delta > 0.0, ErrorKind::kContract, "delta must be positive");
  Tensor g = Tensor::ZerosLike(x);
  for (size_t b = 0; b < samples; ++b) {
    const Tensor u = DrawSearchVector(sampler, x.shape(), rng);
    const double plus = f(x + delta * u);
    const double minus = f(x - delta * u);
    Require(std::isfinite(plus) && std::isfinite(minus), ErrorKind::kNumeric,
            "score is not finite");
    Axpy((plus - minus) / (2.0 * delta * static_cast<double>(samples)), u.data(),
         g.data());
  }
  return g;
}

Tensor NesGradientEstimate(Oracle& oracle, const Tensor& x, size_t cls,
                           const SamplerSpec& sampler, size_t samples, double delta,
                           Rng& rng, int64_t query_budget) {
  Meter meter(oracle, query_budget);
  return NesEstimate(
      [&](const Tensor& z) {
        const OracleResponse r = meter.Query(z, QueryPurpose::kEstimation);
        Require(r.probs.has_value(), ErrorKind::kContract,
                "NES needs a soft-label oracle");
        Require(cls < r.probs->size(), ErrorKind::kIndex, "class out of range");
        return (*r.probs)[cls];
      },
      x, sampler, samples, delta, rng);
}

Tensor HardLabelDirection(const DecisionFn& phi, const Tensor& x,
                          const SamplerSpec& sampler, size_t samples, double delta,
                          Rng& rng) {
  Require(samples >= 1, ErrorKind::kContract, "B must be >= 1");
  Tensor g = Tensor::ZerosLike(x);
  for (size_t b = 0; b < samples; ++b) {
    const Tensor u = DrawSearchVector(sampler, x.shape(), rng);
    const double s = phi(x + delta * u) ? 1.0 : -1.0;
    Axpy(s / static_cast<double>(samples), u.data(), g.data());
  }
  return g;
}

Tensor L2Project(const Tensor& z, const Tensor& center, double radius) {
  Require(radius > 0.0, ErrorKind::kContract, "projection radius must be positive");
  const double d = Distance(z.data(), center.data());
  if (d <= radius) return z;
  Tensor out = center;
  const double scale = radius / d;
  for (size_t i = 0; i < out.size(); ++i) out[i] += scale * (z[i] - center[i]);
  return out;
}

AttackTrace SoftLabelAttack(Oracle& oracle, const Tensor& x, size_t t,
                            const AttackConfig& cfg, AttackStrategy strategy) {
  Require(strategy != AttackStrategy::kEgsma, ErrorKind::kContract,
          "EGSMA needs a surrogate; use EgsmaAttack");
  const double variance = SamplerVariance(cfg, x.size());
  return SoftLoop(oracle, x, t, cfg, strategy,
                  [&](const Tensor&, const OracleResponse& r, Meter&) {
                    return SamplerFromExplanation(strategy, cfg, variance,
                                                  r.explanation);
                  });
}

AttackTrace HardLabelAttack(Oracle& oracle, const Tensor& x_orig,
                            const Tensor& x_init_adv, const AttackGoal& goal,
                            const AttackConfig& cfg, AttackStrategy strategy) {
  ValidateConfig(cfg);
  Require(strategy != AttackStrategy::kEgsma, ErrorKind::kContract,
          "EGSMA is a soft-label attack");
  Require(x_orig.shape() == x_init_adv.shape(), ErrorKind::kShape,
          "initial adversarial point shape mismatch");
  const size_t n = x_orig.size();
  const double variance = SamplerVariance(cfg, n);
  const double probe = cfg.probe_scale > 0.0 ? cfg.probe_scale
                                             : 1.0 / std::sqrt(static_cast<double>(n));
  const double tol = 1e-3 * std::sqrt(static_cast<double>(n));
  Meter meter(oracle, cfg.max_queries);
  Rng rng(cfg.seed, "hard-label");
  AttackTrace trace;
  trace.strategy = strategy;

  auto satisfies = [&](const OracleResponse& r) {
    const size_t p = r.predicted();
    return goal.targeted ? p == goal.cls : p != goal.cls;
  };
  auto blend = [&](const Tensor& adv, double a) {
    Tensor z = x_orig;
    for (size_t i = 0; i < n; ++i) z[i] += a * (adv[i] - x_orig[i]);
    return z;
  };

  OracleResponse init = meter.Query(x_init_adv, QueryPurpose::kVerification);
  Require(satisfies(init), ErrorKind::kPrecondition,
          "initial point does not satisfy the attack goal");
  Tensor best = x_init_adv;
  double best_dist = Distance(best.data(), x_orig.data());
  OracleResponse best_resp = std::move(init);
  trace.distortion_history.emplace_back(meter.used(), best_dist);
  Tensor current = best;
  OracleResponse current_resp = best_resp;
  try {
    for (size_t iter = 1; best_dist > cfg.hard_threshold; ++iter) {
      // Project the current adversarial point onto the boundary.
      const double span = Distance(current.data(), x_orig.data());
      double lo = 0.0, hi = 1.0;
      OracleResponse hi_resp = current_resp;
      while ((hi - lo) * span > tol) {
        const double mid = 0.5 * (lo + hi);
        OracleResponse r = meter.Query(blend(current, mid), QueryPurpose::kLineSearch);
        if (satisfies(r)) {
          hi = mid;
          hi_resp = std::move(r);
        } else {
          lo = mid;
        }
      }
      Tensor boundary = blend(current, hi);
      const double d = Distance(boundary.data(), x_orig.data());
      if (d < best_dist) {
        best = std::move(boundary);
        best_dist = d;
        best_resp = std::move(hi_resp);
        trace.distortion_history.emplace_back(meter.used(), best_dist);
        if (best_dist <= cfg.hard_threshold) break;
      }

      const SamplerSpec sampler =
          SamplerFromExplanation(strategy, cfg, variance, best_resp.explanation);
      const double delta = probe * best_dist;
      const Tensor g = HardLabelDirection(
          [&](const Tensor& z) {
            return satisfies(meter.Query(z, QueryPurpose::kEstimation));
          },
          best, sampler, cfg.samples, delta, rng);
      const double gnorm = Norm2(g.data());
      current = best;
      current_resp = best_resp;
      if (gnorm == 0.0) continue;
      double xi = best_dist / std::sqrt(static_cast<double>(iter));
      while (xi > tol) {
        Tensor cand = best;
        Axpy(xi / gnorm, g.data(), cand.data());
        OracleResponse r = meter.Query(cand, QueryPurpose::kVerification);
        if (satisfies(r)) {
          current = std::move(cand);
          current_resp = std::move(r);
          break;
        }
        xi *= 0.5;
      }
    }
  } catch (const BudgetExhausted&) {
  }
  trace.success = best_dist <= cfg.hard_threshold;
  trace.queries_used = meter.used();
  trace.final_input = std::move(best);
  return trace;
}

namespace {

// max(0, max_{i != t} z_i - z_t) and its logit gradient.
LossValue HingeLoss(const Tensor& z, size_t t) {
  Require(t < z.size(), ErrorKind::kIndex, "label out of range");
  size_t j = t == 0 ? 1 : 0;
  for (size_t i = 0; i < z.size(); ++i) {
    if (i != t && z[i] > z[j]) j = i;
  }
  const double margin = z[j] - z[t];
  Tensor grad(z.shape());
  if (margin > 0.0) {
    grad[j] = 1.0;
    grad[t] = -1.0;
  }
  return {Tensor::Vector({std::max(0.0, margin)}), std::move(grad)};
}

void CheckBuffer(const std::vector<BufferEntry>& buffer, double alpha,
                 const SurrogateExplainer& explainer) {
  Require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::kContract, "alpha must lie in [0, 1]");
  Require(!buffer.empty(), ErrorKind::kContract, "surrogate buffer is empty");
  if (alpha > 0.0) {
    Require(explainer.method != ExplainMethod::kLime, ErrorKind::kInapplicable,
            "lime explanations cannot be matched by gradient descent");
  }
}

double EntryLoss(const ModelGraph& m, const BufferEntry& e, double alpha,
                 const SurrogateExplainer& ex, std::span<double> grad) {
  const ParamGradient pg =
      GradParams(m, e.x, [&](const Tensor& z) { return HingeLoss(z, e.label); });
  double loss = pg.loss;
  if (!grad.empty()) Axpy(1.0, pg.grad, grad);
  if (alpha > 0.0 && e.explanation) {
    const MatchGradient mg = ExplanationMatchGradient(
        m, e.x, {ex.score_kind, e.label}, ex.method, ex.params, *e.explanation);
    loss += alpha * mg.loss;
    if (!grad.empty()) Axpy(alpha, mg.params, grad);
  }
  return loss;
}

}  // namespace

double SurrogateLoss(const ModelGraph& surrogate, const std::vector<BufferEntry>& buffer,
                     double alpha, const SurrogateExplainer& explainer) {
  CheckBuffer(buffer, alpha, explainer);
  double total = 0.0;
  for (const BufferEntry& e : buffer) total += EntryLoss(surrogate, e, alpha, explainer, {});
  return total / static_cast<double>(buffer.size());
}

FinetuneResult SurrogateFinetune(ModelGraph& surrogate,
                                 const std::vector<BufferEntry>& buffer, double alpha,
                                 const TrainConfig& cfg,
                                 const SurrogateExplainer& explainer) {
  CheckBuffer(buffer, alpha, explainer);
  FinetuneResult result;
  result.loss_before = SurrogateLoss(surrogate, buffer, alpha, explainer);
  const ModelGraph before = surrogate;
  const TrainResult tr = Optimize(
      surrogate, buffer.size(),
      [&](const ModelGraph& m, size_t i, std::span<double> grad) {
        return EntryLoss(m, buffer[i], alpha, explainer, grad);
      },
      cfg);
  result.epoch_loss = tr.epoch_loss;
  result.loss_after = SurrogateLoss(surrogate, buffer, alpha, explainer);
  if (result.loss_after > result.loss_before) {
    surrogate = before;
    result.loss_after = result.loss_before;
  }
  return result;
}

AttackTrace EgsmaAttack(Oracle& oracle, const Tensor& x, size_t t,
                        const AttackConfig& cfg, EgsmaSetup& setup) {
  Require(cfg.refit_every >= 1, ErrorKind::kContract, "refit cadence must be >= 1");
  Require(setup.surrogate.input_shape() == x.shape(), ErrorKind::kShape,
          "surrogate input shape mismatch");
  const double variance = SamplerVariance(cfg, x.size());
  TrainConfig train = cfg.surrogate_train;
  train.epochs = cfg.refit_epochs;
  std::deque<BufferEntry> recent;
  auto buffer = [&] {
    std::vector<BufferEntry> all = setup.initial_buffer;
    all.insert(all.end(), recent.begin(), recent.end());
    return all;
  };
  if (setup.prefit && !setup.initial_buffer.empty()) {
    SurrogateFinetune(setup.surrogate, setup.initial_buffer, cfg.alpha, train,
                      setup.explainer);
  }
  int64_t last_refit = 0;
  return SoftLoop(
      oracle, x, t, cfg, AttackStrategy::kEgsma,
      [&](const Tensor& xk, const OracleResponse& r, Meter& meter) {
        BufferEntry entry{xk, r.predicted(), std::nullopt};
        if (r.explanation) {
          Require(r.explanation->form == ExplanationForm::kTrue, ErrorKind::kContract,
                  "EGSMA needs true-form explanations");
          entry.explanation = r.explanation->values;
        }
        recent.push_back(std::move(entry));
        while (recent.size() > cfg.buffer_capacity) recent.pop_front();
        if (meter.used() - last_refit >= cfg.refit_every) {
          SurrogateFinetune(setup.surrogate, buffer(), cfg.alpha, train, setup.explainer);
          last_refit = meter.used();
        }
        const Explanation g{GradInput(setup.surrogate, xk, {ScoreKind::kSoftmax, t}),
                            ExplainMethod::kGradient,
                            {ScoreKind::kSoftmax, t},
                            ExplanationForm::kTrue};
        const AttackStrategy as = cfg.surrogate_prior == SurrogatePrior::kEgtaShift
                                      ? AttackStrategy::kEgta
                                      : AttackStrategy::kEgsa;
        return SamplerFromExplanation(as, cfg, variance, g);
      });
}

AttackStrategy ChooseStrategy(ExplanationForm form, std::optional<double> cos_estimate,
                              double threshold) {
  if (form == ExplanationForm::kAbs) return AttackStrategy::kEgsa;
  if (cos_estimate && *cos_estimate >= threshold) return AttackStrategy::kEgta;
  return AttackStrategy::kEgsma;
}

}  // namespace xglk
