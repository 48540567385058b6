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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xglk/error.h"

namespace xglk {

const char* MiaAttackName(MiaAttack attack) {
  switch (attack) {
    case MiaAttack::kExplanationVariance:
      return "expl_var";
    case MiaAttack::kOptVar:
      return "optvar";
    case MiaAttack::kGap:
      return "gap";
    case MiaAttack::kLossThreshold:
      return "loss";
  }
  return "?";
}

MiaAttack ParseMiaAttack(const std::string& name) {
  for (MiaAttack a : {MiaAttack::kExplanationVariance, MiaAttack::kOptVar,
                      MiaAttack::kGap, MiaAttack::kLossThreshold}) {
    if (name == MiaAttackName(a)) return a;
  }
  Fail(ErrorKind::kConfig, "unknown membership attack '" + name + "'");
}

double PopulationVariance(std::span<const double> v) {
  Require(v.size() >= 2, ErrorKind::kContract,
          "variance of fewer than two entries is degenerate");
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / n;
}

namespace {

MiaScore VarianceScore(Oracle& oracle, const Tensor& x, uint64_t id, ScoreKind kind,
                       MiaAttack attack) {
  Require(x.size() >= 2, ErrorKind::kContract,
          "explanation variance needs at least two features");
  const OracleResponse r = oracle.Query(x);
  Require(r.explanation.has_value(), ErrorKind::kPolicy,
          "the oracle does not attach explanations");
  Require(r.explanation->selector.kind == kind, ErrorKind::kPolicy,
          std::string("this attack needs explanations of the ") + ScoreKindName(kind) +
              " score");
  const double v = PopulationVariance(r.explanation->values.data());
  Require(std::isfinite(v), ErrorKind::kNumeric, "explanation variance is not finite");
  return {id, v, attack, MiaDirection::kLowerIsMember, false};
}

}  // namespace

MiaScore ExplanationVarianceScore(Oracle& oracle, const Tensor& x, uint64_t id) {
  return VarianceScore(oracle, x, id, ScoreKind::kSoftmax,
                       MiaAttack::kExplanationVariance);
}

MiaScore OptVarScore(Oracle& oracle, const Tensor& x, uint64_t id) {
  return VarianceScore(oracle, x, id, ScoreKind::kLogit, MiaAttack::kOptVar);
}

MiaScore GapAttackScore(Oracle& oracle, const Tensor& x, size_t true_label,
                        uint64_t id) {
  const OracleResponse r = oracle.Query(x);
  return {id, r.predicted() == true_label ? 1.0 : 0.0, MiaAttack::kGap,
          MiaDirection::kHigherIsMember, false};
}

MiaScore LossThresholdScore(Oracle& oracle, const Tensor& x, size_t true_label,
                            uint64_t id) {
  const OracleResponse r = oracle.Query(x);
  Require(r.probs.has_value(), ErrorKind::kPolicy,
          "the loss attack needs a soft-label oracle");
  Require(true_label < r.probs->size(), ErrorKind::kIndex, "label out of range");
  const double p = (*r.probs)[true_label];
  const bool clamped = p < kLossProbabilityFloor;
  return {id, -std::log(std::max(p, kLossProbabilityFloor)), MiaAttack::kLossThreshold,
          MiaDirection::kLowerIsMember, clamped};
}

bool PredictMember(double score, double threshold, MiaDirection direction) {
  return direction == MiaDirection::kLowerIsMember ? score < threshold
                                                   : score > threshold;
}

Calibration CalibrateThreshold(std::span<const double> members,
                               std::span<const double> nonmembers,
                               MiaDirection direction) {
  Require(!members.empty() && !nonmembers.empty(), ErrorKind::kContract,
          "calibration needs member and non-member scores");
  std::vector<double> m(members.begin(), members.end());
  std::vector<double> nm(nonmembers.begin(), nonmembers.end());
  std::sort(m.begin(), m.end());
  std::sort(nm.begin(), nm.end());
  Calibration c;
  if (m == nm) {
    c.degenerate = true;
    const size_t k = m.size();
    c.threshold = k % 2 ? m[k / 2] : 0.5 * (m[k / 2 - 1] + m[k / 2]);
    c.balanced_accuracy = 0.5;
    return c;
  }
  std::vector<double> values = m;
  values.insert(values.end(), nm.begin(), nm.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  // Gap g lies between values[g - 1] and values[g]; gap 0 is below all values
  // and gap values.size() above all of them. "Below gap g" counts the scores
  // strictly less than values[g].
  const size_t gaps = values.size() + 1;
  auto balanced = [&](size_t g) {
    const double cut = g < values.size() ? values[g] : INFINITY;
    const double m_below = static_cast<double>(
        std::lower_bound(m.begin(), m.end(), cut) - m.begin());
    const double nm_below = static_cast<double>(
        std::lower_bound(nm.begin(), nm.end(), cut) - nm.begin());
    const double tpr_low = m_below / static_cast<double>(m.size());
    const double tnr_low = 1.0 - nm_below / static_cast<double>(nm.size());
    const double low = 0.5 * (tpr_low + tnr_low);
    return direction == MiaDirection::kLowerIsMember ? low : 1.0 - low;
  };
  std::vector<double> ba(gaps);
  for (size_t g = 0; g < gaps; ++g) ba[g] = balanced(g);
  const double best = *std::max_element(ba.begin(), ba.end());
  size_t first = 0;
  while (ba[first] < best) ++first;
  size_t last = first;
  while (last + 1 < gaps && ba[last + 1] == best) ++last;
  const double span = std::max(values.back() - values.front(), 1.0);
  const double lo = first == 0 ? values.front() - span : values[first - 1];
  const double hi = last == values.size() ? values.back() + span : values[last];
  c.threshold = 0.5 * (lo + hi);
  c.balanced_accuracy = best;
  return c;
}

MiaEvaluation EvaluateMia(std::span<const double> scores,
                          const std::vector<bool>& is_member, double threshold,
                          MiaDirection direction, bool allow_unbalanced) {
  Require(scores.size() == is_member.size(), ErrorKind::kShape,
          "scores and membership labels differ in length");
  Require(!scores.empty(), ErrorKind::kContract, "nothing to evaluate");
  const size_t members = std::count(is_member.begin(), is_member.end(), true);
  Require(allow_unbalanced || 2 * members == scores.size(), ErrorKind::kContract,
          "evaluation sets must be balanced");
  MiaEvaluation ev;
  ev.threshold = threshold;
  for (size_t i = 0; i < scores.size(); ++i) {
    Require(std::isfinite(scores[i]), ErrorKind::kNumeric, "score is not finite");
    const bool pred = PredictMember(scores[i], threshold, direction);
    if (is_member[i]) {
      (pred ? ev.true_member : ev.false_nonmember)++;
    } else {
      (pred ? ev.false_member : ev.true_nonmember)++;
    }
  }
  ev.accuracy = static_cast<double>(ev.true_member + ev.true_nonmember) /
                static_cast<double>(scores.size());
  ev.advantage = ev.accuracy - 0.5;
  return ev;
}

double MannWhitneyLessPValue(std::span<const double> a, std::span<const double> b) {
  Require(!a.empty() && !b.empty(), ErrorKind::kContract, "rank test needs two samples");
  struct Item {
    double v;
    bool from_a;
  };
  std::vector<Item> all;
  for (double v : a) all.push_back({v, true});
  for (double v : b) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Item& x, const Item& y) { return x.v < y.v; });
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double n = n1 + n2;
  double rank_sum_a = 0.0, tie_term = 0.0;
  for (size_t i = 0; i < all.size();) {
    size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (size_t k = i; k < j; ++k) {
      if (all[k].from_a) rank_sum_a += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_a - n1 * (n1 + 1) / 2;
  const double mean = n1 * n2 / 2;
  const double var = n1 * n2 / 12 * ((n + 1) - tie_term / (n * (n - 1)));
  if (var <= 0.0) return 0.5;
  const double z = (u - mean) / std::sqrt(var);
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

}  // namespace xglk
