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

#include "xglk/oracle.h"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <utility>

#include "xglk/error.h"
#include "xglk/rng.h"

namespace xglk {

const char* QueryPurposeName(QueryPurpose purpose) {
  switch (purpose) {
    case QueryPurpose::kEstimation:
      return "estimation";
    case QueryPurpose::kLineSearch:
      return "line_search";
    case QueryPurpose::kVerification:
      return "verification";
  }
  return "?";
}

QueryLedger& QueryLedger::operator=(const QueryLedger& other) {
  for (size_t i = 0; i < kNumQueryPurposes; ++i) {
    counts_[i].store(other.counts_[i].load(std::memory_order_relaxed),
                     std::memory_order_relaxed);
  }
  return *this;
}

void QueryLedger::Charge(QueryPurpose purpose, int64_t n) {
  Require(n >= 0, ErrorKind::kContract, "ledger charges are nonnegative");
  counts_[static_cast<size_t>(purpose)].fetch_add(n, std::memory_order_relaxed);
}

int64_t QueryLedger::count() const {
  int64_t total = 0;
  for (const auto& c : counts_) total += c.load(std::memory_order_relaxed);
  return total;
}

size_t OracleResponse::predicted() const {
  if (label) return *label;
  Require(probs.has_value(), ErrorKind::kContract, "response carries no prediction");
  return ArgMax(probs->data());
}

uint64_t ExplanationSeed(uint64_t policy_seed, const Tensor& x) {
  uint64_t h = Rng::Mix(policy_seed ^ 0x243f6a8885a308d3ULL);
  for (double v : x.values()) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = Rng::Mix(h ^ bits);
  }
  return h;
}

LocalOracle::LocalOracle(std::shared_ptr<const ModelGraph> model,
                         OraclePolicy policy)
    : model_(std::move(model)), policy_(std::move(policy)) {
  Require(model_ != nullptr, ErrorKind::kContract, "oracle needs a model");
  if (policy_.explanation) {
    Require(IsApplicable(policy_.explanation->method, *model_), ErrorKind::kPolicy,
            std::string(ExplainMethodName(policy_.explanation->method)) +
                " explanations cannot be produced for this model");
  }
  if (policy_.top_k) {
    Require(*policy_.top_k >= 1 && *policy_.top_k <= model_->num_classes(),
            ErrorKind::kPolicy, "top_k must lie in [1, classes]");
  }
}

OracleResponse LocalOracle::Query(const Tensor& x, QueryPurpose purpose) {
  Require(x.shape() == model_->input_shape(), ErrorKind::kShape,
          "query shape " + ShapeString(x.shape()) + " does not match the victim");
  const Tensor logits = Forward(*model_, x);
  Tensor probs = Softmax(logits);
  OracleResponse r;
  const size_t pred = ArgMax(probs.data());
  if (policy_.label_mode == LabelMode::kHard) {
    r.label = pred;
  } else {
    if (policy_.top_k && *policy_.top_k < probs.size()) {
      std::vector<size_t> order(probs.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](size_t a, size_t b) { return probs[a] > probs[b]; });
      for (size_t i = *policy_.top_k; i < order.size(); ++i) probs[order[i]] = 0.0;
    }
    r.probs = std::move(probs);
  }
  int64_t cost = 1;
  if (policy_.attaches()) {
    const ExplanationPolicy& ep = *policy_.explanation;
    ExplainerParams params = ep.params;
    params.seed = ExplanationSeed(ep.params.seed, x);
    Explanation e = Explain(*model_, x, {ep.score_kind, pred}, ep.method, params);
    if (ep.form == ExplanationForm::kAbs) e = ToAbsolute(e);
    r.explanation = std::move(e);
    if (policy_.price_explanations) ++cost;
  }
  r.query_id = next_id_.fetch_add(1, std::memory_order_relaxed);
  ledger_.Charge(purpose, cost);
  return r;
}

}  // namespace xglk
