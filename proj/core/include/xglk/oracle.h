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

#ifndef XGLK_ORACLE_H_
#define XGLK_ORACLE_H_

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>

#include "xglk/explainers.h"
#include "xglk/model.h"
#include "xglk/tensor.h"

namespace xglk {

enum class LabelMode { kSoft, kHard };

// What explanation the victim releases. The class is always the predicted one.
struct ExplanationPolicy {
  ExplainMethod method = ExplainMethod::kGradient;
  ScoreKind score_kind = ScoreKind::kSoftmax;
  ExplanationForm form = ExplanationForm::kTrue;
  ExplainerParams params;
};

struct OraclePolicy {
  LabelMode label_mode = LabelMode::kSoft;
  std::optional<ExplanationPolicy> explanation;
  bool attach_explanation = true;
  // Soft mode keeps only the k largest probabilities (others reported as 0).
  std::optional<size_t> top_k;
  // Charge one extra query for every attached explanation.
  bool price_explanations = false;

  bool attaches() const { return explanation.has_value() && attach_explanation; }
};

enum class QueryPurpose { kEstimation = 0, kLineSearch, kVerification };
inline constexpr size_t kNumQueryPurposes = 3;
const char* QueryPurposeName(QueryPurpose purpose);

// Thread-safe query counter. The total is the sum of the per-purpose counts and
// never decreases.
class QueryLedger {
 public:
  QueryLedger() = default;
  QueryLedger(const QueryLedger& other) { *this = other; }
  QueryLedger& operator=(const QueryLedger& other);

  void Charge(QueryPurpose purpose, int64_t n = 1);
  int64_t count() const;
  int64_t count(QueryPurpose purpose) const {
    return counts_[static_cast<size_t>(purpose)].load(std::memory_order_relaxed);
  }

 private:
  std::array<std::atomic<int64_t>, kNumQueryPurposes> counts_{};
};

struct OracleResponse {
  uint64_t query_id = 0;
  std::optional<Tensor> probs;   // soft mode
  std::optional<size_t> label;   // hard mode
  std::optional<Explanation> explanation;

  // argmax of probs in soft mode, the label in hard mode.
  size_t predicted() const;
};

// Query-metered black box. Implementations are safe for concurrent queries.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual OracleResponse Query(const Tensor& x,
                               QueryPurpose purpose = QueryPurpose::kEstimation) = 0;
  virtual const QueryLedger& ledger() const = 0;
};

// In-process victim. Validates the policy against the model at construction.
class LocalOracle : public Oracle {
 public:
  LocalOracle(std::shared_ptr<const ModelGraph> model, OraclePolicy policy);

  OracleResponse Query(const Tensor& x,
                       QueryPurpose purpose = QueryPurpose::kEstimation) override;
  const QueryLedger& ledger() const override { return ledger_; }

  const OraclePolicy& policy() const { return policy_; }
  const ModelGraph& model() const { return *model_; }

 private:
  std::shared_ptr<const ModelGraph> model_;
  OraclePolicy policy_;
  QueryLedger ledger_;
  std::atomic<uint64_t> next_id_{0};
};

// Seed used for a stochastic explainer on input x: fixed per (policy seed, x
// bits), so repeated and remote queries of the same point agree.
uint64_t ExplanationSeed(uint64_t policy_seed, const Tensor& x);

}  // namespace xglk

#endif  // XGLK_ORACLE_H_
