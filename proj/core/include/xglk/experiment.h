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

#ifndef XGLK_EXPERIMENT_H_
#define XGLK_EXPERIMENT_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xglk/dataset.h"
#include "xglk/evasion.h"
#include "xglk/extraction.h"
#include "xglk/membership.h"
#include "xglk/model.h"
#include "xglk/model_zoo.h"
#include "xglk/oracle.h"

namespace xglk {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentKind { kTrain, kEvade, kMia, kMea, kVarlab };
const char* ExperimentKindName(ExperimentKind kind);
ExperimentKind ParseExperimentKind(const std::string& name);

struct DatasetConfig {
  std::string source = "digits";  // digits | blobs | idx
  size_t side = 14;
  size_t n_per_class = 300;
  double pixel_noise = 0.05;
  size_t n_classes = 3;  // blobs only
  size_t dim = 20;       // blobs only
  double spread = 1.0;   // blobs only
  std::string idx_images;
  std::string idx_labels;
  SplitSizes splits{2000, 500, 500, 0};
};

struct VictimConfig {
  std::string arch = "cnn";  // cnn | mlp
  size_t hidden = 128;       // mlp only
  TrainConfig train;
  // When set, the victim is loaded from this file instead of being trained.
  std::string model_path;
};

struct OracleConfig {
  // "inproc" or a tcp://host:port endpoint of a running `serve`.
  std::string endpoint = "inproc";
  uint16_t port = 0;  // listening port of `serve`
  OraclePolicy policy;
};

enum class EvadeSetting { kSoft, kHard };

struct EvadeConfig {
  EvadeSetting setting = EvadeSetting::kSoft;
  std::vector<AttackStrategy> strategies{AttackStrategy::kNes, AttackStrategy::kEgta};
  size_t instances = 50;
  AttackConfig attack;
  // EGSMA surrogate: same architecture as the victim, trained on the public
  // split for this many epochs before the attacks (0 leaves it untrained).
  size_t surrogate_pretrain_epochs = 3;
  SurrogateExplainer surrogate_explainer;
  bool surrogate_prefit = false;
};

struct MiaConfig {
  std::vector<MiaAttack> attacks{MiaAttack::kExplanationVariance, MiaAttack::kOptVar,
                                 MiaAttack::kGap, MiaAttack::kLossThreshold};
  size_t calibration_members = 200;
  size_t calibration_nonmembers = 200;
  size_t evaluation_per_side = 500;
};

struct MeaExperimentConfig {
  std::vector<int64_t> budgets{2000};
  std::vector<MeaCell> cells{{ExplainMethod::kGradient, 0.0, {}},
                             {ExplainMethod::kGradient, 0.5, {}}};
  MeaConfig base;
  size_t msv_samples = 1000;
};

struct VarlabConfig {
  std::vector<size_t> dims{10, 50};
  std::vector<double> lambdas{0.0, 0.1, 0.3, 0.4, 0.7, 1.0};
  size_t samples = 10;  // B
  size_t trials = 100000;
  double delta = 0.01;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  ExperimentKind kind = ExperimentKind::kVarlab;
  std::vector<uint64_t> seeds{1};
  DatasetConfig dataset;
  VictimConfig victim;
  OracleConfig oracle;
  EvadeConfig evade;
  MiaConfig mia;
  MeaExperimentConfig mea;
  VarlabConfig varlab;

  // Raises a config error on violated invariants (empty seeds, missing files,
  // remote endpoints for experiments that need several oracle policies).
  void Validate() const;
};

// Strict JSON reading: unknown keys, wrong types and other schema versions
// are config errors. Absent keys keep their defaults.
ExperimentConfig ParseExperimentConfig(const std::string& json_text);
ExperimentConfig LoadExperimentConfig(const std::string& path);
// Canonical JSON of every field; equal configs give equal text.
std::string ExperimentConfigToJson(const ExperimentConfig& cfg);

uint64_t Fnv1a64(std::string_view bytes);
// Build identifier compiled into the library.
const char* BuildId();

// Dataset with splits assigned from `seed`. Rows inside each split are listed
// in seeded random order, so every prefix of a split is class-balanced in
// expectation.
Dataset MakeDataset(const DatasetConfig& cfg, uint64_t seed);
ModelSpec VictimSpec(const VictimConfig& cfg, const Dataset& data);
// Loads cfg.model_path when set, else trains on the private split.
ModelGraph MakeVictim(const VictimConfig& cfg, const Dataset& data, uint64_t seed);

// Opens an oracle for one attack: a LocalOracle around `victim` with `policy`
// for "inproc", else a new connection to the endpoint (whose policy is the
// server's).
std::unique_ptr<Oracle> OpenOracle(const std::string& endpoint,
                                   std::shared_ptr<const ModelGraph> victim,
                                   const OraclePolicy& policy);

// Every reported query count is compared with the ledger delta it claims to
// summarize before it is emitted.
struct Accounting {
  int64_t checks = 0;
  int64_t queries = 0;
  // Raises a contract error when the two counts differ.
  void Check(int64_t reported, int64_t ledger_delta, const std::string& what);
};

inline constexpr int64_t kFailedQueries = std::numeric_limits<int64_t>::max();

struct EvadeRecord {
  uint64_t seed = 0;
  size_t instance = 0;
  uint64_t sample_id = 0;
  AttackStrategy strategy = AttackStrategy::kNes;
  bool success = false;
  int64_t queries = 0;
  double final_distance = 0.0;
};

struct EvadeSummary {
  AttackStrategy strategy = AttackStrategy::kNes;
  size_t attempts = 0;
  size_t successes = 0;
  // Median over all attempts with failures counted as kFailedQueries.
  int64_t median_queries = 0;
  double success_rate() const {
    return attempts ? static_cast<double>(successes) / static_cast<double>(attempts) : 0.0;
  }
};

struct EvadeResult {
  std::vector<EvadeRecord> records;
  std::vector<EvadeSummary> summaries;  // in strategy order
  Accounting accounting;
  const EvadeSummary& summary(AttackStrategy s) const;
};

struct MiaRecord {
  uint64_t seed = 0;
  uint64_t sample_id = 0;
  MiaAttack attack = MiaAttack::kExplanationVariance;
  double score = 0.0;
  bool is_member = false;
  bool calibration = false;
  Split split = Split::kPrivateTrain;
};

struct MiaSummary {
  uint64_t seed = 0;
  MiaAttack attack = MiaAttack::kExplanationVariance;
  Calibration calibration;
  MiaEvaluation evaluation;
  // Victim accuracy on the evaluated members and non-members.
  double member_accuracy = 0.0;
  double nonmember_accuracy = 0.0;
  // One-sided rank test that member scores are lower (higher for GAP).
  double rank_p_value = 1.0;
};

struct MiaResult {
  std::vector<MiaRecord> records;
  std::vector<MiaSummary> summaries;
  Accounting accounting;
  // Calibration and evaluation ids never overlap; checked before returning.
  bool disjoint = false;
};

struct MeaRow {
  uint64_t seed = 0;
  MeaResult result;
};

struct MeaExperimentResult {
  std::vector<MeaRow> rows;
  Accounting accounting;
};

struct VarlabRow {
  uint64_t seed = 0;
  size_t n = 0;
  double lambda = 0.0;
  std::string quantity;  // mean_error | bias | total_variance
  double analytic = 0.0;
  double exact = 0.0;
  double empirical = 0.0;
  double stderr_ = 0.0;
};

struct VarlabResult {
  std::vector<VarlabRow> rows;
};

// Progress lines go to `log` when it is set.
using LogFn = std::function<void(const std::string&)>;

EvadeResult RunEvade(const ExperimentConfig& cfg, const LogFn& log = {});
MiaResult RunMia(const ExperimentConfig& cfg, const LogFn& log = {});
MeaExperimentResult RunMea(const ExperimentConfig& cfg, const LogFn& log = {});
VarlabResult RunVarlab(const ExperimentConfig& cfg, const LogFn& log = {});

// CSV renderings; doubles use shortest round-trip form.
std::string EvadeCsv(const EvadeResult& r);
std::string EvadeCurveCsv(const EvadeResult& r);
std::string MiaScoresCsv(const MiaResult& r);
std::string MiaSummaryCsv(const MiaResult& r);
std::string MeaCsv(const MeaExperimentResult& r);
std::string VarlabCsv(const VarlabResult& r);

struct Artifact {
  std::string name;
  std::string contents;
};

// Writes the artifacts and manifest.json (kind, config hash, seeds, build id,
// per-file FNV-1a hashes, query totals) into `out_dir`, creating it.
void WriteArtifacts(const std::string& out_dir, const ExperimentConfig& cfg,
                    const std::vector<Artifact>& artifacts, int64_t total_queries);

// Runs the configured experiment and writes its artifacts. Failures are
// rethrown with the failing stage prefixed to the message.
void RunExperiment(const ExperimentConfig& cfg, const std::string& out_dir,
                   const LogFn& log = {});

}  // namespace xglk

#endif  // XGLK_EXPERIMENT_H_
