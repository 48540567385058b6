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

#include "xglk/experiment.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>
#include <utility>

#include <nlohmann/json.hpp>

#include "xglk/error.h"
#include "xglk/estimator_lab.h"
#include "xglk/rng.h"
#include "xglk/wire.h"

#ifndef XGLK_BUILD_ID
#define XGLK_BUILD_ID "xglk-unknown"
#endif

namespace xglk {

using nlohmann::json;

const char* ExperimentKindName(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTrain:
      return "train";
    case ExperimentKind::kEvade:
      return "evade";
    case ExperimentKind::kMia:
      return "mia";
    case ExperimentKind::kMea:
      return "mea";
    case ExperimentKind::kVarlab:
      return "varlab";
  }
  return "?";
}

ExperimentKind ParseExperimentKind(const std::string& name) {
  for (ExperimentKind k : {ExperimentKind::kTrain, ExperimentKind::kEvade,
                           ExperimentKind::kMia, ExperimentKind::kMea,
                           ExperimentKind::kVarlab}) {
    if (name == ExperimentKindName(k)) return k;
  }
  Fail(ErrorKind::kConfig, "unknown experiment kind '" + name + "'");
}

uint64_t Fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const char* BuildId() { return XGLK_BUILD_ID; }

namespace {

// ---------------------------------------------------------------------------
// Config reading.

// Reads the fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    Require(j_.is_object(), ErrorKind::kConfig, where_ + " must be a JSON object");
  }

  template <class T>
  void Get(const char* key, T& out) {
    const json* v = Find(key);
    if (v == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      Require(v->is_boolean(), ErrorKind::kConfig, Path(key) + " must be a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      Require(v->is_number_unsigned(), ErrorKind::kConfig,
              Path(key) + " must be a nonnegative integer");
    } else if constexpr (std::is_integral_v<T>) {
      Require(v->is_number_integer(), ErrorKind::kConfig, Path(key) + " must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      Require(v->is_number(), ErrorKind::kConfig, Path(key) + " must be a number");
    }
    try {
      out = v->get<T>();
    } catch (const json::exception& e) {
      Fail(ErrorKind::kConfig, Path(key) + ": " + e.what());
    }
  }

  template <class T, class Parse>
  void GetEnum(const char* key, T& out, Parse parse) {
    const json* v = Find(key);
    if (v == nullptr) return;
    Require(v->is_string(), ErrorKind::kConfig, Path(key) + " must be a string");
    out = parse(v->get<std::string>());
  }

  const json* Find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string Path(const char* key) const { return where_ + "." + key; }

  void Done() const {
    for (const auto& item : j_.items()) {
      Require(seen_.count(item.key()) > 0, ErrorKind::kConfig,
              "unknown key " + where_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

const char* OptimizerName(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd";
}
OptimizerKind ParseOptimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgdMomentum;
  Fail(ErrorKind::kConfig, "unknown optimizer '" + s + "'");
}
const char* LabelModeName(LabelMode m) { return m == LabelMode::kSoft ? "soft" : "hard"; }
LabelMode ParseLabelMode(const std::string& s) {
  if (s == "soft") return LabelMode::kSoft;
  if (s == "hard") return LabelMode::kHard;
  Fail(ErrorKind::kConfig, "unknown label mode '" + s + "'");
}
const char* EvadeSettingName(EvadeSetting s) {
  return s == EvadeSetting::kSoft ? "soft" : "hard";
}
EvadeSetting ParseEvadeSetting(const std::string& s) {
  if (s == "soft") return EvadeSetting::kSoft;
  if (s == "hard") return EvadeSetting::kHard;
  Fail(ErrorKind::kConfig, "unknown evasion setting '" + s + "'");
}
const char* SurrogatePriorName(SurrogatePrior p) {
  return p == SurrogatePrior::kEgsaScaling ? "egsa_scaling" : "egta_shift";
}
SurrogatePrior ParseSurrogatePrior(const std::string& s) {
  if (s == "egsa_scaling") return SurrogatePrior::kEgsaScaling;
  if (s == "egta_shift") return SurrogatePrior::kEgtaShift;
  Fail(ErrorKind::kConfig, "unknown surrogate prior '" + s + "'");
}
const char* PredictionMatchName(PredictionMatch p) {
  return p == PredictionMatch::kSoftmaxL2 ? "softmax_l2" : "logit_l2";
}
PredictionMatch ParsePredictionMatch(const std::string& s) {
  if (s == "softmax_l2") return PredictionMatch::kSoftmaxL2;
  if (s == "logit_l2") return PredictionMatch::kLogitL2;
  Fail(ErrorKind::kConfig, "unknown prediction match '" + s + "'");
}

void Read(const json& j, const std::string& where, TrainConfig& c) {
  Fields f(j, where);
  f.GetEnum("optimizer", c.optimizer, ParseOptimizer);
  f.Get("learning_rate", c.learning_rate);
  f.Get("batch_size", c.batch_size);
  f.Get("epochs", c.epochs);
  f.Get("weight_decay", c.weight_decay);
  f.Get("momentum", c.momentum);
  f.Get("seed", c.seed);
  f.Get("overfit_mode", c.overfit_mode);
  f.Done();
}

json ToJson(const TrainConfig& c) {
  return {{"optimizer", OptimizerName(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"weight_decay", c.weight_decay},
          {"momentum", c.momentum},
          {"seed", c.seed},
          {"overfit_mode", c.overfit_mode}};
}

void Read(const json& j, const std::string& where, ExplainerParams& c) {
  Fields f(j, where);
  if (const json* v = f.Find("smoothgrad_sigma"); v != nullptr && !v->is_null()) {
    Require(v->is_number(), ErrorKind::kConfig,
            f.Path("smoothgrad_sigma") + " must be a number or null");
    c.smoothgrad_sigma = v->get<double>();
  }
  f.Get("smoothgrad_samples", c.smoothgrad_samples);
  f.Get("ig_steps", c.ig_steps);
  f.Get("lime_samples", c.lime_samples);
  f.Get("lime_kernel_width", c.lime_kernel_width);
  f.Get("lime_ridge", c.lime_ridge);
  f.Get("seed", c.seed);
  f.Done();
}

json ToJson(const ExplainerParams& c) {
  return {{"smoothgrad_sigma", c.smoothgrad_sigma ? json(*c.smoothgrad_sigma) : json()},
          {"smoothgrad_samples", c.smoothgrad_samples},
          {"ig_steps", c.ig_steps},
          {"lime_samples", c.lime_samples},
          {"lime_kernel_width", c.lime_kernel_width},
          {"lime_ridge", c.lime_ridge},
          {"seed", c.seed}};
}

void Read(const json& j, const std::string& where, ExplanationPolicy& c) {
  Fields f(j, where);
  f.GetEnum("method", c.method, ParseExplainMethod);
  f.GetEnum("score", c.score_kind, ParseScoreKind);
  f.GetEnum("form", c.form, ParseExplanationForm);
  if (const json* v = f.Find("params")) Read(*v, f.Path("params"), c.params);
  f.Done();
}

json ToJson(const ExplanationPolicy& c) {
  return {{"method", ExplainMethodName(c.method)},
          {"score", ScoreKindName(c.score_kind)},
          {"form", ExplanationFormName(c.form)},
          {"params", ToJson(c.params)}};
}

void Read(const json& j, const std::string& where, OracleConfig& c) {
  Fields f(j, where);
  f.Get("endpoint", c.endpoint);
  f.Get("port", c.port);
  f.GetEnum("label_mode", c.policy.label_mode, ParseLabelMode);
  if (const json* v = f.Find("explanation")) {
    if (v->is_null()) {
      c.policy.explanation.reset();
    } else {
      ExplanationPolicy p;
      Read(*v, f.Path("explanation"), p);
      c.policy.explanation = p;
    }
  }
  f.Get("attach_explanation", c.policy.attach_explanation);
  if (const json* v = f.Find("top_k"); v != nullptr && !v->is_null()) {
    Require(v->is_number_unsigned(), ErrorKind::kConfig,
            f.Path("top_k") + " must be a positive integer or null");
    c.policy.top_k = v->get<size_t>();
  }
  f.Get("price_explanations", c.policy.price_explanations);
  f.Done();
}

json ToJson(const OracleConfig& c) {
  return {{"endpoint", c.endpoint},
          {"port", c.port},
          {"label_mode", LabelModeName(c.policy.label_mode)},
          {"explanation", c.policy.explanation ? ToJson(*c.policy.explanation) : json()},
          {"attach_explanation", c.policy.attach_explanation},
          {"top_k", c.policy.top_k ? json(*c.policy.top_k) : json()},
          {"price_explanations", c.policy.price_explanations}};
}

void Read(const json& j, const std::string& where, AttackConfig& c) {
  Fields f(j, where);
  f.Get("lambda", c.lambda);
  f.Get("delta", c.delta);
  f.Get("samples", c.samples);
  f.Get("epsilon_budget", c.epsilon_budget);
  f.Get("hard_threshold", c.hard_threshold);
  f.Get("step_size", c.step_size);
  f.GetEnum("step_rule", c.step_rule, ParseStepRule);
  f.Get("max_queries", c.max_queries);
  f.Get("sampler_variance", c.sampler_variance);
  f.Get("probe_scale", c.probe_scale);
  f.Get("alpha", c.alpha);
  f.Get("refit_every", c.refit_every);
  f.Get("refit_epochs", c.refit_epochs);
  f.Get("buffer_capacity", c.buffer_capacity);
  f.GetEnum("surrogate_prior", c.surrogate_prior, ParseSurrogatePrior);
  if (const json* v = f.Find("surrogate_train")) {
    Read(*v, f.Path("surrogate_train"), c.surrogate_train);
  }
  f.Done();
}

json ToJson(const AttackConfig& c) {
  return {{"lambda", c.lambda},
          {"delta", c.delta},
          {"samples", c.samples},
          {"epsilon_budget", c.epsilon_budget},
          {"hard_threshold", c.hard_threshold},
          {"step_size", c.step_size},
          {"step_rule", StepRuleName(c.step_rule)},
          {"max_queries", c.max_queries},
          {"sampler_variance", c.sampler_variance},
          {"probe_scale", c.probe_scale},
          {"alpha", c.alpha},
          {"refit_every", c.refit_every},
          {"refit_epochs", c.refit_epochs},
          {"buffer_capacity", c.buffer_capacity},
          {"surrogate_prior", SurrogatePriorName(c.surrogate_prior)},
          {"surrogate_train", ToJson(c.surrogate_train)}};
}

template <class T, class Parse>
void ReadEnumList(Fields& f, const char* key, std::vector<T>& out, Parse parse) {
  const json* v = f.Find(key);
  if (v == nullptr) return;
  Require(v->is_array(), ErrorKind::kConfig, f.Path(key) + " must be an array");
  out.clear();
  for (const json& item : *v) {
    Require(item.is_string(), ErrorKind::kConfig, f.Path(key) + " entries must be strings");
    out.push_back(parse(item.get<std::string>()));
  }
}

void Read(const json& j, const std::string& where, EvadeConfig& c) {
  Fields f(j, where);
  f.GetEnum("setting", c.setting, ParseEvadeSetting);
  ReadEnumList(f, "strategies", c.strategies, ParseAttackStrategy);
  f.Get("instances", c.instances);
  if (const json* v = f.Find("attack")) Read(*v, f.Path("attack"), c.attack);
  f.Get("surrogate_pretrain_epochs", c.surrogate_pretrain_epochs);
  if (const json* v = f.Find("surrogate_explainer")) {
    Fields s(*v, f.Path("surrogate_explainer"));
    s.GetEnum("method", c.surrogate_explainer.method, ParseExplainMethod);
    s.GetEnum("score", c.surrogate_explainer.score_kind, ParseScoreKind);
    if (const json* p = s.Find("params")) Read(*p, s.Path("params"), c.surrogate_explainer.params);
    s.Done();
  }
  f.Get("surrogate_prefit", c.surrogate_prefit);
  f.Done();
}

json ToJson(const EvadeConfig& c) {
  json strategies = json::array();
  for (AttackStrategy s : c.strategies) strategies.push_back(AttackStrategyName(s));
  return {{"setting", EvadeSettingName(c.setting)},
          {"strategies", strategies},
          {"instances", c.instances},
          {"attack", ToJson(c.attack)},
          {"surrogate_pretrain_epochs", c.surrogate_pretrain_epochs},
          {"surrogate_explainer",
           {{"method", ExplainMethodName(c.surrogate_explainer.method)},
            {"score", ScoreKindName(c.surrogate_explainer.score_kind)},
            {"params", ToJson(c.surrogate_explainer.params)}}},
          {"surrogate_prefit", c.surrogate_prefit}};
}

void Read(const json& j, const std::string& where, MiaConfig& c) {
  Fields f(j, where);
  ReadEnumList(f, "attacks", c.attacks, ParseMiaAttack);
  f.Get("calibration_members", c.calibration_members);
  f.Get("calibration_nonmembers", c.calibration_nonmembers);
  f.Get("evaluation_per_side", c.evaluation_per_side);
  f.Done();
}

json ToJson(const MiaConfig& c) {
  json attacks = json::array();
  for (MiaAttack a : c.attacks) attacks.push_back(MiaAttackName(a));
  return {{"attacks", attacks},
          {"calibration_members", c.calibration_members},
          {"calibration_nonmembers", c.calibration_nonmembers},
          {"evaluation_per_side", c.evaluation_per_side}};
}

void Read(const json& j, const std::string& where, MeaExperimentConfig& c) {
  Fields f(j, where);
  if (const json* v = f.Find("budgets")) {
    Require(v->is_array(), ErrorKind::kConfig, f.Path("budgets") + " must be an array");
    c.budgets.clear();
    for (const json& b : *v) {
      Require(b.is_number_integer(), ErrorKind::kConfig,
              f.Path("budgets") + " entries must be integers");
      c.budgets.push_back(b.get<int64_t>());
    }
  }
  if (const json* v = f.Find("cells")) {
    Require(v->is_array(), ErrorKind::kConfig, f.Path("cells") + " must be an array");
    c.cells.clear();
    for (const json& item : *v) {
      MeaCell cell;
      Fields cf(item, f.Path("cells") + "[]");
      cf.GetEnum("method", cell.method, ParseExplainMethod);
      cf.Get("alpha", cell.alpha);
      if (const json* p = cf.Find("params")) Read(*p, cf.Path("params"), cell.params);
      cf.Done();
      c.cells.push_back(cell);
    }
  }
  if (const json* v = f.Find("train")) Read(*v, f.Path("train"), c.base.train);
  f.GetEnum("prediction", c.base.prediction, ParsePredictionMatch);
  f.Get("lime_masks", c.base.lime_masks);
  f.Get("msv_samples", c.msv_samples);
  f.Done();
}

json ToJson(const MeaExperimentConfig& c) {
  json cells = json::array();
  for (const MeaCell& cell : c.cells) {
    cells.push_back({{"method", ExplainMethodName(cell.method)},
                     {"alpha", cell.alpha},
                     {"params", ToJson(cell.params)}});
  }
  return {{"budgets", c.budgets},
          {"cells", cells},
          {"train", ToJson(c.base.train)},
          {"prediction", PredictionMatchName(c.base.prediction)},
          {"lime_masks", c.base.lime_masks},
          {"msv_samples", c.msv_samples}};
}

void Read(const json& j, const std::string& where, VarlabConfig& c) {
  Fields f(j, where);
  f.Get("dims", c.dims);
  f.Get("lambdas", c.lambdas);
  f.Get("samples", c.samples);
  f.Get("trials", c.trials);
  f.Get("delta", c.delta);
  f.Done();
}

json ToJson(const VarlabConfig& c) {
  return {{"dims", c.dims},
          {"lambdas", c.lambdas},
          {"samples", c.samples},
          {"trials", c.trials},
          {"delta", c.delta}};
}

void Read(const json& j, const std::string& where, DatasetConfig& c) {
  Fields f(j, where);
  f.Get("source", c.source);
  f.Get("side", c.side);
  f.Get("n_per_class", c.n_per_class);
  f.Get("pixel_noise", c.pixel_noise);
  f.Get("n_classes", c.n_classes);
  f.Get("dim", c.dim);
  f.Get("spread", c.spread);
  f.Get("idx_images", c.idx_images);
  f.Get("idx_labels", c.idx_labels);
  if (const json* v = f.Find("splits")) {
    Fields s(*v, f.Path("splits"));
    s.Get("private_train", c.splits.private_train);
    s.Get("public_pool", c.splits.public_pool);
    s.Get("test", c.splits.test);
    s.Get("calibration", c.splits.calibration);
    s.Done();
  }
  f.Done();
}

json ToJson(const DatasetConfig& c) {
  return {{"source", c.source},
          {"side", c.side},
          {"n_per_class", c.n_per_class},
          {"pixel_noise", c.pixel_noise},
          {"n_classes", c.n_classes},
          {"dim", c.dim},
          {"spread", c.spread},
          {"idx_images", c.idx_images},
          {"idx_labels", c.idx_labels},
          {"splits",
           {{"private_train", c.splits.private_train},
            {"public_pool", c.splits.public_pool},
            {"test", c.splits.test},
            {"calibration", c.splits.calibration}}}};
}

void Read(const json& j, const std::string& where, VictimConfig& c) {
  Fields f(j, where);
  f.Get("arch", c.arch);
  f.Get("hidden", c.hidden);
  if (const json* v = f.Find("train")) Read(*v, f.Path("train"), c.train);
  f.Get("model_path", c.model_path);
  f.Done();
}

json ToJson(const VictimConfig& c) {
  return {{"arch", c.arch},
          {"hidden", c.hidden},
          {"train", ToJson(c.train)},
          {"model_path", c.model_path}};
}

// Runs one stage and prefixes its name to any library error.
template <class F>
auto Stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const BudgetExhausted&) {
    throw;
  } catch (const Error& e) {
    if (e.detail().rfind("stage '", 0) == 0) throw;
    throw Error(e.kind(), "stage '" + name + "': " + e.detail());
  }
}

uint64_t SubSeed(uint64_t seed, std::string_view label, uint64_t index = 0) {
  return Rng(seed, label).Split(index)();
}

}  // namespace

void ExperimentConfig::Validate() const {
  Require(schema_version == kConfigSchemaVersion, ErrorKind::kConfig,
          "unsupported config schema version " + std::to_string(schema_version));
  Require(!seeds.empty(), ErrorKind::kConfig, "seeds must not be empty");
  Require(dataset.source == "digits" || dataset.source == "blobs" ||
              dataset.source == "idx",
          ErrorKind::kConfig, "dataset.source must be digits, blobs or idx");
  if (dataset.source == "idx") {
    for (const std::string& p : {dataset.idx_images, dataset.idx_labels}) {
      Require(!p.empty() && std::filesystem::exists(p), ErrorKind::kConfig,
              "IDX file '" + p + "' does not exist");
    }
  }
  if (!victim.model_path.empty() && kind != ExperimentKind::kVarlab) {
    Require(std::filesystem::exists(victim.model_path), ErrorKind::kConfig,
            "model file '" + victim.model_path + "' does not exist");
  }
  Require(victim.arch == "cnn" || victim.arch == "mlp", ErrorKind::kConfig,
          "victim.arch must be cnn or mlp");
  const bool remote = oracle.endpoint != "inproc";
  if (remote) ParseEndpoint(oracle.endpoint);
  switch (kind) {
    case ExperimentKind::kEvade:
      Require(!evade.strategies.empty() && evade.instances > 0, ErrorKind::kConfig,
              "evade needs strategies and instances");
      if (evade.setting == EvadeSetting::kHard) {
        Require(std::find(evade.strategies.begin(), evade.strategies.end(),
                          AttackStrategy::kEgsma) == evade.strategies.end(),
                ErrorKind::kConfig, "egsma is a soft-label attack");
      }
      break;
    case ExperimentKind::kMia:
      Require(!mia.attacks.empty(), ErrorKind::kConfig, "mia needs attacks");
      break;
    case ExperimentKind::kMea:
      Require(!remote, ErrorKind::kConfig,
              "mea sweeps several explanation policies and needs the inproc oracle");
      Require(!mea.budgets.empty() && !mea.cells.empty(), ErrorKind::kConfig,
              "mea needs budgets and cells");
      break;
    case ExperimentKind::kVarlab:
      Require(!varlab.dims.empty() && !varlab.lambdas.empty(), ErrorKind::kConfig,
              "varlab needs dims and lambdas");
      break;
    case ExperimentKind::kTrain:
      break;
  }
}

ExperimentConfig ParseExperimentConfig(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Fields f(j, "config");
  f.Get("schema_version", c.schema_version);
  Require(c.schema_version == kConfigSchemaVersion, ErrorKind::kConfig,
          "unsupported config schema version " + std::to_string(c.schema_version));
  f.GetEnum("kind", c.kind, ParseExperimentKind);
  f.Get("seeds", c.seeds);
  if (const json* v = f.Find("dataset")) Read(*v, "dataset", c.dataset);
  if (const json* v = f.Find("victim")) Read(*v, "victim", c.victim);
  if (const json* v = f.Find("oracle")) Read(*v, "oracle", c.oracle);
  if (const json* v = f.Find("evade")) Read(*v, "evade", c.evade);
  if (const json* v = f.Find("mia")) Read(*v, "mia", c.mia);
  if (const json* v = f.Find("mea")) Read(*v, "mea", c.mea);
  if (const json* v = f.Find("varlab")) Read(*v, "varlab", c.varlab);
  f.Done();
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorKind::kIo, "cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseExperimentConfig(ss.str());
}

std::string ExperimentConfigToJson(const ExperimentConfig& c) {
  const json j = {{"schema_version", c.schema_version},
                  {"kind", ExperimentKindName(c.kind)},
                  {"seeds", c.seeds},
                  {"dataset", ToJson(c.dataset)},
                  {"victim", ToJson(c.victim)},
                  {"oracle", ToJson(c.oracle)},
                  {"evade", ToJson(c.evade)},
                  {"mia", ToJson(c.mia)},
                  {"mea", ToJson(c.mea)},
                  {"varlab", ToJson(c.varlab)}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Shared setup.

Dataset MakeDataset(const DatasetConfig& cfg, uint64_t seed) {
  Dataset d;
  if (cfg.source == "digits") {
    d = GenDigits(cfg.side, cfg.n_per_class, seed, cfg.pixel_noise);
  } else if (cfg.source == "blobs") {
    d = GenBlobs(cfg.n_classes, cfg.dim, cfg.n_per_class, cfg.spread, seed);
  } else if (cfg.source == "idx") {
    d = LoadIdx(cfg.idx_images, cfg.idx_labels);
  } else {
    Fail(ErrorKind::kConfig, "unknown dataset source '" + cfg.source + "'");
  }
  AssignSplits(d, cfg.splits, seed);
  Rng rng(seed, "split-order");
  for (size_t s = 0; s < kNumSplits; ++s) {
    std::vector<size_t>& rows = d.splits[s];
    const std::vector<size_t> perm = rng.Split(s).Permutation(rows.size());
    std::vector<size_t> shuffled(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) shuffled[i] = rows[perm[i]];
    rows = std::move(shuffled);
  }
  d.Validate();
  return d;
}

ModelSpec VictimSpec(const VictimConfig& cfg, const Dataset& data) {
  Require(data.size() > 0, ErrorKind::kContract, "empty dataset");
  const Shape& shape = data.inputs.front().shape();
  if (cfg.arch == "cnn") {
    Require(shape.size() == 3 && shape[1] == shape[2], ErrorKind::kConfig,
            "the cnn victim needs square [channels, side, side] inputs");
    return CnnSpec(shape[1], shape[0], data.num_classes);
  }
  Require(cfg.arch == "mlp", ErrorKind::kConfig, "unknown victim arch '" + cfg.arch + "'");
  size_t flat = 1;
  for (size_t d : shape) flat *= d;
  ModelSpec spec = MlpSpec(flat, data.num_classes, cfg.hidden);
  if (shape.size() > 1) {
    spec.input_shape = shape;
    spec.layers.insert(spec.layers.begin(), LayerSpec::Flatten());
  }
  return spec;
}

ModelGraph MakeVictim(const VictimConfig& cfg, const Dataset& data, uint64_t seed) {
  if (!cfg.model_path.empty()) {
    ModelGraph m = LoadModel(cfg.model_path);
    Require(m.spec().input_shape == data.inputs.front().shape(), ErrorKind::kShape,
            "the loaded victim does not match the dataset input shape");
    return m;
  }
  ModelGraph m = BuildModel(VictimSpec(cfg, data), seed);
  TrainConfig tc = cfg.train;
  tc.seed += seed;
  Train(m, data.SplitData(Split::kPrivateTrain), tc);
  return m;
}

std::unique_ptr<Oracle> OpenOracle(const std::string& endpoint,
                                   std::shared_ptr<const ModelGraph> victim,
                                   const OraclePolicy& policy) {
  if (endpoint == "inproc") return std::make_unique<LocalOracle>(std::move(victim), policy);
  return std::make_unique<RemoteOracle>(ParseEndpoint(endpoint));
}

void Accounting::Check(int64_t reported, int64_t ledger_delta, const std::string& what) {
  Require(reported == ledger_delta, ErrorKind::kContract,
          what + " reports " + std::to_string(reported) + " queries but the ledger moved " +
              std::to_string(ledger_delta));
  ++checks;
  queries += ledger_delta;
}

namespace {

void Log(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

int64_t Median(std::vector<int64_t> v) {
  if (v.empty()) return kFailedQueries;
  std::sort(v.begin(), v.end());
  const size_t k = v.size();
  if (k % 2 == 1) return v[k / 2];
  const int64_t a = v[k / 2 - 1], b = v[k / 2];
  if (b == kFailedQueries) return kFailedQueries;
  return a + (b - a) / 2;
}

}  // namespace

// ---------------------------------------------------------------------------
// Evasion.

const EvadeSummary& EvadeResult::summary(AttackStrategy s) const {
  for (const EvadeSummary& x : summaries) {
    if (x.strategy == s) return x;
  }
  Fail(ErrorKind::kIndex, std::string("no summary for ") + AttackStrategyName(s));
}

EvadeResult RunEvade(const ExperimentConfig& cfg, const LogFn& log) {
  Stage("config", [&] { cfg.Validate(); });
  const EvadeConfig& ec = cfg.evade;
  EvadeResult out;
  for (uint64_t seed : cfg.seeds) {
    const Dataset data = Stage("dataset", [&] { return MakeDataset(cfg.dataset, seed); });
    const auto victim = Stage("victim", [&] {
      return std::make_shared<const ModelGraph>(MakeVictim(cfg.victim, data, seed));
    });
    OraclePolicy policy = cfg.oracle.policy;
    policy.label_mode =
        ec.setting == EvadeSetting::kSoft ? LabelMode::kSoft : LabelMode::kHard;

    std::optional<ModelGraph> surrogate;
    if (std::find(ec.strategies.begin(), ec.strategies.end(), AttackStrategy::kEgsma) !=
        ec.strategies.end()) {
      surrogate = Stage("surrogate", [&] {
        const uint64_t s = SubSeed(seed, "surrogate");
        ModelGraph m = BuildModel(VictimSpec(cfg.victim, data), s);
        if (ec.surrogate_pretrain_epochs > 0) {
          TrainConfig tc = cfg.victim.train;
          tc.epochs = ec.surrogate_pretrain_epochs;
          tc.seed = s;
          tc.overfit_mode = false;
          Train(m, data.SplitData(Split::kPublicPool), tc);
        }
        return m;
      });
    }

    // Instances: test points the victim classifies correctly; in the hard
    // setting each is paired with a later test point predicted differently.
    struct Instance {
      size_t row;
      size_t cls;
      std::optional<size_t> start_row;
      size_t start_cls = 0;
    };
    std::vector<Instance> instances = Stage("select", [&] {
      auto selector = OpenOracle(cfg.oracle.endpoint, victim, policy);
      const std::vector<size_t>& test = data.split(Split::kTest);
      std::vector<size_t> predicted(test.size());
      std::vector<Instance> picked;
      for (size_t i = 0; i < test.size() && picked.size() < ec.instances; ++i) {
        predicted[i] = selector->Query(data.inputs[test[i]], QueryPurpose::kVerification)
                           .predicted();
        if (predicted[i] != data.labels[test[i]]) continue;
        picked.push_back({test[i], predicted[i], std::nullopt});
      }
      Require(picked.size() == ec.instances, ErrorKind::kConfig,
              "the test split has too few correctly classified points");
      if (ec.setting == EvadeSetting::kHard) {
        for (Instance& inst : picked) {
          const size_t at = std::find(test.begin(), test.end(), inst.row) - test.begin();
          for (size_t k = 1; k < test.size(); ++k) {
            const size_t j = (at + k) % test.size();
            const size_t pj =
                selector->Query(data.inputs[test[j]], QueryPurpose::kVerification)
                    .predicted();
            if (pj != inst.cls) {
              inst.start_row = test[j];
              inst.start_cls = pj;
              break;
            }
          }
          Require(inst.start_row.has_value(), ErrorKind::kDegenerate,
                  "the victim predicts a single class on the test split");
        }
      }
      return picked;
    });

    for (size_t i = 0; i < instances.size(); ++i) {
      const Instance& inst = instances[i];
      const Tensor& x = data.inputs[inst.row];
      for (AttackStrategy strategy : ec.strategies) {
        AttackConfig ac = ec.attack;
        ac.seed = SubSeed(seed, "attack", i);
        auto oracle = OpenOracle(cfg.oracle.endpoint, victim, policy);
        const int64_t before = oracle->ledger().count();
        const AttackTrace trace = Stage(std::string("attack ") + AttackStrategyName(strategy),
                                        [&] {
          if (ec.setting == EvadeSetting::kHard) {
            return HardLabelAttack(*oracle, x, data.inputs[*inst.start_row],
                                   AttackGoal{inst.start_cls, true}, ac, strategy);
          }
          if (strategy == AttackStrategy::kEgsma) {
            EgsmaSetup setup{*surrogate, {}, ec.surrogate_explainer, ec.surrogate_prefit};
            return EgsmaAttack(*oracle, x, inst.cls, ac, setup);
          }
          return SoftLabelAttack(*oracle, x, inst.cls, ac, strategy);
        });
        out.accounting.Check(trace.queries_used, oracle->ledger().count() - before,
                             std::string(AttackStrategyName(strategy)) + " attack");
        EvadeRecord r;
        r.seed = seed;
        r.instance = i;
        r.sample_id = data.ids[inst.row];
        r.strategy = strategy;
        r.success = trace.success;
        r.queries = trace.queries_used;
        r.final_distance = trace.distortion_history.empty()
                               ? 0.0
                               : trace.distortion_history.back().second;
        out.records.push_back(r);
      }
      if ((i + 1) % 10 == 0 || i + 1 == instances.size()) {
        Log(log, "evade seed " + std::to_string(seed) + ": " + std::to_string(i + 1) + "/" +
                     std::to_string(instances.size()) + " instances");
      }
    }
  }
  for (AttackStrategy s : ec.strategies) {
    EvadeSummary sum;
    sum.strategy = s;
    std::vector<int64_t> q;
    for (const EvadeRecord& r : out.records) {
      if (r.strategy != s) continue;
      ++sum.attempts;
      sum.successes += r.success;
      q.push_back(r.success ? r.queries : kFailedQueries);
    }
    sum.median_queries = Median(q);
    out.summaries.push_back(sum);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Membership inference.

namespace {

OraclePolicy MiaPolicy(const OraclePolicy& base, MiaAttack attack) {
  OraclePolicy p = base;
  p.label_mode = LabelMode::kSoft;
  p.top_k.reset();
  switch (attack) {
    case MiaAttack::kExplanationVariance:
    case MiaAttack::kOptVar:
      if (!p.explanation) p.explanation = ExplanationPolicy{};
      p.explanation->score_kind = attack == MiaAttack::kOptVar ? ScoreKind::kLogit
                                                               : ScoreKind::kSoftmax;
      p.explanation->form = ExplanationForm::kTrue;
      p.attach_explanation = true;
      break;
    case MiaAttack::kGap:
    case MiaAttack::kLossThreshold:
      p.attach_explanation = false;
      break;
  }
  return p;
}

MiaDirection DirectionOf(MiaAttack a) {
  return a == MiaAttack::kGap ? MiaDirection::kHigherIsMember
                              : MiaDirection::kLowerIsMember;
}

}  // namespace

MiaResult RunMia(const ExperimentConfig& cfg, const LogFn& log) {
  Stage("config", [&] { cfg.Validate(); });
  const MiaConfig& mc = cfg.mia;
  MiaResult out;
  for (uint64_t seed : cfg.seeds) {
    const Dataset data = Stage("dataset", [&] { return MakeDataset(cfg.dataset, seed); });
    const auto victim = Stage("victim", [&] {
      return std::make_shared<const ModelGraph>(MakeVictim(cfg.victim, data, seed));
    });
    const std::vector<size_t>& priv = data.split(Split::kPrivateTrain);
    const std::vector<size_t>& pub = data.split(Split::kPublicPool);
    const std::vector<size_t>& test = data.split(Split::kTest);
    Stage("split", [&] {
      Require(priv.size() >= mc.evaluation_per_side + mc.calibration_members &&
                  pub.size() >= mc.calibration_nonmembers &&
                  test.size() >= mc.evaluation_per_side,
              ErrorKind::kConfig, "splits are too small for the membership protocol");
    });
    // Evaluation members come first in the private split, calibration members
    // after them; calibration non-members are public, evaluation non-members test.
    struct Sample {
      size_t row;
      bool member;
      bool calibration;
      Split split;
    };
    std::vector<Sample> samples;
    for (size_t i = 0; i < mc.calibration_members; ++i) {
      samples.push_back({priv[mc.evaluation_per_side + i], true, true, Split::kPrivateTrain});
    }
    for (size_t i = 0; i < mc.calibration_nonmembers; ++i) {
      samples.push_back({pub[i], false, true, Split::kPublicPool});
    }
    for (size_t i = 0; i < mc.evaluation_per_side; ++i) {
      samples.push_back({priv[i], true, false, Split::kPrivateTrain});
    }
    for (size_t i = 0; i < mc.evaluation_per_side; ++i) {
      samples.push_back({test[i], false, false, Split::kTest});
    }
    std::set<uint64_t> calib_ids, eval_ids;
    for (const Sample& s : samples) {
      (s.calibration ? calib_ids : eval_ids).insert(data.ids[s.row]);
    }
    Stage("split", [&] {
      for (uint64_t id : calib_ids) {
        Require(!eval_ids.count(id), ErrorKind::kContract,
                "calibration and evaluation sets share id " + std::to_string(id));
      }
    });

    double member_acc = 0.0, nonmember_acc = 0.0;
    for (const Sample& s : samples) {
      if (s.calibration) continue;
      const bool correct =
          ArgMax(Forward(*victim, data.inputs[s.row]).data()) == data.labels[s.row];
      (s.member ? member_acc : nonmember_acc) += correct;
    }
    member_acc /= static_cast<double>(mc.evaluation_per_side);
    nonmember_acc /= static_cast<double>(mc.evaluation_per_side);

    for (MiaAttack attack : mc.attacks) {
      const MiaDirection dir = DirectionOf(attack);
      auto oracle = OpenOracle(cfg.oracle.endpoint, victim, MiaPolicy(cfg.oracle.policy, attack));
      const int64_t before = oracle->ledger().count();
      std::vector<double> cm, cn, ev, em, en;
      std::vector<bool> is_member;
      Stage(std::string("score ") + MiaAttackName(attack), [&] {
        for (const Sample& s : samples) {
          const Tensor& x = data.inputs[s.row];
          const uint64_t id = data.ids[s.row];
          const size_t y = data.labels[s.row];
          MiaScore sc;
          switch (attack) {
            case MiaAttack::kExplanationVariance:
              sc = ExplanationVarianceScore(*oracle, x, id);
              break;
            case MiaAttack::kOptVar:
              sc = OptVarScore(*oracle, x, id);
              break;
            case MiaAttack::kGap:
              sc = GapAttackScore(*oracle, x, y, id);
              break;
            case MiaAttack::kLossThreshold:
              sc = LossThresholdScore(*oracle, x, y, id);
              break;
          }
          Require(std::isfinite(sc.score), ErrorKind::kNumeric, "score is not finite");
          out.records.push_back({seed, id, attack, sc.score, s.member, s.calibration, s.split});
          if (s.calibration) {
            (s.member ? cm : cn).push_back(sc.score);
          } else {
            ev.push_back(sc.score);
            is_member.push_back(s.member);
            (s.member ? em : en).push_back(sc.score);
          }
        }
      });
      out.accounting.Check(static_cast<int64_t>(samples.size()),
                           oracle->ledger().count() - before,
                           std::string(MiaAttackName(attack)) + " scoring");
      MiaSummary sum;
      sum.seed = seed;
      sum.attack = attack;
      sum.calibration = CalibrateThreshold(cm, cn, dir);
      if (attack == MiaAttack::kGap) {
        // Misclassified points are non-members: the rule needs no tuning.
        sum.calibration.threshold = 0.5;
      }
      sum.evaluation = EvaluateMia(ev, is_member, sum.calibration.threshold, dir);
      sum.member_accuracy = member_acc;
      sum.nonmember_accuracy = nonmember_acc;
      sum.rank_p_value = dir == MiaDirection::kLowerIsMember ? MannWhitneyLessPValue(em, en)
                                                             : MannWhitneyLessPValue(en, em);
      out.summaries.push_back(sum);
      Log(log, "mia seed " + std::to_string(seed) + " " + MiaAttackName(attack) +
                   ": accuracy " + std::to_string(sum.evaluation.accuracy));
    }
  }
  out.disjoint = true;
  return out;
}

// ---------------------------------------------------------------------------
// Model extraction.

MeaExperimentResult RunMea(const ExperimentConfig& cfg, const LogFn& log) {
  Stage("config", [&] { cfg.Validate(); });
  MeaExperimentResult out;
  for (uint64_t seed : cfg.seeds) {
    const Dataset data = Stage("dataset", [&] { return MakeDataset(cfg.dataset, seed); });
    SweepSetup setup;
    setup.victim = Stage("victim", [&] {
      return std::make_shared<const ModelGraph>(MakeVictim(cfg.victim, data, seed));
    });
    setup.surrogate_spec = VictimSpec(cfg.victim, data);
    setup.pool = data.SplitData(Split::kPublicPool).inputs;
    setup.test = data.SplitData(Split::kTest);
    setup.base = cfg.mea.base;
    setup.base.seed = SubSeed(seed, "mea");
    setup.base.train.seed += seed;
    setup.msv_inputs = setup.test.inputs;
    setup.msv_samples = cfg.mea.msv_samples;
    for (const MeaCell& cell : cfg.mea.cells) {
      const std::vector<MeaResult> rows = Stage(
          std::string("sweep ") + ExplainMethodName(cell.method),
          [&] { return BudgetSweep(setup, cfg.mea.budgets, {cell}); });
      for (const MeaResult& r : rows) {
        out.accounting.Check(r.budget, r.queries, "extraction cell");
        out.rows.push_back({seed, r});
        Log(log, "mea seed " + std::to_string(seed) + " " + ExplainMethodName(r.method) +
                     " alpha " + std::to_string(r.alpha) + " budget " +
                     std::to_string(r.budget) + ": r_test " + std::to_string(r.r_test));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimator lab.

VarlabResult RunVarlab(const ExperimentConfig& cfg, const LogFn& log) {
  Stage("config", [&] { cfg.Validate(); });
  const VarlabConfig& vc = cfg.varlab;
  VarlabResult out;
  for (uint64_t seed : cfg.seeds) {
    for (size_t n : vc.dims) {
      // A gradient and a unit prior at roughly 45 degrees to it.
      std::vector<double> g(n), e(n), w(n);
      Rng(seed, "varlab-gradient").Split(n).FillNormal(g);
      Rng(seed, "varlab-prior").Split(n).FillNormal(w, 1.0 / std::sqrt(static_cast<double>(n)));
      const double gn = Norm2(g);
      for (size_t i = 0; i < n; ++i) e[i] = g[i] / gn + w[i];
      const double en = Norm2(e);
      for (double& v : e) v /= en;
      const Tensor x0 = Tensor::Vector(std::vector<double>(n, 0.0));
      const ScalarFunction f = [&](const Tensor& x) { return Dot(g, x.data()); };
      for (size_t li = 0; li < vc.lambdas.size(); ++li) {
        const double lambda = vc.lambdas[li];
        const PriorShapedGaussian sampler{lambda, 1.0, e, PriorKind::kMeanShift};
        const EstimatorStats st = Stage("estimate", [&] {
          return EmpiricalEstimatorStats(f, x0, g, sampler, vc.samples, vc.trials, vc.delta,
                                         SubSeed(seed, "varlab", n * 1000 + li));
        });
        const Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(n));
        const Eigen::VectorXd expected =
            (SigmaHat(lambda, 1.0, n) + GHat(lambda, e)) * gv;
        const double bias = BiasAnalytic(lambda, g, e);
        out.rows.push_back({seed, n, lambda, "mean_error", 0.0, 0.0,
                            (st.mean - expected).norm(), st.mean_stderr});
        out.rows.push_back(
            {seed, n, lambda, "bias", bias, bias, st.bias_debiased, st.bias_stderr});
        out.rows.push_back({seed, n, lambda, "total_variance",
                            TotalVarianceAnalytic(lambda, n, vc.samples, g, e),
                            TotalVarianceExact(lambda, n, vc.samples, g, e),
                            st.total_variance, st.total_variance_stderr});
      }
      Log(log, "varlab seed " + std::to_string(seed) + " n " + std::to_string(n) + " done");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Emission.

namespace {

std::string Num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class Csv {
 public:
  explicit Csv(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }
  Csv& Cell(const std::string& s) {
    Sep();
    out_ << s;
    return *this;
  }
  Csv& Cell(double v) { return Cell(Num(v)); }
  Csv& Cell(int64_t v) { return Cell(std::to_string(v)); }
  Csv& Cell(uint64_t v) { return Cell(std::to_string(v)); }
  Csv& Cell(bool v) { return Cell(std::string(v ? "1" : "0")); }
  Csv& Cell(const char* s) { return Cell(std::string(s)); }
  void End() {
    out_ << '\n';
    fresh_ = true;
  }
  std::string str() const { return out_.str(); }

 private:
  void Sep() {
    if (!fresh_) out_ << ',';
    fresh_ = false;
  }
  std::ostringstream out_;
  bool fresh_ = true;
};

std::string Hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string EvadeCsv(const EvadeResult& r) {
  Csv c({"seed", "instance", "sample_id", "strategy", "success", "queries",
         "final_distance"});
  for (const EvadeRecord& x : r.records) {
    c.Cell(x.seed).Cell(x.instance).Cell(x.sample_id).Cell(AttackStrategyName(x.strategy));
    c.Cell(x.success).Cell(x.queries).Cell(x.final_distance).End();
  }
  return c.str();
}

std::string EvadeCurveCsv(const EvadeResult& r) {
  Csv c({"strategy", "queries", "success_rate"});
  for (const EvadeSummary& s : r.summaries) {
    std::vector<int64_t> q;
    for (const EvadeRecord& x : r.records) {
      if (x.strategy == s.strategy && x.success) q.push_back(x.queries);
    }
    std::sort(q.begin(), q.end());
    c.Cell(AttackStrategyName(s.strategy)).Cell(int64_t{0}).Cell(0.0).End();
    for (size_t i = 0; i < q.size(); ++i) {
      if (i + 1 < q.size() && q[i + 1] == q[i]) continue;
      c.Cell(AttackStrategyName(s.strategy)).Cell(q[i]);
      c.Cell(static_cast<double>(i + 1) / static_cast<double>(s.attempts)).End();
    }
  }
  return c.str();
}

std::string MiaScoresCsv(const MiaResult& r) {
  Csv c({"seed", "sample_id", "attack", "score", "is_member", "split", "role"});
  for (const MiaRecord& x : r.records) {
    c.Cell(x.seed).Cell(x.sample_id).Cell(MiaAttackName(x.attack)).Cell(x.score);
    c.Cell(x.is_member).Cell(SplitName(x.split));
    c.Cell(x.calibration ? "calibration" : "evaluation").End();
  }
  return c.str();
}

std::string MiaSummaryCsv(const MiaResult& r) {
  Csv c({"seed", "attack", "threshold", "calibration_balanced_accuracy", "degenerate",
         "accuracy", "advantage", "true_member", "false_nonmember", "false_member",
         "true_nonmember", "member_accuracy", "nonmember_accuracy", "rank_p_value"});
  for (const MiaSummary& s : r.summaries) {
    c.Cell(s.seed).Cell(MiaAttackName(s.attack)).Cell(s.calibration.threshold);
    c.Cell(s.calibration.balanced_accuracy).Cell(s.calibration.degenerate);
    c.Cell(s.evaluation.accuracy).Cell(s.evaluation.advantage);
    c.Cell(s.evaluation.true_member).Cell(s.evaluation.false_nonmember);
    c.Cell(s.evaluation.false_member).Cell(s.evaluation.true_nonmember);
    c.Cell(s.member_accuracy).Cell(s.nonmember_accuracy).Cell(s.rank_p_value).End();
  }
  return c.str();
}

std::string MeaCsv(const MeaExperimentResult& r) {
  Csv c({"budget", "method", "alpha", "r_test", "agreement", "msv_mean", "seed",
         "surrogate_accuracy", "victim_accuracy", "queries", "initial_loss", "final_loss"});
  for (const MeaRow& row : r.rows) {
    const MeaResult& x = row.result;
    c.Cell(x.budget).Cell(ExplainMethodName(x.method)).Cell(x.alpha).Cell(x.r_test);
    c.Cell(x.agreement).Cell(x.msv_mean).Cell(row.seed).Cell(x.surrogate_accuracy);
    c.Cell(x.victim_accuracy).Cell(x.queries).Cell(x.initial_loss).Cell(x.final_loss).End();
  }
  return c.str();
}

std::string VarlabCsv(const VarlabResult& r) {
  Csv c({"seed", "n", "lambda", "quantity", "analytic", "exact", "empirical", "stderr"});
  for (const VarlabRow& x : r.rows) {
    c.Cell(x.seed).Cell(x.n).Cell(x.lambda).Cell(x.quantity).Cell(x.analytic);
    c.Cell(x.exact).Cell(x.empirical).Cell(x.stderr_).End();
  }
  return c.str();
}

void WriteArtifacts(const std::string& out_dir, const ExperimentConfig& cfg,
                    const std::vector<Artifact>& artifacts, int64_t total_queries) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  Require(!ec, ErrorKind::kIo, "cannot create '" + out_dir + "': " + ec.message());
  json files = json::array();
  auto write = [&](const std::string& name, const std::string& contents) {
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    Require(f.good(), ErrorKind::kIo, "cannot write '" + path + "'");
  };
  for (const Artifact& a : artifacts) {
    write(a.name, a.contents);
    files.push_back({{"name", a.name},
                     {"bytes", a.contents.size()},
                     {"fnv1a64", Hex(Fnv1a64(a.contents))}});
  }
  const std::string canonical = ExperimentConfigToJson(cfg);
  const json manifest = {{"schema_version", kConfigSchemaVersion},
                         {"kind", ExperimentKindName(cfg.kind)},
                         {"config_hash", Hex(Fnv1a64(canonical))},
                         {"config", json::parse(canonical)},
                         {"seeds", cfg.seeds},
                         {"build_id", BuildId()},
                         {"files", files},
                         {"total_queries", total_queries}};
  write("manifest.json", manifest.dump(2) + "\n");
}

void RunExperiment(const ExperimentConfig& cfg, const std::string& out_dir,
                   const LogFn& log) {
  std::vector<Artifact> artifacts;
  int64_t queries = 0;
  switch (cfg.kind) {
    case ExperimentKind::kTrain: {
      Stage("config", [&] { cfg.Validate(); });
      Csv c({"seed", "split", "accuracy"});
      Csv losses({"seed", "epoch", "loss"});
      for (uint64_t seed : cfg.seeds) {
        const Dataset data = Stage("dataset", [&] { return MakeDataset(cfg.dataset, seed); });
        ModelGraph m = BuildModel(VictimSpec(cfg.victim, data), seed);
        TrainConfig tc = cfg.victim.train;
        tc.seed += seed;
        const TrainResult tr =
            Stage("train", [&] { return Train(m, data.SplitData(Split::kPrivateTrain), tc); });
        for (size_t e = 0; e < tr.epoch_loss.size(); ++e) {
          losses.Cell(seed).Cell(e + 1).Cell(tr.epoch_loss[e]).End();
        }
        for (Split s : {Split::kPrivateTrain, Split::kTest}) {
          if (data.split(s).empty()) continue;
          c.Cell(seed).Cell(SplitName(s)).Cell(EvaluateAccuracy(m, data.SplitData(s))).End();
        }
        const std::vector<unsigned char> bytes = SerializeModel(m);
        artifacts.push_back({"victim_" + std::to_string(seed) + ".xglk",
                             std::string(bytes.begin(), bytes.end())});
        Log(log, "trained victim for seed " + std::to_string(seed));
      }
      artifacts.push_back({"train.csv", c.str()});
      artifacts.push_back({"train_loss.csv", losses.str()});
      break;
    }
    case ExperimentKind::kEvade: {
      const EvadeResult r = RunEvade(cfg, log);
      artifacts.push_back({"evade.csv", EvadeCsv(r)});
      artifacts.push_back({"evade_curve.csv", EvadeCurveCsv(r)});
      queries = r.accounting.queries;
      break;
    }
    case ExperimentKind::kMia: {
      const MiaResult r = RunMia(cfg, log);
      artifacts.push_back({"mia_scores.csv", MiaScoresCsv(r)});
      artifacts.push_back({"mia_summary.csv", MiaSummaryCsv(r)});
      queries = r.accounting.queries;
      break;
    }
    case ExperimentKind::kMea: {
      const MeaExperimentResult r = RunMea(cfg, log);
      artifacts.push_back({"mea.csv", MeaCsv(r)});
      queries = r.accounting.queries;
      break;
    }
    case ExperimentKind::kVarlab: {
      const VarlabResult r = RunVarlab(cfg, log);
      artifacts.push_back({"varlab.csv", VarlabCsv(r)});
      break;
    }
  }
  Stage("write", [&] { WriteArtifacts(out_dir, cfg, artifacts, queries); });
}

}  // namespace xglk
