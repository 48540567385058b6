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

#include "cli.h"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xglk/error.h"
#include "xglk/experiment.h"
#include "xglk/wire.h"

namespace xglk {
namespace {

struct GlobalFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out = "out";
  std::string oracle;
};

ExperimentConfig ResolveConfig(const GlobalFlags& g, ExperimentKind kind) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : LoadExperimentConfig(g.config);
  cfg.kind = kind;
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.oracle.empty()) cfg.oracle.endpoint = g.oracle;
  return cfg;
}

std::string ReadFile(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  Require(in.good(), ErrorKind::kIo, "cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

using Table = std::vector<std::map<std::string, std::string>>;

Table ParseCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  Table rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    return cells;
  };
  if (!std::getline(in, line)) return rows;
  header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    Require(cells.size() == header.size(), ErrorKind::kFormat, "ragged CSV row");
    std::map<std::string, std::string> row;
    for (size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

double Median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

void ReportEvade(const Table& t, std::ostream& out) {
  std::map<std::string, std::vector<double>> queries;
  std::map<std::string, int> successes;
  for (const auto& r : t) {
    const bool ok = r.at("success") == "1";
    queries[r.at("strategy")].push_back(ok ? std::stod(r.at("queries")) : INFINITY);
    successes[r.at("strategy")] += ok;
  }
  out << "evasion\n  strategy  attempts  success_rate  median_queries\n";
  for (const auto& [s, q] : queries) {
    out << "  " << std::left << std::setw(8) << s << "  " << std::setw(8) << q.size() << "  "
        << std::setw(12) << static_cast<double>(successes[s]) / static_cast<double>(q.size())
        << "  " << Median(q) << "\n";
  }
}

void ReportMia(const Table& t, std::ostream& out) {
  std::map<std::string, std::vector<double>> acc;
  for (const auto& r : t) acc[r.at("attack")].push_back(std::stod(r.at("accuracy")));
  out << "membership inference (median over seeds)\n  attack    accuracy  advantage\n";
  for (const auto& [a, v] : acc) {
    const double m = Median(v);
    out << "  " << std::left << std::setw(8) << a << "  " << std::setw(8) << m << "  "
        << m - 0.5 << "\n";
  }
}

void ReportMea(const Table& t, std::ostream& out) {
  std::map<std::string, std::vector<double>> rt, msv;
  for (const auto& r : t) {
    const std::string key = r.at("budget") + " " + r.at("method") + " " + r.at("alpha");
    rt[key].push_back(std::stod(r.at("r_test")));
    msv[key].push_back(std::stod(r.at("msv_mean")));
  }
  out << "model extraction (median over seeds)\n  budget method alpha: r_test msv\n";
  for (const auto& [k, v] : rt) {
    out << "  " << k << ": " << Median(v) << " " << Median(msv[k]) << "\n";
  }
}

void ReportVarlab(const Table& t, std::ostream& out) {
  std::map<std::string, double> worst;
  std::map<std::string, size_t> count;
  for (const auto& r : t) {
    const double exact = std::stod(r.at("exact"));
    // The floor keeps deterministic cells (stderr at roundoff level) finite.
    const double se = std::stod(r.at("stderr")) + 1e-9 * (1.0 + std::abs(exact)) / 3.0;
    const double z = std::abs(std::stod(r.at("empirical")) - exact) / se;
    worst[r.at("quantity")] = std::max(worst[r.at("quantity")], z);
    ++count[r.at("quantity")];
  }
  out << "estimator lab\n  quantity        rows  max |empirical - exact| / stderr\n";
  for (const auto& [q, z] : worst) {
    out << "  " << std::left << std::setw(14) << q << "  " << std::setw(4) << count[q] << "  "
        << z << "\n";
  }
}

void ReportTrain(const Table& t, std::ostream& out) {
  out << "training\n";
  for (const auto& r : t) {
    out << "  seed " << r.at("seed") << " " << r.at("split") << " accuracy "
        << r.at("accuracy") << "\n";
  }
}

// Verifies the manifest hashes and prints a summary of every known artifact.
int Report(const std::string& dir, std::ostream& out, std::ostream& err) {
  const std::filesystem::path root(dir);
  const nlohmann::json manifest = nlohmann::json::parse(ReadFile(root / "manifest.json"));
  out << "kind " << manifest.at("kind").get<std::string>() << ", build "
      << manifest.at("build_id").get<std::string>() << ", config "
      << manifest.at("config_hash").get<std::string>() << ", queries "
      << manifest.at("total_queries").get<int64_t>() << "\n";
  int status = 0;
  for (const auto& f : manifest.at("files")) {
    const std::string name = f.at("name").get<std::string>();
    const std::string contents = ReadFile(root / name);
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(Fnv1a64(contents)));
    if (hex != f.at("fnv1a64").get<std::string>()) {
      err << "hash mismatch: " << name << "\n";
      status = 1;
      continue;
    }
    if (name == "evade.csv") ReportEvade(ParseCsv(contents), out);
    if (name == "mia_summary.csv") ReportMia(ParseCsv(contents), out);
    if (name == "mea.csv") ReportMea(ParseCsv(contents), out);
    if (name == "varlab.csv") ReportVarlab(ParseCsv(contents), out);
    if (name == "train.csv") ReportTrain(ParseCsv(contents), out);
  }
  return status;
}

// Serves the configured victim until SIGINT or SIGTERM.
int Serve(const ExperimentConfig& cfg, uint16_t port, std::ostream& out) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  const uint64_t seed = cfg.seeds.front();
  const Dataset data = MakeDataset(cfg.dataset, seed);
  auto victim = std::make_shared<const ModelGraph>(MakeVictim(cfg.victim, data, seed));
  auto oracle = std::make_shared<LocalOracle>(victim, cfg.oracle.policy);
  OracleServer server(oracle, port);
  out << "listening on 127.0.0.1:" << server.port() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.Stop();
  out << "served " << server.global_ledger().count() << " queries" << std::endl;
  return 0;
}

}  // namespace

int CliMain(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Explanation-guided attack laboratory", "xglk");
  app.require_subcommand(1, 1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, "experiment config (JSON, schema version 1)");
  app.add_option("--seed", g.seed, "run a single seed instead of the configured list");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--oracle", g.oracle, "inproc or tcp://host:port of a running serve");

  auto* train = app.add_subcommand("train", "train victims and save them");
  auto* serve = app.add_subcommand("serve", "serve the victim over the NDJSON TCP oracle");
  std::optional<uint16_t> port;
  serve->add_option("--port", port, "listening port (0 picks a free one)");
  auto* attack = app.add_subcommand("attack", "black-box evasion experiment");
  std::string setting, strategies;
  std::optional<size_t> instances;
  attack->add_option("--setting", setting, "soft or hard");
  attack->add_option("--strategies", strategies, "comma-separated: nes,egta,egsa,egsma");
  attack->add_option("--instances", instances, "instances per seed");
  auto* mia = app.add_subcommand("mia", "membership inference experiment");
  auto* mea = app.add_subcommand("mea", "model extraction experiment");
  auto* varlab = app.add_subcommand("varlab", "estimator bias and variance verification");
  std::optional<size_t> trials;
  varlab->add_option("--trials", trials, "Monte-Carlo trials per grid point");
  auto* report = app.add_subcommand("report", "verify and summarize an output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (report->parsed()) return Report(g.out, out, err);
    const std::map<CLI::App*, ExperimentKind> kinds = {
        {train, ExperimentKind::kTrain}, {serve, ExperimentKind::kTrain},
        {attack, ExperimentKind::kEvade}, {mia, ExperimentKind::kMia},
        {mea, ExperimentKind::kMea},     {varlab, ExperimentKind::kVarlab}};
    CLI::App* sub = app.get_subcommands().front();
    ExperimentConfig cfg = ResolveConfig(g, kinds.at(sub));
    if (sub == serve) {
      cfg.Validate();
      return Serve(cfg, port.value_or(cfg.oracle.port), out);
    }
    if (sub == attack) {
      if (!setting.empty()) {
        Require(setting == "soft" || setting == "hard", ErrorKind::kConfig,
                "--setting must be soft or hard");
        cfg.evade.setting = setting == "soft" ? EvadeSetting::kSoft : EvadeSetting::kHard;
      }
      if (!strategies.empty()) {
        cfg.evade.strategies.clear();
        std::stringstream ss(strategies);
        std::string s;
        while (std::getline(ss, s, ',')) cfg.evade.strategies.push_back(ParseAttackStrategy(s));
      }
      if (instances) cfg.evade.instances = *instances;
    }
    if (sub == varlab && trials) cfg.varlab.trials = *trials;
    RunExperiment(cfg, g.out, [&](const std::string& line) { err << line << "\n"; });
    out << "wrote " << g.out << "/manifest.json\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace xglk
