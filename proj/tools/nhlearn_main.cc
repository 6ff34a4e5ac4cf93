// Copyright 2026 The nhlearn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// nhlearn: dataset generation, training, evaluation, sweeps and reports
// driven by one INI config file.
//
// Exit codes: 0 success, 2 invalid configuration, 3 training (or
// generation) failure, 4 evaluation failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nhlearn/config.h"
#include "nhlearn/error.h"
#include "nhlearn/eval.h"
#include "nhlearn/pipeline.h"

namespace {

namespace fs = std::filesystem;
using nhlearn::PipelineConfig;

constexpr int kExitConfig = 2;
constexpr int kExitTrain = 3;
constexpr int kExitEval = 4;

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> models;
  std::optional<int> seeds;
};

void AddFlags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "base seed (overrides data.seed)");
  cmd->add_option("--out", f.out, "output directory (overrides output.dir)");
  cmd->add_option("--models", f.models,
                  "comma-separated subset of full_gp,sparse_gp,projected,"
                  "oracle_projected");
  cmd->add_option("--seeds", f.seeds, "number of consecutive seeds");
}

PipelineConfig Resolve(const Flags& f) {
  PipelineConfig cfg = f.config.empty() ? nhlearn::DefaultConfig("unicycle")
                                        : nhlearn::LoadConfig(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.output_dir = *f.out;
  if (f.seeds) cfg.eval_seeds = *f.seeds;
  if (f.models) {
    // reuse the config parser so both spellings behave the same
    cfg.models = nhlearn::ParseConfig("[eval]\nmodels = " + *f.models + "\n")
                     .models;
  }
  nhlearn::ValidateConfig(cfg);
  nhlearn::WriteTextFile(cfg.output_dir / "config.resolved.ini",
                         nhlearn::WriteConfig(cfg));
  return cfg;
}

std::vector<uint64_t> Seeds(const PipelineConfig& cfg) {
  std::vector<uint64_t> seeds;
  for (int k = 0; k < cfg.eval_seeds; ++k) seeds.push_back(cfg.seed + k);
  return seeds;
}

int Fail(int code, const std::string& what) {
  std::cerr << "error: " << what << "\n";
  return code;
}

int Generate(const PipelineConfig& cfg) {
  for (uint64_t seed : Seeds(cfg)) {
    auto paths = nhlearn::SeedPaths(cfg.output_dir, seed);
    auto s = nhlearn::RunGenerate(cfg, seed, paths);
    std::cout << "seed " << seed << ": " << s.offline_trajectories
              << " offline trajectories, " << s.online_samples
              << " online samples, " << s.test_count
              << " test triples, OOD margin attained " << s.ood_margin_attained
              << " -> " << paths.data().string() << "\n";
  }
  return 0;
}

int Train(const PipelineConfig& cfg) {
  for (uint64_t seed : Seeds(cfg)) {
    std::vector<nhlearn::StageLine> lines;
    nhlearn::RunTrain(cfg, seed, nhlearn::SeedPaths(cfg.output_dir, seed),
                      &lines);
    for (const auto& l : lines) {
      std::cout << "seed " << seed << " " << l.stage
                << (l.resumed ? " (resumed) " : " ") << l.metrics.dump()
                << "\n";
    }
  }
  return 0;
}

int Eval(const PipelineConfig& cfg) {
  std::vector<nhlearn::EvalReport> reports;
  for (uint64_t seed : Seeds(cfg)) {
    auto paths = nhlearn::SeedPaths(cfg.output_dir, seed);
    reports.push_back(nhlearn::RunEval(cfg, seed, paths, cfg.models));
    for (const auto& m : reports.back().models) {
      std::cout << "seed " << seed << " " << m.name << " rmse "
                << m.rmse_total << " violation "
                << m.constraint_violation_mean << "\n";
    }
  }
  if (reports.size() > 1) {
    nhlearn::WriteTextFile(cfg.output_dir / "aggregate.json",
                           nhlearn::AggregateReports(reports).dump(2) + "\n");
    std::cout << nhlearn::FormatSummary(reports);
  }
  return 0;
}

int Sweep(const PipelineConfig& cfg) {
  auto cells = nhlearn::RunSweep(cfg, Seeds(cfg), cfg.output_dir);
  nhlearn::WriteTextFile(cfg.output_dir / "sweep" / "sweep.json",
                         nhlearn::SweepToJson(cells).dump(2) + "\n");
  int failed = 0;
  for (size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    std::cout << "cell " << i << " mask " << c.mask_threshold << " sv_rel "
              << c.sv_rel << " K " << c.lma_rows << " noise " << c.noise_std;
    if (!c.ok) {
      ++failed;
      std::cout << " FAILED: " << c.error << "\n";
      continue;
    }
    auto agg = nhlearn::AggregateReports(c.reports);
    for (const auto& m : agg.at("models")) {
      std::cout << " " << m.at("name").get<std::string>() << "="
                << m.at("rmse_total").at("median").get<double>();
    }
    std::cout << "\n";
  }
  if (failed) std::cout << failed << " of " << cells.size() << " cells failed\n";
  return 0;
}

int Report(const PipelineConfig& cfg) {
  auto reports = nhlearn::CollectReports(cfg.output_dir);
  if (reports.empty()) {
    return Fail(kExitEval, "no reports under " + cfg.output_dir.string() +
                               " (run eval first)");
  }
  nhlearn::WriteTextFile(cfg.output_dir / "aggregate.json",
                         nhlearn::AggregateReports(reports).dump(2) + "\n");
  std::cout << nhlearn::FormatSummary(reports);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn dynamics, sparsity and nonholonomic constraints from "
               "trajectory data"};
  app.require_subcommand(1);
  Flags flags;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const PipelineConfig&);
    int failure_code;
  };
  const Command commands[] = {
      {"generate", "generate and save dataset bundles", Generate, kExitTrain},
      {"train", "train the pseudometrics, dynamics GPs and constraint model",
       Train, kExitTrain},
      {"eval", "evaluate trained models on the OOD test set", Eval, kExitEval},
      {"sweep", "ablation grid from the [sweep] section", Sweep, kExitTrain},
      {"report", "aggregate existing reports", Report, kExitEval},
  };
  std::vector<CLI::App*> subs;
  for (const Command& c : commands) {
    subs.push_back(app.add_subcommand(c.name, c.help));
    AddFlags(subs.back(), flags);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  for (size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const Command& c = commands[i];
    PipelineConfig cfg;
    try {
      cfg = Resolve(flags);
    } catch (const std::exception& e) {
      return Fail(kExitConfig, e.what());
    }
    try {
      return c.run(cfg);
    } catch (const nhlearn::ConfigError& e) {
      return Fail(kExitConfig, e.what());
    } catch (const nhlearn::StageError& e) {
      return Fail(c.failure_code,
                  std::string(c.name) + " failed in stage " + e.what());
    } catch (const std::exception& e) {
      return Fail(c.failure_code, std::string(c.name) + " failed: " + e.what());
    }
  }
  return 0;
}
