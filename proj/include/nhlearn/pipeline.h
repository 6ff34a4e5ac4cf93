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
#ifndef NHLEARN_PIPELINE_H_
#define NHLEARN_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nhlearn/config.h"
#include "nhlearn/datasets.h"
#include "nhlearn/eval.h"
#include "nhlearn/gp.h"
#include "nhlearn/manifold.h"
#include "nhlearn/metric.h"

namespace nhlearn {

// Per-seed layout below the output directory:
//   seed_<k>/data/            dataset bundle
//   seed_<k>/checkpoints/     one JSON file per training stage
//   seed_<k>/train_log.jsonl  one metrics line per stage
//   seed_<k>/report.json, residuals.csv
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path checkpoint(const std::string& stage) const {
    return checkpoints() / (stage + ".json");
  }
  std::filesystem::path train_log() const { return root / "train_log.jsonl"; }
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path residuals() const { return root / "residuals.csv"; }
};

RunPaths SeedPaths(const std::filesystem::path& out, uint64_t seed);

// Training stages in execution order.
inline const std::vector<std::string>& TrainStages() {
  static const std::vector<std::string> stages = {
      "dynamics_metric", "dynamics_gp", "baseline_gp", "constraint_data",
      "manifold"};
  return stages;
}

struct GenerateSummary {
  int offline_trajectories = 0;
  int online_samples = 0;
  int test_count = 0;
  double ood_margin_attained = 0.0;
};

GenerateSummary RunGenerate(const PipelineConfig& cfg, uint64_t seed,
                            const RunPaths& paths);

struct TrainedModels {
  DiagonalPseudometric dynamics_metric;
  SparsityMask dynamics_mask;
  IgpModel dynamics;  // sparsified
  IgpModel baseline;  // every input retained
  ConstraintDataset constraints;
  ManifoldModel manifold;
};

struct StageLine {
  std::string stage;
  bool resumed = false;
  nlohmann::json metrics;
};

// Runs the training stages in order. A stage whose checkpoint exists and
// matches the config, seed and data is loaded instead of retrained; a
// checkpoint that cannot be read raises StageError naming the file.
TrainedModels RunTrain(const PipelineConfig& cfg, uint64_t seed,
                       const RunPaths& paths,
                       std::vector<StageLine>* lines = nullptr);

// Loads every checkpoint without training; throws MissingArtifact when one
// is absent or stale.
TrainedModels LoadTrained(const PipelineConfig& cfg, uint64_t seed,
                          const RunPaths& paths);

// Evaluates the selected standard entrants (all when empty) and writes
// report.json and residuals.csv.
EvalReport RunEval(const PipelineConfig& cfg, uint64_t seed,
                   const RunPaths& paths,
                   const std::vector<std::string>& models);

struct SweepCell {
  double mask_threshold = 0.0;
  double sv_rel = 0.0;
  int lma_rows = 0;
  double noise_std = 0.0;
  bool ok = true;
  std::string error;
  std::vector<EvalReport> reports;  // one per seed
};

// Grid over the [sweep] lists (an empty list keeps the base value), each
// cell run generate -> train -> eval for every seed under
// out/sweep/cell_<i>. Failed cells are recorded and the sweep continues.
std::vector<SweepCell> RunSweep(const PipelineConfig& cfg,
                                const std::vector<uint64_t>& seeds,
                                const std::filesystem::path& out);
nlohmann::json SweepToJson(const std::vector<SweepCell>& cells);

// Collects seed_*/report.json below out and aggregates them.
std::vector<EvalReport> CollectReports(const std::filesystem::path& out);
std::string FormatSummary(const std::vector<EvalReport>& reports);

void WriteTextFile(const std::filesystem::path& path, const std::string& text);
std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace nhlearn

#endif  // NHLEARN_PIPELINE_H_
