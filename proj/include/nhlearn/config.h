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
#ifndef NHLEARN_CONFIG_H_
#define NHLEARN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nhlearn/datasets.h"
#include "nhlearn/gp.h"
#include "nhlearn/manifold.h"
#include "nhlearn/metric.h"
#include "nhlearn/systems.h"

namespace nhlearn {

struct SweepConfig {
  std::vector<double> mask_thresholds;
  std::vector<double> sv_rel;
  std::vector<int> lma_rows;
  std::vector<double> noise_std;
};

struct PipelineConfig {
  std::string system = "unicycle";
  std::vector<Interval> control_bounds;  // empty -> system defaults
  PlanarQuadrotorParams quadrotor;

  GenerationConfig data;
  uint64_t seed = 1;

  MetricTrainConfig metric;           // dynamics pseudometric (eps = eps_1)
  double mask_threshold = 1e-2;
  MetricTrainConfig constraint_metric;  // per-row pseudometrics (eps = eps_2)
  double constraint_mask_threshold = 1e-2;

  GpFitConfig gp;             // dynamics GPs
  GpFitConfig constraint_gp;  // constraint-entry GPs

  ConstraintDatasetConfig manifold;

  int eval_seeds = 1;
  std::vector<std::string> models;  // empty -> all standard entrants

  SweepConfig sweep;
  std::filesystem::path output_dir = "runs";
};

// Defaults, including the training / test regions, for "unicycle" or
// "quadrotor". Throws ConfigError for other names.
PipelineConfig DefaultConfig(const std::string& system);

// INI text with sections [system] [data] [metric] [gp] [manifold] [eval]
// [sweep] [output]. Keys absent from the text keep the system defaults;
// unknown sections or keys are rejected with ConfigError.
PipelineConfig ParseConfig(const std::string& ini_text);
PipelineConfig LoadConfig(const std::filesystem::path& path);

// Complete INI rendering; ParseConfig(WriteConfig(c)) reproduces c.
std::string WriteConfig(const PipelineConfig& cfg);

// Hash of every setting that affects results (the output directory and the
// seed are excluded).
std::string ConfigHash(const PipelineConfig& cfg);

// Cross-field validation; throws ConfigError.
void ValidateConfig(const PipelineConfig& cfg);

std::unique_ptr<SystemModel> BuildSystem(const PipelineConfig& cfg);

// "lo:hi,lo:hi,..." with inf / -inf allowed
std::vector<Interval> ParseIntervals(const std::string& text);
std::string FormatIntervals(const std::vector<Interval>& intervals);

}  // namespace nhlearn

#endif  // NHLEARN_CONFIG_H_
