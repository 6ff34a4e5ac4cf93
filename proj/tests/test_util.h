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
#ifndef NHLEARN_TESTS_TEST_UTIL_H_
#define NHLEARN_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <string>

#include "nhlearn/config.h"
#include "nhlearn/datasets.h"
#include "nhlearn/pipeline.h"
#include "nhlearn/types.h"

namespace nhlearn::testing {

// Fresh directory below the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Default config with cheaper GP fits; data and metric settings unchanged.
PipelineConfig FastConfig(const std::string& system);

// Cheap config for plumbing tests (short trajectories, small GPs).
PipelineConfig TinyConfig(const std::string& system);

struct TrainedRun {
  PipelineConfig cfg;
  uint64_t seed = 1;
  DatasetBundle bundle;
  TrainedModels models;
};

// Noiseless unicycle run with FastConfig, trained once per process.
const TrainedRun& UnicycleRun();

// Relative error |a - b| / max(|a|, |b|, floor) elementwise max.
double RelativeError(const Vector& a, const Vector& b, double floor = 1e-8);

}  // namespace nhlearn::testing

#endif  // NHLEARN_TESTS_TEST_UTIL_H_
