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
#ifndef NHLEARN_DATASETS_H_
#define NHLEARN_DATASETS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nhlearn/systems.h"
#include "nhlearn/trajectory.h"
#include "nhlearn/types.h"

namespace nhlearn {

// Axis-aligned box over state coordinates; unbounded sides are allowed.
struct Box {
  std::vector<Interval> dims;

  int dim() const { return static_cast<int>(dims.size()); }
  bool Contains(const Vector& x) const;
};

// Euclidean distance between two boxes (0 when they overlap).
double BoxDistance(const Box& a, const Box& b);

// Supervised (state, control, derivative) rows.
struct Triples {
  Matrix states;
  Matrix controls;
  Matrix derivs;

  int size() const { return static_cast<int>(states.rows()); }
  // concatenated [state control] rows
  Matrix Inputs() const;
};

struct BundleMeta {
  uint64_t seed = 0;
  std::string system;
  double noise_std = 0.0;
};

struct DatasetBundle {
  std::vector<Trajectory> offline;
  Trajectory online;
  Triples test;
  BundleMeta meta;

  int state_dim() const { return static_cast<int>(offline.front().states.cols()); }
  int control_dim() const {
    return static_cast<int>(offline.front().controls.cols());
  }
  double dt() const { return offline.front().dt; }
};

struct GenerationConfig {
  int trajectories = 20;  // N
  int horizon = 50;       // T samples per trajectory
  double dt = 0.05;
  int hold_steps = 10;    // piecewise-constant control hold
  Box start_region;       // initial states are uniform in this box
  Box envelope;           // every training state must stay inside
  Box test_region;        // OOD test states are uniform in this box
  int test_count = 500;
  double ood_margin = 3.0;
  double noise_std = 0.0;  // additive Gaussian noise on recorded derivatives
  int max_attempts = 20000;
};

// Throws ConfigError when the regions are malformed or the envelope and the
// test region are closer than ood_margin.
void ValidateGenerationConfig(const SystemModel& sys,
                              const GenerationConfig& cfg);

// Offline trajectories, one online trajectory (independent control stream)
// and OOD test triples. Deterministic given seed.
DatasetBundle GenerateBundle(const SystemModel& sys,
                             const GenerationConfig& cfg, uint64_t seed);

enum Partition : unsigned {
  kOffline = 1u,
  kOnline = 2u,
  kTest = 4u,
};

// Trajectory-major, time-minor concatenation of the selected partitions,
// in the order offline, online, test.
Triples Flatten(const DatasetBundle& bundle, unsigned which);

// Smallest Euclidean distance from each query state to any reference state.
Vector NearestDistances(const Matrix& queries, const Matrix& references);

// Files: bundle.manifest.json plus offline/online/test .traj.jsonl.
void SaveBundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle LoadBundle(const std::filesystem::path& dir);
std::string BundleFingerprint(const DatasetBundle& bundle);

struct SamplePair {
  int anchor = 0;
  int positive = 0;
  std::vector<int> negatives;
};

struct PairSelection {
  std::vector<SamplePair> pairs;
  std::vector<int> skipped;  // anchors without an eps-separated candidate
};

// For each anchor the positive is the label-space nearest neighbour among all
// items at input distance >= eps (ties -> lowest index). Items are split into
// consecutive batches of the given size; negatives are the anchor's batch
// members other than itself and its positive.
PairSelection SelectPairs(const Matrix& inputs, const Matrix& labels,
                          double eps, int batch);

// Median over all item pairs of the Euclidean input distance (strided
// subsample above 2000 items).
double MedianPairwiseDistance(const Matrix& inputs);

}  // namespace nhlearn

#endif  // NHLEARN_DATASETS_H_
