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
#ifndef NHLEARN_MANIFOLD_H_
#define NHLEARN_MANIFOLD_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "nhlearn/gp.h"
#include "nhlearn/metric.h"
#include "nhlearn/systems.h"
#include "nhlearn/types.h"

namespace nhlearn {

// (state, control) -> state derivative
using DynamicsFn = std::function<Vector(const Vector&, const Vector&)>;

// Wraps a dynamics IGP trained on [state control] inputs.
DynamicsFn IgpDynamics(const IgpModel& dyn, int state_dim);

// Rows [f(x, u_k)^T 1] for K controls at one state.
struct LmaMatrix {
  Vector at_state;
  Matrix rows;           // K x (n+1)
  Matrix controls_used;  // K x m
};

LmaMatrix BuildLma(const DynamicsFn& dyn, const Vector& x,
                   const Matrix& controls);

// K controls uniform in bounds. When c_expected >= 0, K must be at least
// n - c_expected and a rank-deficient draw is resampled once before failing.
LmaMatrix BuildLma(const DynamicsFn& dyn, const Vector& x, int count,
                   const std::vector<Interval>& bounds, uint64_t seed,
                   int c_expected = -1);

struct NullSpace {
  Matrix v2;               // (n+1) x c, right-singular vectors below threshold
  Vector singular_values;  // length n+1, zero padded when K < n+1
  double threshold = 0.0;
  int count() const { return static_cast<int>(v2.cols()); }
};

// Right-singular directions with singular value < threshold. Throws
// NumericalFailure when the null space has dimension >= n.
NullSpace NullSpaceBasis(const Matrix& lma_rows, double threshold);

// rel * largest singular value
double RelativeSvThreshold(const Matrix& lma_rows, double rel);

// rref of the rows, each negated when its dot product with the matching
// reference row is negative. Throws NumericalFailure on rank loss.
Matrix StandardizeBasis(const Matrix& v2t,
                        const std::optional<Matrix>& ref = std::nullopt);

struct ConstraintBasis {
  Vector at_state;
  Matrix gamma;            // c x (n+1), sign adjusted
  Matrix raw;              // rref before sign adjustment
  Vector singular_values;
  double threshold = 0.0;
  double residual = 0.0;   // max |LMA * V2|
  int reference = -1;      // index of the sign reference in the dataset
};

struct ConstraintDatasetConfig {
  int lma_rows = 0;         // K; <= 0 -> 4 (n - c_expected), or 4n
  double sv_rel = 1e-2;     // threshold relative to the largest singular value
  int c_expected = -1;
  double agreement = 0.95;  // required share of the modal count
  uint64_t seed = 0;
};

struct ConstraintDataset {
  std::vector<ConstraintBasis> items;
  std::vector<int> source;     // input row of each item
  std::vector<int> discarded;  // input rows with a non-modal count
  std::vector<int> counts;     // detected count per input row (-1: failed)
  int constraint_count = 0;
  int state_dim = 0;

  Matrix States() const;
  // entries of row i of every gamma, items x (n+1)
  Matrix RowLabels(int i) const;
};

// States are processed in the given (trajectory) order. The sign reference of
// each state is the nearest earlier state that kept the modal count.
ConstraintDataset BuildConstraintDataset(const DynamicsFn& dyn,
                                         const Matrix& states,
                                         const std::vector<Interval>& bounds,
                                         int control_dim,
                                         const ConstraintDatasetConfig& cfg);

struct ManifoldTrainConfig {
  MetricTrainConfig metric;
  GpFitConfig gp;
  double mask_threshold = 1e-2;
};

struct ConstraintEval {
  Matrix G;  // c x n
  Vector g;  // c
};

// One pseudometric, mask and IGP (n+1 outputs) per constraint row.
class ManifoldModel {
 public:
  ManifoldModel() = default;
  ManifoldModel(int state_dim, std::vector<DiagonalPseudometric> metrics,
                std::vector<SparsityMask> masks, std::vector<IgpModel> rows);

  int constraint_count() const { return static_cast<int>(rows_.size()); }
  int state_dim() const { return state_dim_; }
  const IgpModel& row_model(int i) const { return rows_[i]; }
  const SparsityMask& row_mask(int i) const { return masks_[i]; }
  const DiagonalPseudometric& row_metric(int i) const { return metrics_[i]; }

  Matrix Gamma(const Vector& x) const;  // c x (n+1)

 private:
  int state_dim_ = 0;
  std::vector<DiagonalPseudometric> metrics_;
  std::vector<SparsityMask> masks_;
  std::vector<IgpModel> rows_;
};

// A dataset with constraint_count 0 yields an empty (vacuous) model.
ManifoldModel TrainManifold(const ConstraintDataset& data,
                            const ManifoldTrainConfig& cfg);

ConstraintEval EvalConstraint(const ManifoldModel& mm, const Vector& x);

nlohmann::json ConstraintDatasetToJson(const ConstraintDataset& data);
ConstraintDataset ConstraintDatasetFromJson(const nlohmann::json& j);

nlohmann::json ManifoldToJson(const ManifoldModel& mm,
                              const ConstraintDataset& data);
ManifoldModel ManifoldFromJson(const nlohmann::json& j,
                               const ConstraintDataset& data);

}  // namespace nhlearn

#endif  // NHLEARN_MANIFOLD_H_
