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
#ifndef NHLEARN_EVAL_H_
#define NHLEARN_EVAL_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nhlearn/datasets.h"
#include "nhlearn/gp.h"
#include "nhlearn/manifold.h"
#include "nhlearn/systems.h"
#include "nhlearn/types.h"

namespace nhlearn {

using PredictFn = std::function<Vector(const Vector&, const Vector&)>;

struct NamedModel {
  std::string name;
  PredictFn predict;
};

struct ModelReport {
  std::string name;
  Vector rmse_per_dim;
  double rmse_total = 0.0;
  // |Gamma_true(x) [pred; 1]|_max, averaged / maximized over test points
  double constraint_violation_mean = 0.0;
  double constraint_violation_max = 0.0;
  Matrix residuals;  // prediction - true derivative, one row per test point
};

struct DistanceStats {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

// Learned vs analytic (rref-standardized) constraint at a set of states.
struct ConstraintRecovery {
  int detected_count = 0;
  int true_count = 0;
  // max-norm of Gamma_hat - Gamma_true; NaN when the counts differ
  double error_max = 0.0;
  double error_mean = 0.0;
};

ConstraintRecovery MeasureConstraintRecovery(const ManifoldModel& mm,
                                             const SystemModel& sys,
                                             const Matrix& states);

struct EvalReport {
  std::string system;
  uint64_t seed = 0;
  std::string config_hash;
  int test_count = 0;
  DistanceStats ood_distance;  // test state to nearest training state
  std::vector<ModelReport> models;
  ConstraintRecovery constraint;  // over the test states

  const ModelReport* Find(const std::string& name) const;
};

// Entrant names, in report order.
inline const std::vector<std::string>& StandardModelNames() {
  static const std::vector<std::string> names = {
      "full_gp", "sparse_gp", "projected", "oracle_projected"};
  return names;
}

// full_gp: dynamics GP on every input; sparse_gp: on the retained inputs;
// projected: sparse_gp projected onto the learned constraint; oracle_projected:
// sparse_gp projected onto the analytic constraint. Only names listed in
// select are returned (all when empty).
std::vector<NamedModel> StandardEntrants(const IgpModel& full,
                                         const IgpModel& sparse,
                                         const ManifoldModel& manifold,
                                         const SystemModel& sys,
                                         const std::vector<std::string>& select = {});

// RMSE against the exact test derivatives plus constraint violation under
// the analytic constraint.
EvalReport Evaluate(const std::vector<NamedModel>& models,
                    const DatasetBundle& bundle, const SystemModel& sys);

double RmseFromResiduals(const Matrix& residuals);

nlohmann::json ReportToJson(const EvalReport& report);
EvalReport ReportFromJson(const nlohmann::json& j);
// test_index,model,dim_0..dim_{n-1}
std::string ResidualsCsv(const EvalReport& report);

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

Quartiles ComputeQuartiles(std::vector<double> values);

// Per model: median and IQR of rmse_total and constraint violation across
// reports, plus the per-seed values.
nlohmann::json AggregateReports(const std::vector<EvalReport>& reports);

}  // namespace nhlearn

#endif  // NHLEARN_EVAL_H_
