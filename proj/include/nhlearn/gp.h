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
#ifndef NHLEARN_GP_H_
#define NHLEARN_GP_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"
#include "nhlearn/linalg.h"
#include "nhlearn/types.h"

namespace nhlearn {

// ARD squared-exponential kernel
//   k(a, b) = sf2 * exp(-0.5 * sum_i (a_i - b_i)^2 / l_i^2)
// plus i.i.d. label noise sn2. Stored as logs; the packed parameter vector is
// [log sf2, log l_1 .. log l_d, log sn2].
struct KernelHyperparams {
  double log_signal_variance = 0.0;
  Vector log_lengthscales;
  double log_noise_variance = -4.605170185988091;  // log(1e-2)

  static KernelHyperparams FromValues(double signal_variance,
                                      const Vector& lengthscales,
                                      double noise_variance);

  int dim() const { return static_cast<int>(log_lengthscales.size()); }
  double signal_variance() const;
  Vector lengthscales() const;
  double noise_variance() const;

  Vector Pack() const;
  static KernelHyperparams Unpack(const Vector& packed);
};

double KernelEval(const KernelHyperparams& hyper, const Vector& a,
                  const Vector& b);

// Gram block k(A_i, B_j), no noise term
Matrix CrossKernel(const KernelHyperparams& hyper, const Matrix& a,
                   const Matrix& b);

struct LmlValue {
  double value = 0.0;
  Vector gradient;  // d value / d packed log-parameters (empty if not asked)
  double jitter = 0.0;
};

// Log marginal likelihood of zero-mean GP data with analytic gradient in
// log-space. Factorizes K + (sn2 + jitter) I, escalating the jitter by
// decades from base_jitter up to 1e-4; throws NumericalFailure beyond that.
LmlValue LogMarginalLikelihood(const KernelHyperparams& hyper, const Matrix& x,
                               const Vector& y, bool with_gradient,
                               double base_jitter = 1e-8);

// Posterior-mean GP on one scalar output. Inputs and labels may be
// standardized internally; queries and predictions use caller coordinates.
class ScalarGp {
 public:
  ScalarGp() = default;

  // Conditions on (inputs, labels) in their given coordinates with fixed
  // hyperparameters.
  static ScalarGp Condition(const KernelHyperparams& hyper,
                            const Matrix& inputs, const Vector& labels,
                            double base_jitter = 1e-8);

  // Same, but inputs are z-scored with input_stats and labels are mapped
  // through (y - label_mean) / label_scale before conditioning.
  static ScalarGp Condition(const KernelHyperparams& hyper,
                            const Matrix& inputs, const Vector& labels,
                            const Standardizer& input_stats,
                            double label_mean, double label_scale,
                            double base_jitter = 1e-8);

  // Degenerate model for constant labels.
  static ScalarGp Constant(double value, int input_dim);

  double PredictMean(const Vector& query) const;

  bool is_constant() const { return constant_; }
  int input_dim() const { return input_dim_; }
  const KernelHyperparams& hyper() const { return hyper_; }
  const Standardizer& input_stats() const { return input_stats_; }
  double label_mean() const { return label_mean_; }
  double label_scale() const { return label_scale_; }
  // lower-triangular factor of K + (sn2 + jitter) I
  const Matrix& chol_factor() const { return chol_; }
  const Vector& alpha() const { return alpha_; }
  double jitter() const { return jitter_; }
  double log_marginal_likelihood() const { return lml_; }
  // training inputs in internal (standardized) coordinates
  const Matrix& train_inputs() const { return inputs_; }

 private:
  KernelHyperparams hyper_;
  Standardizer input_stats_;
  double label_mean_ = 0.0;
  double label_scale_ = 1.0;
  Matrix inputs_;
  Matrix chol_;
  Vector alpha_;
  double jitter_ = 0.0;
  double lml_ = 0.0;
  int input_dim_ = 0;
  bool constant_ = false;
};

struct GpFitConfig {
  int iterations = 200;
  int restarts = 3;
  double rel_tol = 1e-7;
  double jitter = 1e-8;
  double min_noise_variance = 1e-6;  // in standardized label units
  int max_points = 0;                // 0 = use every row
  bool standardize = true;
  uint64_t seed = 0;
};

struct GpFitTrace {
  double initial_lml = 0.0;  // first restart, at its initialization
  double final_lml = 0.0;
  // LML after each accepted step of the winning restart, starting with its
  // initialization
  std::vector<double> accepted_lml;
  int restart_used = 0;
};

// Maximizes the log marginal likelihood by gradient ascent in log-space with
// a backtracking line search, from several seeded initializations.
ScalarGp FitScalarGp(const Matrix& inputs, const Vector& labels,
                     const GpFitConfig& cfg, GpFitTrace* trace = nullptr);

// Independent GPs, one per output dimension, over the retained input
// coordinates.
class IgpModel {
 public:
  IgpModel() = default;
  IgpModel(Mask mask, std::vector<ScalarGp> gps, std::vector<int> train_rows);

  // full_input has mask().size() coordinates; dropped ones are ignored
  Vector Predict(const Vector& full_input) const;
  Vector Reduce(const Vector& full_input) const;

  const Mask& mask() const { return mask_; }
  int input_dim() const { return static_cast<int>(mask_.size()); }
  int output_dim() const { return static_cast<int>(gps_.size()); }
  const ScalarGp& gp(int i) const { return gps_[i]; }
  // rows of the training matrices the GPs were conditioned on
  const std::vector<int>& train_rows() const { return train_rows_; }

 private:
  Mask mask_;
  std::vector<int> kept_;
  std::vector<ScalarGp> gps_;
  std::vector<int> train_rows_;
};

Matrix ApplyMask(const Matrix& inputs, const Mask& mask);

// At most max_points rows (sorted) chosen by greedy farthest-point
// sampling on the z-scored points from a seeded start; every row when
// max_points <= 0 or the set is small enough.
std::vector<int> CoverageSubset(const Matrix& points, int max_points,
                                uint64_t seed);

// Fits one ScalarGp per label column on the masked inputs. Errors from a
// column are rethrown with the column index.
IgpModel FitIgp(const Matrix& inputs, const Matrix& labels, const Mask& mask,
                const GpFitConfig& cfg);

// Checkpoint: hyperparameters, standardization, mask, subset rows and a
// fingerprint of the training matrices. Factorizations are rebuilt on load.
nlohmann::json IgpToJson(const IgpModel& model, const Matrix& inputs,
                         const Matrix& labels);
IgpModel IgpFromJson(const nlohmann::json& j, const Matrix& inputs,
                     const Matrix& labels);

std::string TrainingFingerprint(const Matrix& inputs, const Matrix& labels);

}  // namespace nhlearn

#endif  // NHLEARN_GP_H_
