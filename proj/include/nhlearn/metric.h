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
#ifndef NHLEARN_METRIC_H_
#define NHLEARN_METRIC_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nhlearn/datasets.h"
#include "nhlearn/linalg.h"
#include "nhlearn/types.h"

namespace nhlearn {

struct SimilarityValue {
  double value = 0.0;
  bool degenerate = false;  // an operand had zero P-norm; value is 0
};

// d(z1, z2) = (z1 - z2)^T P (z1 - z2) with P = diag(w_i^2).
// Works in embedded (standardized) coordinates; Embed() maps raw inputs.
class DiagonalPseudometric {
 public:
  DiagonalPseudometric() = default;
  DiagonalPseudometric(Vector weights, Standardizer stats,
                       std::vector<std::string> layout = {});
  static DiagonalPseudometric FromDiag(const Vector& diag);

  int dim() const { return static_cast<int>(weights_.size()); }
  Vector diag() const { return weights_.array().square().matrix(); }
  const Vector& weights() const { return weights_; }
  const Standardizer& input_stats() const { return stats_; }
  const std::vector<std::string>& layout() const { return layout_; }

  double Distance(const Vector& z1, const Vector& z2) const;
  // sqrt of Distance; satisfies the triangle inequality
  double DistanceSqrt(const Vector& z1, const Vector& z2) const;
  // generalized cosine z^T P z' / (|z|_P |z'|_P)
  SimilarityValue Similarity(const Vector& z, const Vector& zp) const;

  Vector Embed(const Vector& raw) const { return stats_.Apply(raw); }
  Matrix Embed(const Matrix& raw) const { return stats_.Apply(raw); }

  double final_loss = 0.0;
  double initial_loss = 0.0;

 private:
  Vector weights_;
  Standardizer stats_;
  std::vector<std::string> layout_;
};

SimilarityValue Similarity(const Vector& diag, const Vector& z,
                           const Vector& zp);

enum class InfoNceVariant {
  kNegativesOnly,  // denominator sums negatives only
  kWithPositive,   // positive added to the denominator
};

// Mean over pairs of -log(exp(sim(z, z^p)) / sum_k exp(sim(z, z^n_k))),
// with z the rows of the embedded inputs. If grad_diag is non-null it
// receives d loss / d diag(P).
double InfoNceLoss(const Vector& diag, const Matrix& z,
                   std::span<const SamplePair> pairs, InfoNceVariant variant,
                   Vector* grad_diag = nullptr);

struct MetricTrainConfig {
  double eps = -1.0;  // input separation; < 0 -> eps_fraction * median
  double eps_fraction = 0.2;
  int batch_size = 64;
  int steps = 2000;
  double learn_rate = 0.5;
  uint64_t seed = 0;
  InfoNceVariant variant = InfoNceVariant::kNegativesOnly;
  std::vector<std::string> layout;
};

struct MetricTrainResult {
  DiagonalPseudometric metric;
  double eps_used = 0.0;
  int skipped = 0;  // anchors without an eps-separated positive
  std::vector<double> loss_trace;  // full-data loss every 100 steps
};

// Contrastive training of a diagonal pseudometric. Positives are label-space
// nearest neighbours at input separation >= eps; inputs are standardized and
// nearness is measured on z-scored labels. Gradient descent on the square-root
// parameters with a cosine-decayed step. Deterministic given cfg.seed.
MetricTrainResult TrainPseudometric(const Matrix& inputs, const Matrix& labels,
                                    const MetricTrainConfig& cfg);

struct SparsityMask {
  Mask retained;
  double threshold_used = 0.0;  // absolute threshold on the diagonal
  Vector diag_snapshot;
};

// retained[i] <=> diag_i > rel_threshold * max_j diag_j; the argmax is always
// retained.
SparsityMask ExtractMask(const DiagonalPseudometric& pm, double rel_threshold);

nlohmann::json PseudometricToJson(const DiagonalPseudometric& pm,
                                  double threshold);
DiagonalPseudometric PseudometricFromJson(const nlohmann::json& j);

}  // namespace nhlearn

#endif  // NHLEARN_METRIC_H_
