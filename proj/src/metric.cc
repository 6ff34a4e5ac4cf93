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
#include "nhlearn/metric.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "nhlearn/error.h"
#include "nhlearn/log.h"
#include "nhlearn/rng.h"

namespace nhlearn {

using json = nlohmann::json;

DiagonalPseudometric::DiagonalPseudometric(Vector weights, Standardizer stats,
                                           std::vector<std::string> layout)
    : weights_(std::move(weights)), stats_(std::move(stats)),
      layout_(std::move(layout)) {
  if (stats_.dim() != weights_.size()) {
    throw ContractViolation("DiagonalPseudometric: standardizer dimension mismatch");
  }
}

DiagonalPseudometric DiagonalPseudometric::FromDiag(const Vector& diag) {
  if ((diag.array() < 0).any()) {
    throw ContractViolation("DiagonalPseudometric: diagonal must be >= 0");
  }
  return DiagonalPseudometric(diag.array().sqrt().matrix(),
                              Standardizer::Identity(diag.size()));
}

double DiagonalPseudometric::Distance(const Vector& z1, const Vector& z2) const {
  if (z1.size() != dim() || z2.size() != dim()) {
    throw ContractViolation("Distance: dimension mismatch");
  }
  return ((z1 - z2).array() * weights_.array()).square().sum();
}

double DiagonalPseudometric::DistanceSqrt(const Vector& z1,
                                          const Vector& z2) const {
  return std::sqrt(Distance(z1, z2));
}

SimilarityValue DiagonalPseudometric::Similarity(const Vector& z,
                                                 const Vector& zp) const {
  if (z.size() != dim() || zp.size() != dim()) {
    throw ContractViolation("Similarity: dimension mismatch");
  }
  return nhlearn::Similarity(diag(), z, zp);
}

namespace {

constexpr double kTinyNorm = 1e-300;

struct SimGrad {
  double value = 0.0;
  bool degenerate = false;
};

// sim and (optionally) accumulate scale * d sim / d diag into grad
SimGrad SimilarityAccumulate(const Vector& diag, const Eigen::Ref<const Vector>& z,
                             const Eigen::Ref<const Vector>& zp, double scale,
                             Vector* grad) {
  double a = (diag.array() * z.array() * zp.array()).sum();
  double b = (diag.array() * z.array().square()).sum();
  double c = (diag.array() * zp.array().square()).sum();
  if (!(b > kTinyNorm) || !(c > kTinyNorm)) return {0.0, true};
  double inv = 1.0 / std::sqrt(b * c);
  double sim = a * inv;
  if (grad && scale != 0.0) {
    grad->array() += scale * (z.array() * zp.array() * inv -
                              0.5 * sim *
                                  (z.array().square() / b + zp.array().square() / c));
  }
  return {sim, false};
}

}  // namespace

SimilarityValue Similarity(const Vector& diag, const Vector& z,
                           const Vector& zp) {
  SimGrad s = SimilarityAccumulate(diag, z, zp, 0.0, nullptr);
  return {std::clamp(s.value, -1.0, 1.0), s.degenerate};
}

double InfoNceLoss(const Vector& diag, const Matrix& z,
                   std::span<const SamplePair> pairs, InfoNceVariant variant,
                   Vector* grad_diag) {
  if (pairs.empty()) throw ContractViolation("InfoNceLoss: no pairs");
  if (grad_diag) *grad_diag = Vector::Zero(diag.size());
  const double inv_count = 1.0 / pairs.size();
  double total = 0.0;
  std::vector<double> sims;
  for (const SamplePair& pair : pairs) {
    if (pair.negatives.empty()) {
      throw ContractViolation("InfoNceLoss: pair without negatives");
    }
    const auto anchor = z.row(pair.anchor).transpose();
    double s_pos =
        SimilarityAccumulate(diag, anchor, z.row(pair.positive).transpose(), 0.0,
                             nullptr).value;
    sims.clear();
    for (int k : pair.negatives) {
      sims.push_back(SimilarityAccumulate(diag, anchor, z.row(k).transpose(),
                                          0.0, nullptr).value);
    }
    if (variant == InfoNceVariant::kWithPositive) sims.push_back(s_pos);
    double top = *std::max_element(sims.begin(), sims.end());
    double denom = 0.0;
    for (double s : sims) denom += std::exp(s - top);
    total += -s_pos + top + std::log(denom);

    if (grad_diag) {
      // d/dP [-s_p + logsumexp] = -ds_p + sum_k softmax_k ds_k
      double pos_weight = -1.0;
      if (variant == InfoNceVariant::kWithPositive) {
        pos_weight += std::exp(sims.back() - top) / denom;
      }
      SimilarityAccumulate(diag, anchor, z.row(pair.positive).transpose(),
                           pos_weight * inv_count, grad_diag);
      for (size_t k = 0; k < pair.negatives.size(); ++k) {
        double w = std::exp(sims[k] - top) / denom;
        SimilarityAccumulate(diag, anchor, z.row(pair.negatives[k]).transpose(),
                             w * inv_count, grad_diag);
      }
    }
  }
  return total * inv_count;
}

MetricTrainResult TrainPseudometric(const Matrix& inputs, const Matrix& labels,
                                    const MetricTrainConfig& cfg) {
  const int count = inputs.rows();
  const int d = inputs.cols();
  if (labels.rows() != count) {
    throw ContractViolation("TrainPseudometric: inputs and labels differ in length");
  }
  if (cfg.batch_size < 2) {
    throw ContractViolation("TrainPseudometric: batch_size must be >= 2");
  }
  if (count < cfg.batch_size + 1) {
    throw ContractViolation("TrainPseudometric: need at least batch_size + 1 items");
  }
  if (cfg.steps < 0 || !(cfg.learn_rate > 0)) {
    throw ContractViolation("TrainPseudometric: bad steps / learn_rate");
  }

  Standardizer stats = Standardizer::Fit(inputs);
  Matrix z = stats.Apply(inputs);
  Matrix y = Standardizer::Fit(labels).Apply(labels);

  MetricTrainResult result;
  result.eps_used = cfg.eps >= 0.0 ? cfg.eps
                                  : cfg.eps_fraction * MedianPairwiseDistance(z);

  // positives do not depend on batching; batch = 1 leaves negatives empty
  PairSelection positives = SelectPairs(z, y, result.eps_used, 1);
  result.skipped = static_cast<int>(positives.skipped.size());
  if (positives.pairs.empty()) {
    throw ConfigError("TrainPseudometric: every anchor was skipped (eps=" +
                      std::to_string(result.eps_used) + " too large)");
  }
  std::vector<int> positive_of(count, -1);
  for (const auto& p : positives.pairs) positive_of[p.anchor] = p.positive;

  auto make_batch_pairs = [&](std::span<const int> members) {
    std::vector<SamplePair> pairs;
    for (int anchor : members) {
      int pos = positive_of[anchor];
      if (pos < 0) continue;
      SamplePair pair{anchor, pos, {}};
      for (int k : members) {
        if (k != anchor && k != pos) pair.negatives.push_back(k);
      }
      if (!pair.negatives.empty()) pairs.push_back(std::move(pair));
    }
    return pairs;
  };

  // fixed evaluation pairs: batches in item order
  std::vector<SamplePair> eval_pairs;
  {
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    for (int start = 0; start < count; start += cfg.batch_size) {
      int stop = std::min(count, start + cfg.batch_size);
      auto batch = make_batch_pairs(std::span<const int>(order).subspan(start, stop - start));
      eval_pairs.insert(eval_pairs.end(), batch.begin(), batch.end());
    }
  }

  Vector w = Vector::Ones(d);
  auto diag_of = [](const Vector& v) { return v.array().square().matrix(); };
  const double initial = InfoNceLoss(diag_of(w), z, eval_pairs, cfg.variant);
  result.loss_trace.push_back(initial);

  Rng rng(cfg.seed);
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  int cursor = count;  // forces a shuffle on the first step
  Vector grad;
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + cfg.batch_size > count) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      cursor = 0;
    }
    auto pairs = make_batch_pairs(
        std::span<const int>(order).subspan(cursor, cfg.batch_size));
    cursor += cfg.batch_size;
    if (pairs.empty()) continue;
    InfoNceLoss(diag_of(w), z, pairs, cfg.variant, &grad);
    const double lr = cfg.learn_rate * 0.5 *
                      (1.0 + std::cos(std::numbers::pi * step / cfg.steps));
    // chain rule through P_ii = w_i^2
    w -= lr * (2.0 * w.array() * grad.array()).matrix();
    if ((step + 1) % 100 == 0) {
      result.loss_trace.push_back(InfoNceLoss(diag_of(w), z, eval_pairs, cfg.variant));
    }
  }
  if (!w.allFinite()) throw NumericalFailure("TrainPseudometric: diverged");

  result.metric = DiagonalPseudometric(w, stats, cfg.layout);
  result.metric.initial_loss = initial;
  result.metric.final_loss = InfoNceLoss(diag_of(w), z, eval_pairs, cfg.variant);
  return result;
}

SparsityMask ExtractMask(const DiagonalPseudometric& pm, double rel_threshold) {
  if (!(rel_threshold > 0.0 && rel_threshold < 1.0)) {
    throw ContractViolation("ExtractMask: rel_threshold must be in (0, 1)");
  }
  SparsityMask mask;
  mask.diag_snapshot = pm.diag();
  Eigen::Index top;
  double max_entry = mask.diag_snapshot.maxCoeff(&top);
  mask.threshold_used = rel_threshold * max_entry;
  mask.retained.resize(pm.dim());
  for (int i = 0; i < pm.dim(); ++i) {
    mask.retained[i] = mask.diag_snapshot[i] > mask.threshold_used;
  }
  mask.retained[top] = true;
  return mask;
}

json PseudometricToJson(const DiagonalPseudometric& pm, double threshold) {
  auto vec = [](const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return {{"version", "1"},
          {"diag", vec(pm.diag())},
          {"weights", vec(pm.weights())},
          {"layout", pm.layout()},
          {"threshold", threshold},
          {"initial_loss", pm.initial_loss},
          {"final_loss", pm.final_loss},
          {"input_mean", vec(pm.input_stats().mean)},
          {"input_scale", vec(pm.input_stats().scale)}};
}

DiagonalPseudometric PseudometricFromJson(const json& j) {
  auto vec = [](const json& a) {
    auto v = a.get<std::vector<double>>();
    return Vector(Eigen::Map<Vector>(v.data(), v.size()));
  };
  try {
    if (j.at("version").get<std::string>() != "1") {
      throw FormatError("pseudometric checkpoint: unsupported version");
    }
    DiagonalPseudometric pm(
        vec(j.at("weights")),
        Standardizer{vec(j.at("input_mean")), vec(j.at("input_scale"))},
        j.at("layout").get<std::vector<std::string>>());
    pm.initial_loss = j.at("initial_loss").get<double>();
    pm.final_loss = j.at("final_loss").get<double>();
    return pm;
  } catch (const json::exception& e) {
    throw FormatError(std::string("pseudometric checkpoint: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("pseudometric checkpoint: ") + e.what());
  }
}

}  // namespace nhlearn
