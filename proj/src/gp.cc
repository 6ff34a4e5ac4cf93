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
#include "nhlearn/gp.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nhlearn/error.h"
#include "nhlearn/log.h"
#include "nhlearn/rng.h"

namespace nhlearn {

using json = nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kMaxJitter = 1e-4;

// box on the packed log-parameters
constexpr double kLogSignalMin = -9.210340371976182;   // 1e-4
constexpr double kLogSignalMax = 9.210340371976182;    // 1e4
constexpr double kLogLengthMin = -4.605170185988091;   // 1e-2
constexpr double kLogLengthMax = 6.907755278982137;    // 1e3
constexpr double kLogNoiseMax = 2.302585092994046;     // 10

struct Factorization {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

// K + (sn2 + jitter) I with jitter escalation
Factorization Factorize(const Matrix& gram, double noise, double base_jitter) {
  Factorization f;
  const int n = gram.rows();
  double jitter = std::max(base_jitter, 0.0);
  for (;;) {
    Matrix c = gram;
    c.diagonal().array() += noise + jitter;
    f.llt.compute(c);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = jitter;
      return f;
    }
    if (jitter >= kMaxJitter) break;
    jitter = jitter > 0.0 ? jitter * 10.0 : 1e-8;
  }
  throw NumericalFailure("GP: Cholesky failed with jitter up to 1e-4 (n=" +
                         std::to_string(n) + ")");
}

}  // namespace

KernelHyperparams KernelHyperparams::FromValues(double signal_variance,
                                                const Vector& lengthscales,
                                                double noise_variance) {
  if (!(signal_variance > 0) || !(noise_variance > 0) ||
      (lengthscales.array() <= 0).any()) {
    throw ContractViolation("KernelHyperparams: values must be positive");
  }
  KernelHyperparams h;
  h.log_signal_variance = std::log(signal_variance);
  h.log_lengthscales = lengthscales.array().log().matrix();
  h.log_noise_variance = std::log(noise_variance);
  return h;
}

double KernelHyperparams::signal_variance() const {
  return std::exp(log_signal_variance);
}
Vector KernelHyperparams::lengthscales() const {
  return log_lengthscales.array().exp().matrix();
}
double KernelHyperparams::noise_variance() const {
  return std::exp(log_noise_variance);
}

Vector KernelHyperparams::Pack() const {
  Vector p(dim() + 2);
  p[0] = log_signal_variance;
  p.segment(1, dim()) = log_lengthscales;
  p[dim() + 1] = log_noise_variance;
  return p;
}

KernelHyperparams KernelHyperparams::Unpack(const Vector& packed) {
  KernelHyperparams h;
  const int d = static_cast<int>(packed.size()) - 2;
  h.log_signal_variance = packed[0];
  h.log_lengthscales = packed.segment(1, d);
  h.log_noise_variance = packed[d + 1];
  return h;
}

double KernelEval(const KernelHyperparams& hyper, const Vector& a,
                  const Vector& b) {
  if (a.size() != hyper.dim() || b.size() != hyper.dim()) {
    throw ContractViolation("KernelEval: dimension mismatch");
  }
  const Vector inv_l = (-hyper.log_lengthscales).array().exp().matrix();
  double sq = ((a - b).array() * inv_l.array()).square().sum();
  return hyper.signal_variance() * std::exp(-0.5 * sq);
}

Matrix CrossKernel(const KernelHyperparams& hyper, const Matrix& a,
                   const Matrix& b) {
  const Eigen::ArrayXd inv_l = (-hyper.log_lengthscales).array().exp();
  Matrix as = a.array().rowwise() * inv_l.transpose();
  Matrix bs = b.array().rowwise() * inv_l.transpose();
  Vector an = as.rowwise().squaredNorm();
  Vector bn = bs.rowwise().squaredNorm();
  Matrix sq = (-2.0 * as * bs.transpose()).colwise() + an;
  sq.rowwise() += bn.transpose();
  return hyper.signal_variance() *
         (-0.5 * sq.array().max(0.0)).exp().matrix();
}

LmlValue LogMarginalLikelihood(const KernelHyperparams& hyper, const Matrix& x,
                               const Vector& y, bool with_gradient,
                               double base_jitter) {
  const int n = x.rows();
  const int d = hyper.dim();
  if (x.cols() != d || y.size() != n) {
    throw ContractViolation("LogMarginalLikelihood: dimension mismatch");
  }
  Matrix gram = CrossKernel(hyper, x, x);
  // exact diagonal; the expanded-norm form can lose a few ulps
  gram.diagonal().setConstant(hyper.signal_variance());
  const double noise = hyper.noise_variance();
  Factorization f = Factorize(gram, noise, base_jitter);
  Vector alpha = f.llt.solve(y);
  const Matrix& l = f.llt.matrixLLT();
  double log_det_half = l.diagonal().array().log().sum();

  LmlValue out;
  out.jitter = f.jitter;
  out.value = -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * kLog2Pi;
  if (!with_gradient) return out;

  // W = alpha alpha^T - C^{-1};  dL/dp = 0.5 tr(W dC/dp)
  Matrix w = f.llt.solve(Matrix::Identity(n, n));
  w = alpha * alpha.transpose() - w;
  Matrix wk = w.cwiseProduct(gram);
  out.gradient.resize(d + 2);
  out.gradient[0] = 0.5 * wk.sum();
  Vector row_sums = wk.rowwise().sum();
  for (int k = 0; k < d; ++k) {
    const double inv_l2 = std::exp(-2.0 * hyper.log_lengthscales[k]);
    Vector xk = x.col(k);
    // sum_ij wk_ij (x_ik - x_jk)^2 = 2 sum_i x_ik^2 r_i - 2 x_k^T wk x_k
    double s = 2.0 * xk.array().square().matrix().dot(row_sums) -
               2.0 * xk.dot(wk * xk);
    out.gradient[k + 1] = 0.5 * s * inv_l2;
  }
  out.gradient[d + 1] = 0.5 * noise * w.trace();
  return out;
}

// ScalarGp

ScalarGp ScalarGp::Condition(const KernelHyperparams& hyper,
                             const Matrix& inputs, const Vector& labels,
                             double base_jitter) {
  return Condition(hyper, inputs, labels, Standardizer::Identity(inputs.cols()),
                   0.0, 1.0, base_jitter);
}

ScalarGp ScalarGp::Condition(const KernelHyperparams& hyper,
                             const Matrix& inputs, const Vector& labels,
                             const Standardizer& input_stats,
                             double label_mean, double label_scale,
                             double base_jitter) {
  if (inputs.rows() < 1 || inputs.rows() != labels.size()) {
    throw ContractViolation("ScalarGp: need matching, nonempty inputs/labels");
  }
  if (inputs.cols() != hyper.dim() || input_stats.dim() != hyper.dim()) {
    throw ContractViolation("ScalarGp: input dimension does not match kernel");
  }
  ScalarGp gp;
  gp.hyper_ = hyper;
  gp.input_stats_ = input_stats;
  gp.label_mean_ = label_mean;
  gp.label_scale_ = label_scale;
  gp.input_dim_ = static_cast<int>(inputs.cols());
  gp.inputs_ = input_stats.Apply(inputs);
  Vector y = (labels.array() - label_mean) / label_scale;

  Matrix gram = CrossKernel(hyper, gp.inputs_, gp.inputs_);
  gram.diagonal().setConstant(hyper.signal_variance());
  Factorization f = Factorize(gram, hyper.noise_variance(), base_jitter);
  gp.chol_ = f.llt.matrixL();
  gp.alpha_ = f.llt.solve(y);
  gp.jitter_ = f.jitter;
  gp.lml_ = -0.5 * y.dot(gp.alpha_) - gp.chol_.diagonal().array().log().sum() -
            0.5 * y.size() * kLog2Pi;
  return gp;
}

ScalarGp ScalarGp::Constant(double value, int input_dim) {
  ScalarGp gp;
  gp.constant_ = true;
  gp.label_mean_ = value;
  gp.input_dim_ = input_dim;
  gp.input_stats_ = Standardizer::Identity(input_dim);
  gp.hyper_.log_lengthscales = Vector::Zero(input_dim);
  return gp;
}

double ScalarGp::PredictMean(const Vector& query) const {
  if (query.size() != input_dim_) {
    throw ContractViolation("ScalarGp::PredictMean: query has dimension " +
                            std::to_string(query.size()) + ", expected " +
                            std::to_string(input_dim_));
  }
  if (constant_) return label_mean_;
  Matrix q = input_stats_.Apply(query).transpose();
  Vector k = CrossKernel(hyper_, q, inputs_).row(0).transpose();
  return label_mean_ + label_scale_ * k.dot(alpha_);
}

// fitting

namespace {

struct Bounds {
  Vector lo;
  Vector hi;
};

Bounds ParamBounds(int d, double min_noise) {
  Bounds b;
  b.lo.resize(d + 2);
  b.hi.resize(d + 2);
  b.lo[0] = kLogSignalMin;
  b.hi[0] = kLogSignalMax;
  b.lo.segment(1, d).setConstant(kLogLengthMin);
  b.hi.segment(1, d).setConstant(kLogLengthMax);
  b.lo[d + 1] = std::log(min_noise);
  b.hi[d + 1] = kLogNoiseMax;
  return b;
}

Vector Clamp(const Vector& p, const Bounds& b) {
  return p.cwiseMax(b.lo).cwiseMin(b.hi);
}

// projected gradient: zero components pushing against an active bound
Vector ProjectedGradient(const Vector& p, const Vector& g, const Bounds& b) {
  Vector out = g;
  for (int i = 0; i < p.size(); ++i) {
    if ((p[i] <= b.lo[i] && g[i] < 0) || (p[i] >= b.hi[i] && g[i] > 0)) {
      out[i] = 0.0;
    }
  }
  return out;
}

struct AscentResult {
  Vector params;
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> accepted;
};

AscentResult GradientAscent(const Matrix& x, const Vector& y, Vector p,
                            const Bounds& bounds, const GpFitConfig& cfg) {
  AscentResult r;
  auto eval = [&](const Vector& params, bool grad) -> std::optional<LmlValue> {
    try {
      LmlValue v = LogMarginalLikelihood(KernelHyperparams::Unpack(params), x,
                                         y, grad, cfg.jitter);
      if (!std::isfinite(v.value)) return std::nullopt;
      return v;
    } catch (const NumericalFailure&) {
      return std::nullopt;
    }
  };
  p = Clamp(p, bounds);
  auto current = eval(p, true);
  if (!current) return r;
  r.params = p;
  r.value = current->value;
  r.accepted.push_back(r.value);
  Vector grad = ProjectedGradient(p, current->gradient, bounds);
  double step = 0.1 / std::max(1.0, grad.lpNorm<Eigen::Infinity>());

  for (int it = 0; it < cfg.iterations; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() < 1e-10) break;
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      Vector trial = Clamp(p + step * grad, bounds);
      Vector move = trial - p;
      if (move.lpNorm<Eigen::Infinity>() < 1e-14) break;
      auto v = eval(trial, false);
      if (v && v->value >= r.value + 1e-4 * grad.dot(move)) {
        auto full = eval(trial, true);
        if (!full) break;
        double previous = r.value;
        p = trial;
        r.params = p;
        r.value = full->value;
        r.accepted.push_back(r.value);
        grad = ProjectedGradient(p, full->gradient, bounds);
        step *= 2.0;
        accepted = true;
        if (std::abs(r.value - previous) <
            cfg.rel_tol * std::max(1.0, std::abs(previous))) {
          return r;
        }
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return r;
}

}  // namespace

ScalarGp FitScalarGp(const Matrix& inputs, const Vector& labels,
                     const GpFitConfig& cfg, GpFitTrace* trace) {
  const int n = inputs.rows();
  const int d = inputs.cols();
  if (n < 2) throw ContractViolation("FitScalarGp: need at least 2 points");
  if (labels.size() != n) throw ContractViolation("FitScalarGp: label count mismatch");
  if (d < 1) throw ContractViolation("FitScalarGp: need at least 1 input dimension");
  if (!inputs.allFinite() || !labels.allFinite()) {
    throw ContractViolation("FitScalarGp: non-finite training data");
  }

  Standardizer input_stats = cfg.standardize ? Standardizer::Fit(inputs)
                                             : Standardizer::Identity(d);
  double label_mean = 0.0;
  double label_scale = 1.0;
  if (cfg.standardize) {
    label_mean = labels.mean();
    double sd = std::sqrt((labels.array() - label_mean).square().mean());
    if (!(sd > 1e-12 * std::max(1.0, std::abs(label_mean)))) {
      if (trace) *trace = GpFitTrace{};
      return ScalarGp::Constant(label_mean, d);
    }
    label_scale = sd;
  }
  Matrix x = input_stats.Apply(inputs);
  Vector y = (labels.array() - label_mean) / label_scale;

  const Bounds bounds = ParamBounds(d, cfg.min_noise_variance);
  KernelHyperparams init;
  init.log_signal_variance = 0.0;
  init.log_lengthscales = Vector::Zero(d);
  init.log_noise_variance = std::log(std::max(1e-2, cfg.min_noise_variance));
  Rng rng(cfg.seed);

  AscentResult best;
  int best_restart = 0;
  double initial_lml = 0.0;
  for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
    Vector p = init.Pack();
    if (r > 0) {
      for (int i = 0; i < p.size(); ++i) p[i] += rng.Uniform(-1.5, 1.5);
    }
    AscentResult result = GradientAscent(x, y, p, bounds, cfg);
    if (r == 0 && !result.accepted.empty()) initial_lml = result.accepted.front();
    if (result.value > best.value) {
      best = std::move(result);
      best_restart = r;
    }
  }
  if (!std::isfinite(best.value)) {
    throw NumericalFailure("FitScalarGp: no restart produced a finite LML");
  }
  if (trace) {
    trace->initial_lml = initial_lml;
    trace->final_lml = best.value;
    trace->accepted_lml = best.accepted;
    trace->restart_used = best_restart;
  }
  return ScalarGp::Condition(KernelHyperparams::Unpack(best.params), inputs,
                             labels, input_stats, label_mean, label_scale,
                             cfg.jitter);
}

// IgpModel

IgpModel::IgpModel(Mask mask, std::vector<ScalarGp> gps,
                   std::vector<int> train_rows)
    : mask_(std::move(mask)), gps_(std::move(gps)),
      train_rows_(std::move(train_rows)) {
  for (int i = 0; i < static_cast<int>(mask_.size()); ++i) {
    if (mask_[i]) kept_.push_back(i);
  }
  for (const auto& gp : gps_) {
    if (gp.input_dim() != static_cast<int>(kept_.size())) {
      throw ContractViolation("IgpModel: GP input layout differs from mask");
    }
  }
}

Vector IgpModel::Reduce(const Vector& full_input) const {
  if (full_input.size() != input_dim()) {
    throw ContractViolation("IgpModel: input has dimension " +
                            std::to_string(full_input.size()) + ", expected " +
                            std::to_string(input_dim()));
  }
  Vector r(kept_.size());
  for (size_t i = 0; i < kept_.size(); ++i) r[i] = full_input[kept_[i]];
  return r;
}

Vector IgpModel::Predict(const Vector& full_input) const {
  Vector r = Reduce(full_input);
  Vector out(output_dim());
  for (int i = 0; i < output_dim(); ++i) out[i] = gps_[i].PredictMean(r);
  return out;
}

Matrix ApplyMask(const Matrix& inputs, const Mask& mask) {
  if (static_cast<int>(mask.size()) != inputs.cols()) {
    throw ContractViolation("ApplyMask: mask length differs from input width");
  }
  std::vector<int> kept;
  for (int i = 0; i < inputs.cols(); ++i) {
    if (mask[i]) kept.push_back(i);
  }
  Matrix out(inputs.rows(), kept.size());
  for (size_t j = 0; j < kept.size(); ++j) out.col(j) = inputs.col(kept[j]);
  return out;
}

std::vector<int> CoverageSubset(const Matrix& points, int max_points,
                                uint64_t seed) {
  const int count = static_cast<int>(points.rows());
  std::vector<int> rows(count);
  std::iota(rows.begin(), rows.end(), 0);
  if (max_points <= 0 || count <= max_points) return rows;
  const Matrix z = Standardizer::Fit(points).Apply(points);
  Rng rng(seed);
  std::vector<int> picked = {rng.Index(count)};
  Vector nearest = (z.rowwise() - z.row(picked[0])).rowwise().squaredNorm();
  while (static_cast<int>(picked.size()) < max_points) {
    Eigen::Index far;
    nearest.maxCoeff(&far);  // first index on ties
    picked.push_back(static_cast<int>(far));
    nearest = nearest.cwiseMin((z.rowwise() - z.row(far)).rowwise().squaredNorm());
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

Matrix TakeRows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(rows.size(), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

}  // namespace

IgpModel FitIgp(const Matrix& inputs, const Matrix& labels, const Mask& mask,
                const GpFitConfig& cfg) {
  if (inputs.rows() == 0) throw ContractViolation("FitIgp: empty dataset");
  if (labels.rows() != inputs.rows()) {
    throw ContractViolation("FitIgp: inputs and labels differ in length");
  }
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw ContractViolation("FitIgp: mask must retain at least one dimension");
  }
  const Matrix reduced = ApplyMask(inputs, mask);
  std::vector<int> rows =
      CoverageSubset(reduced, cfg.max_points, DeriveSeed(cfg.seed, 99));
  Matrix x = TakeRows(reduced, rows);
  Matrix y = TakeRows(labels, rows);
  std::vector<ScalarGp> gps;
  for (int k = 0; k < y.cols(); ++k) {
    GpFitConfig local = cfg;
    local.seed = DeriveSeed(cfg.seed, k);
    try {
      gps.push_back(FitScalarGp(x, y.col(k), local));
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("FitIgp: output dimension " + std::to_string(k) +
                             ": " + e.what());
    } catch (const ContractViolation& e) {
      throw ContractViolation("FitIgp: output dimension " + std::to_string(k) +
                              ": " + e.what());
    }
  }
  return IgpModel(mask, std::move(gps), std::move(rows));
}

std::string TrainingFingerprint(const Matrix& inputs, const Matrix& labels) {
  Fingerprint fp;
  fp.Add(inputs);
  fp.Add(labels);
  return fp.hex();
}

namespace {

json VecJson(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector VecFrom(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), v.size());
}

}  // namespace

json IgpToJson(const IgpModel& model, const Matrix& inputs,
               const Matrix& labels) {
  json outputs = json::array();
  for (int k = 0; k < model.output_dim(); ++k) {
    const ScalarGp& gp = model.gp(k);
    json o = {{"constant", gp.is_constant()}, {"label_mean", gp.label_mean()}};
    if (!gp.is_constant()) {
      o["label_scale"] = gp.label_scale();
      o["log_signal_variance"] = gp.hyper().log_signal_variance;
      o["log_lengthscales"] = VecJson(gp.hyper().log_lengthscales);
      o["log_noise_variance"] = gp.hyper().log_noise_variance;
      o["input_mean"] = VecJson(gp.input_stats().mean);
      o["input_scale"] = VecJson(gp.input_stats().scale);
      o["jitter"] = gp.jitter();
    }
    outputs.push_back(std::move(o));
  }
  return {{"version", "1"},
          {"mask", model.mask()},
          {"train_rows", model.train_rows()},
          {"data_fingerprint", TrainingFingerprint(inputs, labels)},
          {"outputs", std::move(outputs)}};
}

IgpModel IgpFromJson(const json& j, const Matrix& inputs, const Matrix& labels) {
  try {
    if (j.at("version").get<std::string>() != "1") {
      throw FormatError("GP checkpoint: unsupported version");
    }
    if (j.at("data_fingerprint").get<std::string>() !=
        TrainingFingerprint(inputs, labels)) {
      throw FormatError("GP checkpoint: training data fingerprint mismatch");
    }
    Mask mask = j.at("mask").get<std::vector<bool>>();
    auto rows = j.at("train_rows").get<std::vector<int>>();
    for (int r : rows) {
      if (r < 0 || r >= inputs.rows()) {
        throw FormatError("GP checkpoint: training row out of range");
      }
    }
    Matrix x = ApplyMask(TakeRows(inputs, rows), mask);
    Matrix y = TakeRows(labels, rows);
    const auto& outputs = j.at("outputs");
    if (static_cast<int>(outputs.size()) != y.cols()) {
      throw FormatError("GP checkpoint: output count differs from labels");
    }
    std::vector<ScalarGp> gps;
    for (int k = 0; k < y.cols(); ++k) {
      const json& o = outputs[k];
      if (o.at("constant").get<bool>()) {
        gps.push_back(ScalarGp::Constant(o.at("label_mean").get<double>(), x.cols()));
        continue;
      }
      KernelHyperparams h;
      h.log_signal_variance = o.at("log_signal_variance").get<double>();
      h.log_lengthscales = VecFrom(o.at("log_lengthscales"));
      h.log_noise_variance = o.at("log_noise_variance").get<double>();
      Standardizer s{VecFrom(o.at("input_mean")), VecFrom(o.at("input_scale"))};
      gps.push_back(ScalarGp::Condition(h, x, y.col(k), s,
                                        o.at("label_mean").get<double>(),
                                        o.at("label_scale").get<double>(),
                                        o.at("jitter").get<double>()));
    }
    return IgpModel(std::move(mask), std::move(gps), std::move(rows));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("GP checkpoint: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("GP checkpoint: ") + e.what());
  }
}

}  // namespace nhlearn
