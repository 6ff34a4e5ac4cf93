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
#include "nhlearn/manifold.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/SVD>

#include "nhlearn/error.h"
#include "nhlearn/linalg.h"
#include "nhlearn/log.h"
#include "nhlearn/rng.h"

namespace nhlearn {

using nlohmann::json;

namespace {

json MatJson(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix MatFrom(const json& j, int cols) {
  Matrix m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (static_cast<int>(j[i].size()) != cols) {
      throw FormatError("constraint checkpoint: ragged matrix");
    }
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

json VecJson(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector VecFrom(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), v.size());
}

int NumericalRank(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) rank += s[i] > 1e-9 * s[0];
  return rank;
}

Matrix SampleControls(int count, const std::vector<Interval>& bounds,
                      uint64_t seed) {
  Rng rng(seed);
  Matrix u(count, bounds.size());
  for (int k = 0; k < count; ++k) {
    for (size_t j = 0; j < bounds.size(); ++j) {
      u(k, j) = rng.Uniform(bounds[j].lo, bounds[j].hi);
    }
  }
  return u;
}

std::string Spectrum(const Vector& s) {
  std::ostringstream out;
  out << "[";
  for (int i = 0; i < s.size(); ++i) out << (i ? ", " : "") << s[i];
  out << "]";
  return out.str();
}

}  // namespace

DynamicsFn IgpDynamics(const IgpModel& dyn, int state_dim) {
  return [&dyn, state_dim](const Vector& x, const Vector& u) {
    Vector z(state_dim + u.size());
    z << x, u;
    return dyn.Predict(z);
  };
}

LmaMatrix BuildLma(const DynamicsFn& dyn, const Vector& x,
                   const Matrix& controls) {
  const int n = static_cast<int>(x.size());
  LmaMatrix lma;
  lma.at_state = x;
  lma.controls_used = controls;
  lma.rows.resize(controls.rows(), n + 1);
  for (int k = 0; k < controls.rows(); ++k) {
    Vector f = dyn(x, controls.row(k).transpose());
    if (f.size() != n) {
      throw ContractViolation("BuildLma: dynamics returned wrong dimension");
    }
    lma.rows.row(k).head(n) = f.transpose();
    lma.rows(k, n) = 1.0;
  }
  return lma;
}

LmaMatrix BuildLma(const DynamicsFn& dyn, const Vector& x, int count,
                   const std::vector<Interval>& bounds, uint64_t seed,
                   int c_expected) {
  const int n = static_cast<int>(x.size());
  const int need = c_expected >= 0 ? n - c_expected : 1;
  if (count < std::max(need, 1)) {
    throw ContractViolation("BuildLma: K = " + std::to_string(count) +
                            " is below n - c = " + std::to_string(need));
  }
  for (const Interval& b : bounds) {
    if (!b.bounded()) throw ContractViolation("BuildLma: unbounded control");
  }
  LmaMatrix lma = BuildLma(dyn, x, SampleControls(count, bounds, seed));
  if (c_expected < 0 || NumericalRank(lma.rows) >= need) return lma;
  LogDebug("BuildLma: rank-deficient draw, resampling");
  lma = BuildLma(dyn, x, SampleControls(count, bounds, DeriveSeed(seed, 1)));
  if (NumericalRank(lma.rows) < need) {
    throw NumericalFailure("BuildLma: LMA rank below n - c after resampling");
  }
  return lma;
}

NullSpace NullSpaceBasis(const Matrix& lma_rows, double threshold) {
  if (!(threshold > 0.0)) {
    throw ContractViolation("NullSpaceBasis: threshold must be positive");
  }
  const int cols = static_cast<int>(lma_rows.cols());
  Eigen::JacobiSVD<Matrix> svd(lma_rows, Eigen::ComputeFullV);
  NullSpace ns;
  ns.threshold = threshold;
  ns.singular_values = Vector::Zero(cols);
  ns.singular_values.head(svd.singularValues().size()) = svd.singularValues();
  std::vector<int> keep;
  for (int j = 0; j < cols; ++j) {
    if (ns.singular_values[j] < threshold) keep.push_back(j);
  }
  if (static_cast<int>(keep.size()) >= cols - 1) {
    throw NumericalFailure("NullSpaceBasis: null space of dimension " +
                           std::to_string(keep.size()) +
                           " leaves no admissible motion; spectrum " +
                           Spectrum(ns.singular_values));
  }
  ns.v2.resize(cols, keep.size());
  for (size_t k = 0; k < keep.size(); ++k) {
    ns.v2.col(k) = svd.matrixV().col(keep[k]);
  }
  return ns;
}

double RelativeSvThreshold(const Matrix& lma_rows, double rel) {
  Eigen::JacobiSVD<Matrix> svd(lma_rows);
  const double top =
      svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return rel * top;
}

Matrix StandardizeBasis(const Matrix& v2t, const std::optional<Matrix>& ref) {
  Matrix rows = v2t;
  for (int i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (!(norm > 0.0)) {
      throw NumericalFailure("StandardizeBasis: zero basis row");
    }
    rows.row(i) /= norm;
  }
  RrefResult r = ReducedRowEchelon(rows);
  if (r.rank < rows.rows()) {
    throw NumericalFailure("StandardizeBasis: rank " + std::to_string(r.rank) +
                           " < " + std::to_string(rows.rows()) +
                           " during rref");
  }
  Matrix out = r.reduced;
  if (ref) {
    if (ref->rows() != out.rows() || ref->cols() != out.cols()) {
      throw ContractViolation("StandardizeBasis: reference shape mismatch");
    }
    for (int i = 0; i < out.rows(); ++i) {
      if (out.row(i).dot(ref->row(i)) < 0.0) out.row(i) *= -1.0;
    }
  }
  return out;
}

Matrix ConstraintDataset::States() const {
  Matrix s(items.size(), state_dim);
  for (size_t i = 0; i < items.size(); ++i) s.row(i) = items[i].at_state;
  return s;
}

Matrix ConstraintDataset::RowLabels(int i) const {
  Matrix y(items.size(), state_dim + 1);
  for (size_t k = 0; k < items.size(); ++k) y.row(k) = items[k].gamma.row(i);
  return y;
}

ConstraintDataset BuildConstraintDataset(const DynamicsFn& dyn,
                                         const Matrix& states,
                                         const std::vector<Interval>& bounds,
                                         int control_dim,
                                         const ConstraintDatasetConfig& cfg) {
  const int count = static_cast<int>(states.rows());
  const int n = static_cast<int>(states.cols());
  if (count == 0) {
    throw ContractViolation("BuildConstraintDataset: no states");
  }
  if (static_cast<int>(bounds.size()) != control_dim) {
    throw ContractViolation("BuildConstraintDataset: bounds/control mismatch");
  }
  int k_rows = cfg.lma_rows;
  if (k_rows <= 0) k_rows = 4 * (cfg.c_expected >= 0 ? n - cfg.c_expected : n);

  ConstraintDataset out;
  out.state_dim = n;
  out.counts.assign(count, -1);
  std::vector<NullSpace> spaces(count);
  std::vector<Matrix> lmas(count);
  for (int i = 0; i < count; ++i) {
    const Vector x = states.row(i).transpose();
    try {
      LmaMatrix lma = BuildLma(dyn, x, k_rows, bounds, DeriveSeed(cfg.seed, i),
                               cfg.c_expected);
      spaces[i] = NullSpaceBasis(lma.rows,
                                 RelativeSvThreshold(lma.rows, cfg.sv_rel));
      out.counts[i] = spaces[i].count();
      lmas[i] = std::move(lma.rows);
    } catch (const NumericalFailure& e) {
      LogDebug(std::string("state ") + std::to_string(i) + ": " + e.what());
    }
  }

  std::map<int, int> votes;
  for (int c : out.counts) {
    if (c >= 0) ++votes[c];
  }
  if (votes.empty()) {
    throw NumericalFailure("BuildConstraintDataset: no state produced a null "
                           "space; first spectrum " +
                           Spectrum(spaces[0].singular_values));
  }
  auto modal = std::max_element(
      votes.begin(), votes.end(),
      [](const auto& a, const auto& b) { return a.second < b.second; });
  const double share = static_cast<double>(modal->second) / count;
  if (share < cfg.agreement) {
    std::ostringstream msg;
    msg << "BuildConstraintDataset: constraint count not consistent (";
    for (const auto& [c, v] : votes) msg << "c=" << c << ":" << v << " ";
    msg << "of " << count << "); first spectrum "
        << Spectrum(spaces[0].singular_values);
    throw NumericalFailure(msg.str());
  }
  out.constraint_count = modal->first;

  for (int i = 0; i < count; ++i) {
    if (out.counts[i] != out.constraint_count) {
      out.discarded.push_back(i);
      continue;
    }
    ConstraintBasis b;
    b.at_state = states.row(i).transpose();
    b.singular_values = spaces[i].singular_values;
    b.threshold = spaces[i].threshold;
    b.residual = out.constraint_count
                     ? (lmas[i] * spaces[i].v2).cwiseAbs().maxCoeff()
                     : 0.0;
    try {
      b.raw = StandardizeBasis(spaces[i].v2.transpose());
    } catch (const NumericalFailure& e) {
      LogDebug(std::string("state ") + std::to_string(i) + ": " + e.what());
      out.discarded.push_back(i);
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < out.items.size(); ++k) {
      const double d = (out.items[k].at_state - b.at_state).squaredNorm();
      if (d < best) {
        best = d;
        b.reference = static_cast<int>(k);
      }
    }
    b.gamma = b.reference >= 0
                  ? StandardizeBasis(spaces[i].v2.transpose(),
                                     out.items[b.reference].raw)
                  : b.raw;
    out.items.push_back(std::move(b));
    out.source.push_back(i);
  }
  if (!out.discarded.empty()) {
    LogWarn("constraint dataset: discarded " +
            std::to_string(out.discarded.size()) + " of " +
            std::to_string(count) + " states (modal c = " +
            std::to_string(out.constraint_count) + ")");
  }
  return out;
}

ManifoldModel::ManifoldModel(int state_dim,
                             std::vector<DiagonalPseudometric> metrics,
                             std::vector<SparsityMask> masks,
                             std::vector<IgpModel> rows)
    : state_dim_(state_dim),
      metrics_(std::move(metrics)),
      masks_(std::move(masks)),
      rows_(std::move(rows)) {
  if (metrics_.size() != rows_.size() || masks_.size() != rows_.size()) {
    throw ContractViolation("ManifoldModel: per-row sizes differ");
  }
  for (const IgpModel& r : rows_) {
    if (r.input_dim() != state_dim_ || r.output_dim() != state_dim_ + 1) {
      throw ContractViolation("ManifoldModel: row model has wrong layout");
    }
  }
}

Matrix ManifoldModel::Gamma(const Vector& x) const {
  if (x.size() != state_dim_) {
    throw ContractViolation("ManifoldModel: state dimension mismatch");
  }
  Matrix gamma(rows_.size(), state_dim_ + 1);
  for (size_t i = 0; i < rows_.size(); ++i) {
    gamma.row(i) = rows_[i].Predict(x).transpose();
  }
  return gamma;
}

ManifoldModel TrainManifold(const ConstraintDataset& data,
                            const ManifoldTrainConfig& cfg) {
  const int c = data.constraint_count;
  if (c == 0) return ManifoldModel(data.state_dim, {}, {}, {});
  if (data.items.empty()) {
    throw ContractViolation("TrainManifold: empty constraint dataset");
  }
  const Matrix states = data.States();
  std::vector<DiagonalPseudometric> metrics;
  std::vector<SparsityMask> masks;
  std::vector<IgpModel> rows;
  for (int i = 0; i < c; ++i) {
    const Matrix labels = data.RowLabels(i);
    MetricTrainConfig mc = cfg.metric;
    mc.seed = DeriveSeed(cfg.metric.seed, i);
    MetricTrainResult metric = TrainPseudometric(states, labels, mc);
    SparsityMask mask = ExtractMask(metric.metric, cfg.mask_threshold);
    GpFitConfig gc = cfg.gp;
    gc.seed = DeriveSeed(cfg.gp.seed, i);
    rows.push_back(FitIgp(states, labels, mask.retained, gc));
    LogInfo("constraint row " + std::to_string(i) + ": metric loss " +
            std::to_string(metric.metric.final_loss));
    metrics.push_back(std::move(metric.metric));
    masks.push_back(std::move(mask));
  }
  return ManifoldModel(data.state_dim, std::move(metrics), std::move(masks),
                       std::move(rows));
}

ConstraintEval EvalConstraint(const ManifoldModel& mm, const Vector& x) {
  if (!x.allFinite()) {
    throw ContractViolation("EvalConstraint: non-finite state");
  }
  const Matrix gamma = mm.Gamma(x);
  return {gamma.leftCols(mm.state_dim()), gamma.col(mm.state_dim())};
}

json ConstraintDatasetToJson(const ConstraintDataset& data) {
  json items = json::array();
  for (const ConstraintBasis& b : data.items) {
    items.push_back({{"state", VecJson(b.at_state)},
                     {"gamma", MatJson(b.gamma)},
                     {"raw", MatJson(b.raw)},
                     {"singular_values", VecJson(b.singular_values)},
                     {"threshold", b.threshold},
                     {"residual", b.residual},
                     {"reference", b.reference}});
  }
  return {{"version", "1"},
          {"state_dim", data.state_dim},
          {"constraint_count", data.constraint_count},
          {"counts", data.counts},
          {"source", data.source},
          {"discarded", data.discarded},
          {"items", std::move(items)}};
}

ConstraintDataset ConstraintDatasetFromJson(const json& j) {
  try {
    if (j.at("version").get<std::string>() != "1") {
      throw FormatError("constraint dataset: unsupported version");
    }
    ConstraintDataset d;
    d.state_dim = j.at("state_dim").get<int>();
    d.constraint_count = j.at("constraint_count").get<int>();
    d.counts = j.at("counts").get<std::vector<int>>();
    d.source = j.at("source").get<std::vector<int>>();
    d.discarded = j.at("discarded").get<std::vector<int>>();
    for (const json& o : j.at("items")) {
      ConstraintBasis b;
      b.at_state = VecFrom(o.at("state"));
      b.gamma = MatFrom(o.at("gamma"), d.state_dim + 1);
      b.raw = MatFrom(o.at("raw"), d.state_dim + 1);
      b.singular_values = VecFrom(o.at("singular_values"));
      b.threshold = o.at("threshold").get<double>();
      b.residual = o.at("residual").get<double>();
      b.reference = o.at("reference").get<int>();
      if (b.at_state.size() != d.state_dim ||
          b.gamma.rows() != d.constraint_count) {
        throw FormatError("constraint dataset: item shape mismatch");
      }
      d.items.push_back(std::move(b));
    }
    if (d.items.size() != d.source.size()) {
      throw FormatError("constraint dataset: source count mismatch");
    }
    return d;
  } catch (const json::exception& e) {
    throw FormatError(std::string("constraint dataset: ") + e.what());
  }
}

json ManifoldToJson(const ManifoldModel& mm, const ConstraintDataset& data) {
  json rows = json::array();
  const Matrix states = data.States();
  for (int i = 0; i < mm.constraint_count(); ++i) {
    const SparsityMask& m = mm.row_mask(i);
    rows.push_back(
        {{"pseudometric", PseudometricToJson(mm.row_metric(i),
                                             m.threshold_used)},
         {"mask", {{"retained", m.retained},
                   {"threshold", m.threshold_used},
                   {"diag", VecJson(m.diag_snapshot)}}},
         {"gp", IgpToJson(mm.row_model(i), states, data.RowLabels(i))}});
  }
  return {{"version", "1"},
          {"state_dim", mm.state_dim()},
          {"constraint_count", mm.constraint_count()},
          {"rows", std::move(rows)}};
}

ManifoldModel ManifoldFromJson(const json& j, const ConstraintDataset& data) {
  try {
    if (j.at("version").get<std::string>() != "1") {
      throw FormatError("manifold checkpoint: unsupported version");
    }
    const int n = j.at("state_dim").get<int>();
    const int c = j.at("constraint_count").get<int>();
    if (n != data.state_dim || c != data.constraint_count ||
        static_cast<int>(j.at("rows").size()) != c) {
      throw FormatError("manifold checkpoint: does not match constraint data");
    }
    const Matrix states = data.States();
    std::vector<DiagonalPseudometric> metrics;
    std::vector<SparsityMask> masks;
    std::vector<IgpModel> rows;
    for (int i = 0; i < c; ++i) {
      const json& r = j.at("rows")[i];
      metrics.push_back(PseudometricFromJson(r.at("pseudometric")));
      SparsityMask m;
      m.retained = r.at("mask").at("retained").get<std::vector<bool>>();
      m.threshold_used = r.at("mask").at("threshold").get<double>();
      m.diag_snapshot = VecFrom(r.at("mask").at("diag"));
      masks.push_back(std::move(m));
      rows.push_back(IgpFromJson(r.at("gp"), states, data.RowLabels(i)));
    }
    return ManifoldModel(n, std::move(metrics), std::move(masks),
                         std::move(rows));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifold checkpoint: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("manifold checkpoint: ") + e.what());
  }
}

}  // namespace nhlearn
