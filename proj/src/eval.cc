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
#include "nhlearn/eval.h"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <map>
#include <utility>

#include "nhlearn/error.h"
#include "nhlearn/project.h"

namespace nhlearn {

using nlohmann::json;

namespace {

json NumJson(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double NumFrom(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : j.get<double>();
}

json VecJson(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector VecFrom(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), v.size());
}

void AppendNumber(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double QuantileSorted(const std::vector<double>& s, double q) {
  const double pos = q * (s.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - lo) * (s[hi] - s[lo]);
}

}  // namespace

ConstraintRecovery MeasureConstraintRecovery(const ManifoldModel& mm,
                                             const SystemModel& sys,
                                             const Matrix& states) {
  ConstraintRecovery r;
  r.detected_count = mm.constraint_count();
  r.true_count = sys.constraint_count();
  if (r.detected_count != r.true_count) {
    r.error_max = r.error_mean = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  if (states.rows() == 0 || r.true_count == 0) return r;
  double sum = 0.0;
  for (int i = 0; i < states.rows(); ++i) {
    const Vector x = states.row(i).transpose();
    const double e =
        (mm.Gamma(x) - EvalTrueConstraint(sys, x)).cwiseAbs().maxCoeff();
    sum += e;
    r.error_max = std::max(r.error_max, e);
  }
  r.error_mean = sum / states.rows();
  return r;
}

const ModelReport* EvalReport::Find(const std::string& name) const {
  for (const ModelReport& m : models) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

std::vector<NamedModel> StandardEntrants(const IgpModel& full,
                                         const IgpModel& sparse,
                                         const ManifoldModel& manifold,
                                         const SystemModel& sys,
                                         const std::vector<std::string>& select) {
  for (const std::string& s : select) {
    const auto& names = StandardModelNames();
    if (std::find(names.begin(), names.end(), s) == names.end()) {
      throw ConfigError("unknown model '" + s + "'");
    }
  }
  auto concat = [](const Vector& x, const Vector& u) {
    Vector z(x.size() + u.size());
    z << x, u;
    return z;
  };
  std::vector<NamedModel> all = {
      {"full_gp",
       [&full, concat](const Vector& x, const Vector& u) {
         return full.Predict(concat(x, u));
       }},
      {"sparse_gp",
       [&sparse, concat](const Vector& x, const Vector& u) {
         return sparse.Predict(concat(x, u));
       }},
      {"projected",
       [&sparse, &manifold](const Vector& x, const Vector& u) {
         return PredictProjected(sparse, manifold, x, u);
       }},
      {"oracle_projected",
       [&sparse, &sys, concat](const Vector& x, const Vector& u) {
         const Matrix gamma = EvalTrueConstraint(sys, x);
         const int n = static_cast<int>(x.size());
         return Project(gamma.leftCols(n), gamma.col(n),
                        sparse.Predict(concat(x, u)))
             .projected;
       }},
  };
  if (select.empty()) return all;
  std::vector<NamedModel> out;
  for (NamedModel& m : all) {
    if (std::find(select.begin(), select.end(), m.name) != select.end()) {
      out.push_back(std::move(m));
    }
  }
  return out;
}

double RmseFromResiduals(const Matrix& residuals) {
  if (residuals.rows() == 0) return 0.0;
  return std::sqrt(residuals.squaredNorm() / residuals.rows());
}

EvalReport Evaluate(const std::vector<NamedModel>& models,
                    const DatasetBundle& bundle, const SystemModel& sys) {
  const Triples& test = bundle.test;
  const int n = sys.state_dim();
  if (bundle.state_dim() != n || bundle.control_dim() != sys.control_dim() ||
      test.states.cols() != n) {
    throw ContractViolation("Evaluate: bundle layout does not match system");
  }
  EvalReport report;
  report.system = sys.name();
  report.seed = bundle.meta.seed;
  report.test_count = test.size();

  Triples train = Flatten(bundle, kOffline | kOnline);
  Vector dist = NearestDistances(test.states, train.states);
  if (dist.size() > 0) {
    std::vector<double> d(dist.data(), dist.data() + dist.size());
    std::sort(d.begin(), d.end());
    report.ood_distance = {d.front(), QuantileSorted(d, 0.5), d.back()};
  }

  std::vector<Matrix> gammas(test.size());
  for (int i = 0; i < test.size(); ++i) {
    gammas[i] = EvalTrueConstraint(sys, test.states.row(i).transpose());
  }
  for (const NamedModel& model : models) {
    ModelReport m;
    m.name = model.name;
    m.residuals.resize(test.size(), n);
    double viol_sum = 0.0;
    for (int i = 0; i < test.size(); ++i) {
      const Vector x = test.states.row(i).transpose();
      const Vector pred = model.predict(x, test.controls.row(i).transpose());
      if (pred.size() != n) {
        throw ContractViolation("Evaluate: model '" + model.name +
                                "' returned wrong dimension");
      }
      m.residuals.row(i) = (pred - test.derivs.row(i).transpose()).transpose();
      const Matrix& gamma = gammas[i];
      const double viol =
          gamma.rows() ? (gamma.leftCols(n) * pred + gamma.col(n))
                             .cwiseAbs()
                             .maxCoeff()
                       : 0.0;
      viol_sum += viol;
      m.constraint_violation_max = std::max(m.constraint_violation_max, viol);
    }
    const double count = std::max(1, test.size());
    m.constraint_violation_mean = viol_sum / count;
    m.rmse_per_dim =
        (m.residuals.colwise().squaredNorm().transpose() / count).cwiseSqrt();
    m.rmse_total = RmseFromResiduals(m.residuals);
    report.models.push_back(std::move(m));
  }
  return report;
}

json ReportToJson(const EvalReport& report) {
  json models = json::array();
  for (const ModelReport& m : report.models) {
    models.push_back({{"name", m.name},
                      {"rmse_per_state_dim", VecJson(m.rmse_per_dim)},
                      {"rmse_total", m.rmse_total},
                      {"constraint_violation_mean", m.constraint_violation_mean},
                      {"constraint_violation_max", m.constraint_violation_max}});
  }
  return {{"version", "1"},
          {"system", report.system},
          {"seed", report.seed},
          {"config_hash", report.config_hash},
          {"test_count", report.test_count},
          {"ood_distance",
           {{"min", report.ood_distance.min},
            {"median", report.ood_distance.median},
            {"max", report.ood_distance.max}}},
          {"constraint_recovery",
           {{"detected_count", report.constraint.detected_count},
            {"true_count", report.constraint.true_count},
            {"error_max", NumJson(report.constraint.error_max)},
            {"error_mean", NumJson(report.constraint.error_mean)}}},
          {"models", std::move(models)}};
}

EvalReport ReportFromJson(const json& j) {
  try {
    EvalReport r;
    r.system = j.at("system").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.test_count = j.at("test_count").get<int>();
    const json& d = j.at("ood_distance");
    r.ood_distance = {d.at("min").get<double>(), d.at("median").get<double>(),
                      d.at("max").get<double>()};
    const json& c = j.at("constraint_recovery");
    r.constraint.detected_count = c.at("detected_count").get<int>();
    r.constraint.true_count = c.at("true_count").get<int>();
    r.constraint.error_max = NumFrom(c.at("error_max"));
    r.constraint.error_mean = NumFrom(c.at("error_mean"));
    for (const json& o : j.at("models")) {
      ModelReport m;
      m.name = o.at("name").get<std::string>();
      m.rmse_per_dim = VecFrom(o.at("rmse_per_state_dim"));
      m.rmse_total = o.at("rmse_total").get<double>();
      m.constraint_violation_mean =
          o.at("constraint_violation_mean").get<double>();
      m.constraint_violation_max =
          o.at("constraint_violation_max").get<double>();
      r.models.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

std::string ResidualsCsv(const EvalReport& report) {
  std::string out = "test_index,model";
  const int n = report.models.empty()
                    ? 0
                    : static_cast<int>(report.models.front().residuals.cols());
  for (int k = 0; k < n; ++k) out += ",dim_" + std::to_string(k);
  out += "\n";
  for (const ModelReport& m : report.models) {
    for (int i = 0; i < m.residuals.rows(); ++i) {
      out += std::to_string(i) + "," + m.name;
      for (int k = 0; k < m.residuals.cols(); ++k) {
        out += ",";
        AppendNumber(out, m.residuals(i, k));
      }
      out += "\n";
    }
  }
  return out;
}

Quartiles ComputeQuartiles(std::vector<double> values) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  return {QuantileSorted(values, 0.25), QuantileSorted(values, 0.5),
          QuantileSorted(values, 0.75)};
}

json AggregateReports(const std::vector<EvalReport>& reports) {
  std::map<std::string, std::vector<const ModelReport*>> by_name;
  std::vector<std::string> order;
  for (const EvalReport& r : reports) {
    for (const ModelReport& m : r.models) {
      if (!by_name.count(m.name)) order.push_back(m.name);
      by_name[m.name].push_back(&m);
    }
  }
  json models = json::array();
  for (const std::string& name : order) {
    std::vector<double> rmse, viol;
    for (const ModelReport* m : by_name[name]) {
      rmse.push_back(m->rmse_total);
      viol.push_back(m->constraint_violation_mean);
    }
    const Quartiles qr = ComputeQuartiles(rmse);
    const Quartiles qv = ComputeQuartiles(viol);
    models.push_back(
        {{"name", name},
         {"rmse_total", {{"median", qr.median}, {"q1", qr.q1}, {"q3", qr.q3},
                         {"iqr", qr.q3 - qr.q1}, {"per_seed", rmse}}},
         {"constraint_violation_mean",
          {{"median", qv.median}, {"q1", qv.q1}, {"q3", qv.q3},
           {"iqr", qv.q3 - qv.q1}, {"per_seed", viol}}}});
  }
  std::vector<uint64_t> seeds;
  std::vector<double> recovery;
  json recovery_per_seed = json::array();
  int count_match = 0;
  for (const EvalReport& r : reports) {
    seeds.push_back(r.seed);
    recovery_per_seed.push_back(NumJson(r.constraint.error_max));
    if (r.constraint.detected_count == r.constraint.true_count) ++count_match;
    if (std::isfinite(r.constraint.error_max)) {
      recovery.push_back(r.constraint.error_max);
    }
  }
  const Quartiles qc = ComputeQuartiles(recovery);
  return {{"version", "1"},
          {"system", reports.empty() ? "" : reports.front().system},
          {"seeds", seeds},
          {"constraint_recovery",
           {{"count_match", count_match},
            {"error_max", {{"median", qc.median}, {"q1", qc.q1},
                           {"q3", qc.q3}, {"per_seed", recovery_per_seed}}}}},
          {"models", std::move(models)}};
}

}  // namespace nhlearn
