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
#include "nhlearn/datasets.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "nhlearn/error.h"
#include "nhlearn/linalg.h"
#include "nhlearn/log.h"
#include "nhlearn/rng.h"

namespace nhlearn {

using json = nlohmann::json;
namespace fs = std::filesystem;

bool Box::Contains(const Vector& x) const {
  for (int i = 0; i < dim(); ++i) {
    if (!dims[i].Contains(x[i])) return false;
  }
  return true;
}

double BoxDistance(const Box& a, const Box& b) {
  double sq = 0.0;
  for (int i = 0; i < std::min(a.dim(), b.dim()); ++i) {
    double gap = std::max({0.0, a.dims[i].lo - b.dims[i].hi,
                           b.dims[i].lo - a.dims[i].hi});
    if (std::isfinite(gap)) sq += gap * gap;
  }
  return std::sqrt(sq);
}

Matrix Triples::Inputs() const {
  Matrix z(states.rows(), states.cols() + controls.cols());
  z << states, controls;
  return z;
}

namespace {

Vector SampleBox(const Box& box, Rng& rng) {
  Vector x(box.dim());
  for (int i = 0; i < box.dim(); ++i) {
    x[i] = rng.Uniform(box.dims[i].lo, box.dims[i].hi);
  }
  return x;
}

Vector SampleControl(const SystemModel& sys, Rng& rng) {
  Vector u(sys.control_dim());
  for (int i = 0; i < u.size(); ++i) {
    u[i] = rng.Uniform(sys.control_bounds()[i].lo, sys.control_bounds()[i].hi);
  }
  return u;
}

Trajectory SampleTrajectory(const SystemModel& sys,
                            const GenerationConfig& cfg, Rng& rng) {
  const int m = sys.control_dim();
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Vector x0 = SampleBox(cfg.start_region, rng);
    Matrix controls(cfg.horizon - 1, m);
    Vector u;
    for (int t = 0; t < cfg.horizon - 1; ++t) {
      if (t % cfg.hold_steps == 0) u = SampleControl(sys, rng);
      controls.row(t) = u.transpose();
    }
    Trajectory traj = Rollout(sys, x0, controls, cfg.dt);
    bool inside = true;
    for (int t = 0; t < traj.length() && inside; ++t) {
      inside = cfg.envelope.Contains(traj.states.row(t).transpose());
    }
    if (inside) return traj;
  }
  throw ConfigError("generate: no trajectory stayed inside the envelope after " +
                    std::to_string(cfg.max_attempts) + " attempts");
}

void AddDerivativeNoise(Trajectory& traj, double stddev, Rng& rng) {
  if (stddev <= 0.0) return;
  for (int i = 0; i < traj.derivs.rows(); ++i) {
    for (int j = 0; j < traj.derivs.cols(); ++j) {
      traj.derivs(i, j) += rng.Normal(stddev);
    }
  }
}

void CheckBox(const Box& box, int n, const char* name, bool need_bounded) {
  if (box.dim() != n) {
    throw ConfigError(std::string("generate: ") + name + " has " +
                      std::to_string(box.dim()) + " dimensions, state has " +
                      std::to_string(n));
  }
  for (const auto& iv : box.dims) {
    if (iv.lo > iv.hi) {
      throw ConfigError(std::string("generate: ") + name +
                        " has an empty interval");
    }
    if (need_bounded && !iv.bounded()) {
      throw ConfigError(std::string("generate: ") + name +
                        " must be bounded in every dimension");
    }
  }
}

}  // namespace

void ValidateGenerationConfig(const SystemModel& sys,
                              const GenerationConfig& cfg) {
  const int n = sys.state_dim();
  if (cfg.trajectories < 1) throw ConfigError("generate: trajectories must be >= 1");
  if (cfg.horizon < 2) throw ConfigError("generate: horizon must be >= 2");
  if (!(cfg.dt > 0.0)) throw ConfigError("generate: dt must be positive");
  if (cfg.hold_steps < 1) throw ConfigError("generate: hold_steps must be >= 1");
  if (cfg.test_count < 1) throw ConfigError("generate: test_count must be >= 1");
  if (cfg.noise_std < 0.0) throw ConfigError("generate: noise_std must be >= 0");
  CheckBox(cfg.start_region, n, "start_region", true);
  CheckBox(cfg.envelope, n, "envelope", false);
  CheckBox(cfg.test_region, n, "test_region", true);
  for (int i = 0; i < n; ++i) {
    const Interval& s = cfg.start_region.dims[i];
    const Interval& e = cfg.envelope.dims[i];
    if (s.lo < e.lo || s.hi > e.hi) {
      throw ConfigError("generate: start_region leaves the envelope in dim " +
                        std::to_string(i));
    }
  }
  double gap = BoxDistance(cfg.envelope, cfg.test_region);
  if (gap < cfg.ood_margin) {
    std::ostringstream msg;
    msg << "generate: ood_margin violated: envelope and test_region are "
        << gap << " apart, ood_margin requires " << cfg.ood_margin;
    throw ConfigError(msg.str());
  }
}

DatasetBundle GenerateBundle(const SystemModel& sys,
                             const GenerationConfig& cfg, uint64_t seed) {
  ValidateGenerationConfig(sys, cfg);
  Rng offline_rng(DeriveSeed(seed, 0));
  Rng online_rng(DeriveSeed(seed, 1));
  Rng test_rng(DeriveSeed(seed, 2));
  Rng noise_rng(DeriveSeed(seed, 3));

  DatasetBundle bundle;
  bundle.meta = {seed, sys.name(), cfg.noise_std};
  for (int k = 0; k < cfg.trajectories; ++k) {
    bundle.offline.push_back(SampleTrajectory(sys, cfg, offline_rng));
  }
  bundle.online = SampleTrajectory(sys, cfg, online_rng);
  for (auto& traj : bundle.offline) AddDerivativeNoise(traj, cfg.noise_std, noise_rng);
  AddDerivativeNoise(bundle.online, cfg.noise_std, noise_rng);

  const int n = sys.state_dim();
  const int m = sys.control_dim();
  Triples& test = bundle.test;
  test.states.resize(cfg.test_count, n);
  test.controls.resize(cfg.test_count, m);
  test.derivs.resize(cfg.test_count, n);
  for (int i = 0; i < cfg.test_count; ++i) {
    Vector x = SampleBox(cfg.test_region, test_rng);
    Vector u = SampleControl(sys, test_rng);
    test.states.row(i) = x.transpose();
    test.controls.row(i) = u.transpose();
    test.derivs.row(i) = sys.Dynamics(x, u).transpose();
  }

  Triples train = Flatten(bundle, kOffline | kOnline);
  double attained = NearestDistances(test.states, train.states).minCoeff();
  if (attained < cfg.ood_margin) {
    throw ConfigError("generate: attained OOD margin " +
                      std::to_string(attained) + " below ood_margin");
  }
  return bundle;
}

Triples Flatten(const DatasetBundle& bundle, unsigned which) {
  std::vector<const Trajectory*> trajs;
  if (which & kOffline) {
    for (const auto& t : bundle.offline) trajs.push_back(&t);
  }
  if ((which & kOnline) && bundle.online.length() > 0) {
    trajs.push_back(&bundle.online);
  }
  int rows = 0;
  for (const auto* t : trajs) rows += t->length();
  if (which & kTest) rows += bundle.test.size();

  int n = 0, m = 0;
  if (!bundle.offline.empty()) {
    n = bundle.state_dim();
    m = bundle.control_dim();
  } else if (bundle.test.size() > 0) {
    n = bundle.test.states.cols();
    m = bundle.test.controls.cols();
  }
  Triples out;
  out.states.resize(rows, n);
  out.controls.resize(rows, m);
  out.derivs.resize(rows, n);
  int r = 0;
  for (const auto* t : trajs) {
    for (int i = 0; i < t->length(); ++i, ++r) {
      out.states.row(r) = t->states.row(i);
      out.controls.row(r) = t->ControlAt(i).transpose();
      out.derivs.row(r) = t->derivs.row(i);
    }
  }
  if (which & kTest) {
    const int k = bundle.test.size();
    out.states.middleRows(r, k) = bundle.test.states;
    out.controls.middleRows(r, k) = bundle.test.controls;
    out.derivs.middleRows(r, k) = bundle.test.derivs;
  }
  return out;
}

Vector NearestDistances(const Matrix& queries, const Matrix& references) {
  Vector out(queries.rows());
  for (int i = 0; i < queries.rows(); ++i) {
    out[i] = (references.rowwise() - queries.row(i)).rowwise().norm().minCoeff();
  }
  return out;
}

// serialization

namespace {

constexpr const char* kManifestName = "bundle.manifest.json";
constexpr const char* kFormatVersion = "1";

json MatrixToJson(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json VectorToJson(const Eigen::Ref<const Vector>& v) {
  json row = json::array();
  for (int i = 0; i < v.size(); ++i) row.push_back(v[i]);
  return row;
}

Matrix MatrixFromJson(const json& j, int cols, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": expected an array of rows");
  Matrix m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols) {
      throw FormatError(where + ": row " + std::to_string(i) + " has wrong width");
    }
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

json TrajectoryToJson(const Trajectory& t) {
  return {{"dt", t.dt},
          {"states", MatrixToJson(t.states)},
          {"controls", MatrixToJson(t.controls)},
          {"derivs", MatrixToJson(t.derivs)}};
}

Trajectory TrajectoryFromJson(const json& j, int n, int m,
                              const std::string& where) {
  Trajectory t;
  t.dt = j.at("dt").get<double>();
  t.states = MatrixFromJson(j.at("states"), n, where + " states");
  t.controls = MatrixFromJson(j.at("controls"), m, where + " controls");
  t.derivs = MatrixFromJson(j.at("derivs"), n, where + " derivs");
  if (t.states.rows() < 2 || t.controls.rows() != t.states.rows() - 1 ||
      t.derivs.rows() != t.states.rows()) {
    throw FormatError(where + ": inconsistent row counts");
  }
  if (!t.states.allFinite() || !t.controls.allFinite() || !t.derivs.allFinite()) {
    throw FormatError(where + ": non-finite entries");
  }
  return t;
}

std::vector<std::string> ReadLines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string SerializeTrajectories(const std::vector<Trajectory>& trajs) {
  std::string out;
  for (const auto& t : trajs) {
    out += TrajectoryToJson(t).dump();
    out += '\n';
  }
  return out;
}

std::string SerializeTest(const Triples& test) {
  std::string out;
  for (int i = 0; i < test.size(); ++i) {
    json j = {{"state", VectorToJson(test.states.row(i).transpose())},
              {"control", VectorToJson(test.controls.row(i).transpose())},
              {"deriv", VectorToJson(test.derivs.row(i).transpose())}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void WriteFile(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << content;
}

}  // namespace

std::string BundleFingerprint(const DatasetBundle& bundle) {
  Fingerprint fp;
  fp.Add(SerializeTrajectories(bundle.offline));
  fp.Add(SerializeTrajectories({bundle.online}));
  fp.Add(SerializeTest(bundle.test));
  return fp.hex();
}

void SaveBundle(const DatasetBundle& bundle, const fs::path& dir) {
  if (bundle.offline.empty()) throw ContractViolation("SaveBundle: no offline data");
  fs::create_directories(dir);
  WriteFile(dir / "offline.traj.jsonl", SerializeTrajectories(bundle.offline));
  WriteFile(dir / "online.traj.jsonl", SerializeTrajectories({bundle.online}));
  WriteFile(dir / "test.traj.jsonl", SerializeTest(bundle.test));
  json manifest = {
      {"version", kFormatVersion},
      {"system", bundle.meta.system},
      {"seed", bundle.meta.seed},
      {"noise_std", bundle.meta.noise_std},
      {"state_dim", bundle.state_dim()},
      {"control_dim", bundle.control_dim()},
      {"dt", bundle.dt()},
      {"offline_count", bundle.offline.size()},
      {"test_count", bundle.test.size()},
      {"files",
       {{"offline", "offline.traj.jsonl"},
        {"online", "online.traj.jsonl"},
        {"test", "test.traj.jsonl"}}},
      {"fingerprint", BundleFingerprint(bundle)},
  };
  WriteFile(dir / kManifestName, manifest.dump(2) + "\n");
}

DatasetBundle LoadBundle(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("missing " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  try {
    if (manifest.at("version").get<std::string>() != kFormatVersion) {
      throw FormatError(manifest_path.string() + ": unsupported version " +
                        manifest.at("version").dump());
    }
    DatasetBundle bundle;
    bundle.meta.seed = manifest.at("seed").get<uint64_t>();
    bundle.meta.system = manifest.at("system").get<std::string>();
    bundle.meta.noise_std = manifest.at("noise_std").get<double>();
    const int n = manifest.at("state_dim").get<int>();
    const int m = manifest.at("control_dim").get<int>();
    const auto& files = manifest.at("files");

    const fs::path offline_path = dir / files.at("offline").get<std::string>();
    for (const auto& line : ReadLines(offline_path)) {
      bundle.offline.push_back(TrajectoryFromJson(json::parse(line), n, m,
                                                  offline_path.string()));
    }
    const fs::path online_path = dir / files.at("online").get<std::string>();
    auto online_lines = ReadLines(online_path);
    if (online_lines.size() != 1) {
      throw FormatError(online_path.string() + ": expected one trajectory");
    }
    bundle.online = TrajectoryFromJson(json::parse(online_lines[0]), n, m,
                                       online_path.string());

    const fs::path test_path = dir / files.at("test").get<std::string>();
    auto test_lines = ReadLines(test_path);
    Triples& test = bundle.test;
    test.states.resize(test_lines.size(), n);
    test.controls.resize(test_lines.size(), m);
    test.derivs.resize(test_lines.size(), n);
    for (size_t i = 0; i < test_lines.size(); ++i) {
      json j = json::parse(test_lines[i]);
      test.states.row(i) = MatrixFromJson(json::array({j.at("state")}), n,
                                          test_path.string()).row(0);
      test.controls.row(i) = MatrixFromJson(json::array({j.at("control")}), m,
                                            test_path.string()).row(0);
      test.derivs.row(i) = MatrixFromJson(json::array({j.at("deriv")}), n,
                                          test_path.string()).row(0);
    }

    if (bundle.offline.empty() || test.size() == 0) {
      throw FormatError(dir.string() + ": bundle needs offline and test data");
    }
    if (static_cast<int>(bundle.offline.size()) !=
            manifest.at("offline_count").get<int>() ||
        test.size() != manifest.at("test_count").get<int>()) {
      throw FormatError(manifest_path.string() + ": counts do not match files");
    }
    for (const auto& t : bundle.offline) {
      if (t.dt != bundle.online.dt) {
        throw FormatError(dir.string() + ": trajectories disagree on dt");
      }
    }
    if (BundleFingerprint(bundle) != manifest.at("fingerprint").get<std::string>()) {
      throw FormatError(manifest_path.string() + ": fingerprint mismatch");
    }
    return bundle;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
}

// pair selection

PairSelection SelectPairs(const Matrix& inputs, const Matrix& labels,
                          double eps, int batch) {
  const int count = inputs.rows();
  if (count < 2) throw ContractViolation("SelectPairs: need at least 2 items");
  if (labels.rows() != count) {
    throw ContractViolation("SelectPairs: inputs and labels differ in length");
  }
  if (eps < 0.0) throw ContractViolation("SelectPairs: eps must be >= 0");
  if (batch < 1) throw ContractViolation("SelectPairs: batch must be >= 1");

  PairSelection out;
  const double eps_sq = eps * eps;
  for (int i = 0; i < count; ++i) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int j = 0; j < count; ++j) {
      if (j == i) continue;
      if ((inputs.row(i) - inputs.row(j)).squaredNorm() < eps_sq) continue;
      double d = (labels.row(i) - labels.row(j)).squaredNorm();
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    if (best < 0) {
      out.skipped.push_back(i);
      continue;
    }
    SamplePair pair;
    pair.anchor = i;
    pair.positive = best;
    const int start = (i / batch) * batch;
    const int stop = std::min(count, start + batch);
    for (int k = start; k < stop; ++k) {
      if (k != i && k != best) pair.negatives.push_back(k);
    }
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

double MedianPairwiseDistance(const Matrix& inputs) {
  const int count = inputs.rows();
  if (count < 2) return 0.0;
  const int stride = std::max(1, count / 2000);
  std::vector<double> dists;
  for (int i = 0; i < count; i += stride) {
    for (int j = i + stride; j < count; j += stride) {
      dists.push_back((inputs.row(i) - inputs.row(j)).norm());
    }
  }
  auto mid = dists.begin() + dists.size() / 2;
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

}  // namespace nhlearn
